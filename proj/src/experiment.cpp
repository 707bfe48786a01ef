#include "psdet/experiment.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <spdlog/spdlog.h>

#include "psdet/counter_rng.hpp"
#include "psdet/errors.hpp"
#include "psdet/fnv.hpp"

namespace psdet {

void validate(const ExperimentConfig& cfg) {
  if (cfg.metrics.empty()) {
    throw UsageError("at least one metric is required");
  }
  if (cfg.workers < 1) {
    throw UsageError("parallelism must be >= 1");
  }
  try {
    validate(cfg.thresholds);
    validate(cfg.buckets);
    AnchorGridSpec probe = cfg.anchors;
    probe.image_w = probe.image_h = 1.0;
    validate(probe);
  } catch (const UsageError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

void for_each_chunk(std::size_t count, std::size_t workers,
                    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, workers);
  if (workers == 1) {
    fn(0, count, 0);
    return;
  }
  const std::size_t per = count / workers;
  const std::size_t extra = count % workers;
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    std::size_t begin = 0;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t end = begin + per + (w < extra ? 1 : 0);
      pool.emplace_back([&, begin, end, w] {
        try {
          fn(begin, end, w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
      begin = end;
    }
  }
  for (const auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
}

namespace {

AnchorGridSpec spec_for(const AnchorGridSpec& spec, const ImageInfo& img) {
  AnchorGridSpec out = spec;
  out.image_w = img.width;
  out.image_h = img.height;
  return out;
}

std::vector<double> areas_of(const std::vector<Box>& boxes) {
  std::vector<double> out;
  out.reserve(boxes.size());
  for (const Box& b : boxes) {
    out.push_back(b.area());
  }
  return out;
}

}  // namespace

NormalizerAccumulator accumulate_dataset(const DatasetIndex& index, const AnchorGridSpec& spec,
                                         std::size_t workers) {
  workers = std::max<std::size_t>(1, std::min(workers, std::max<std::size_t>(1, index.image_count())));
  std::vector<NormalizerAccumulator> partial(workers);
  for_each_chunk(index.image_count(), workers, [&](std::size_t begin, std::size_t end, std::size_t w) {
    NormalizerAccumulator acc;
    for (std::size_t i = begin; i < end; ++i) {
      const auto gts = index.boxes(i);
      if (gts.empty()) {
        continue;
      }
      const AnchorSet anchors = generate_anchors(spec_for(spec, index.images[i]));
      acc = psdet::accumulate(acc, gts, anchors.boxes);
    }
    partial[w] = acc;
  });
  NormalizerAccumulator total;
  for (const auto& p : partial) {
    total.merge(p);
  }
  return total;
}

StatsOutcome compute_normalizers(const DatasetIndex& index, const ExperimentConfig& cfg) {
  StatsOutcome out;
  out.cache.dataset_hash = dataset_hash(index);
  out.cache.anchor_spec_hash = anchor_spec_hash(cfg.anchors);

  if (!cfg.cache_path.empty()) {
    if (auto cached = read_normalizer_cache(cfg.cache_path)) {
      if (cached->dataset_hash == out.cache.dataset_hash &&
          cached->anchor_spec_hash == out.cache.anchor_spec_hash) {
        spdlog::info("normalizer cache hit: {}", cfg.cache_path);
        out.cache = *cached;
        out.cache_hit = true;
        return out;
      }
      spdlog::info("normalizer cache {} is stale; recomputing", cfg.cache_path);
    }
  }

  const NormalizerAccumulator acc = accumulate_dataset(index, cfg.anchors, cfg.workers);
  if (acc.pair_count == 0) {
    throw DataError(DataErrorKind::empty_dataset,
                    "dataset has no gt/anchor pairs; normalizers are undefined");
  }
  out.cache.normalizers = finalize(acc);
  out.cache.pair_count = acc.pair_count;
  if (!cfg.cache_path.empty()) {
    write_normalizer_cache(out.cache, cfg.cache_path);
  }
  return out;
}

StatsOutcome cmd_stats(const ExperimentConfig& cfg, std::ostream& log) {
  validate(cfg);
  if (cfg.cache_path.empty()) {
    throw UsageError("stats needs an output cache path (--out)");
  }
  const DatasetIndex index = load_coco(cfg.annotations);
  StatsOutcome out = compute_normalizers(index, cfg);
  fmt::print(log, "images      {}\n", index.image_count());
  fmt::print(log, "gts         {}\n", index.gt_count() - index.crowd_count());
  fmt::print(log, "m           {}\n", out.cache.normalizers.m);
  fmt::print(log, "n           {}\n", out.cache.normalizers.n);
  fmt::print(log, "pair_count  {}\n", out.cache.pair_count);
  fmt::print(log, "cache       {} ({})\n", cfg.cache_path, out.cache_hit ? "hit" : "written");
  return out;
}

AssignReport run_assignment(const DatasetIndex& index, const ExperimentConfig& cfg,
                            const std::optional<DatasetNormalizers>& norm,
                            std::uint64_t pair_count) {
  validate(cfg);
  const DatasetNormalizers used = norm.value_or(DatasetNormalizers{});
  const std::size_t workers =
      std::max<std::size_t>(1, std::min(cfg.workers, std::max<std::size_t>(1, index.image_count())));

  auto fresh = [&] {
    std::vector<StatsAccumulator> accs;
    for (Metric m : cfg.metrics) {
      accs.emplace_back(to_string(m), cfg.thresholds, cfg.buckets);
    }
    return accs;
  };
  std::vector<std::vector<StatsAccumulator>> partial(workers);

  for_each_chunk(index.image_count(), workers, [&](std::size_t begin, std::size_t end, std::size_t w) {
    auto accs = fresh();
    for (std::size_t i = begin; i < end; ++i) {
      const auto gts = index.boxes(i);
      const auto areas = areas_of(gts);
      const AnchorSet anchors = generate_anchors(spec_for(cfg.anchors, index.images[i]));
      for (std::size_t k = 0; k < cfg.metrics.size(); ++k) {
        const AssignResult result =
            cfg.mode == AssignMode::pooled
                ? assign_with_metric(gts, anchors.boxes, used, cfg.thresholds, cfg.metrics[k])
                : assign_per_level(gts, anchors, used, cfg.thresholds, cfg.metrics[k]);
        accs[k].add_image(result, areas);
      }
    }
    partial[w] = std::move(accs);
  });

  auto total = fresh();
  for (const auto& p : partial) {
    for (std::size_t k = 0; k < total.size(); ++k) {
      total[k].merge(p[k]);
    }
  }

  AssignReport report;
  report.dataset_hash = dataset_hash(index);
  report.anchor_spec_hash = anchor_spec_hash(cfg.anchors);
  report.anchor_spec = cfg.anchors;
  report.mode = cfg.mode;
  report.normalizers = norm;
  report.pair_count = pair_count;
  report.thresholds = cfg.thresholds;
  report.bucket_edges = cfg.buckets.edges;
  for (const auto& acc : total) {
    report.metrics.push_back(acc.report());
  }
  return report;
}

AssignReport cmd_assign(const ExperimentConfig& cfg, std::ostream& log) {
  validate(cfg);
  if (cfg.out_dir.empty()) {
    throw UsageError("assign needs an output directory (--out)");
  }
  const DatasetIndex index = load_coco(cfg.annotations);

  std::optional<DatasetNormalizers> norm;
  std::uint64_t pair_count = 0;
  if (index.gt_count() > index.crowd_count()) {
    const StatsOutcome stats = compute_normalizers(index, cfg);
    norm = stats.cache.normalizers;
    pair_count = stats.cache.pair_count;
  } else {
    spdlog::info("dataset has no scorable gts; every anchor will be negative");
  }

  const AssignReport report = run_assignment(index, cfg, norm, pair_count);

  std::filesystem::create_directories(cfg.out_dir);
  const auto json_path = std::filesystem::path(cfg.out_dir) / "report.json";
  const auto csv_path = std::filesystem::path(cfg.out_dir) / "report.csv";
  {
    std::ofstream out(json_path, std::ios::binary);
    out << to_json(report).dump(2) << '\n';
    if (!out) {
      throw UsageError(fmt::format("cannot write {}", json_path.string()));
    }
  }
  {
    std::ofstream out(csv_path, std::ios::binary);
    out << to_csv(report);
    if (!out) {
      throw UsageError(fmt::format("cannot write {}", csv_path.string()));
    }
  }

  if (norm) {
    fmt::print(log, "normalizers m={} n={} (pairs {})\n", norm->m, norm->n, pair_count);
  }
  fmt::print(log, "{:<6} {:<10} {:>8} {:>12} {:>14} {:>12}\n", "metric", "bucket", "gts",
             "positives", "mean_pos/gt", "zero_pos_gts");
  for (const auto& s : report.metrics) {
    for (const auto& b : s.buckets) {
      fmt::print(log, "{:<6} {:<10} {:>8} {:>12} {:>14.4f} {:>12}\n", s.metric, b.name,
                 b.gt_count, b.positive_anchors, b.mean_positives_per_gt(),
                 b.gts_without_positive);
    }
  }
  fmt::print(log, "wrote {} and {}\n", json_path.string(), csv_path.string());
  return report;
}

ContrastDemoOutcome cmd_contrast_demo(const ContrastDemoConfig& cfg, std::ostream& log) {
  EmbeddingBatch batch;
  if (!cfg.batch_in.empty()) {
    try {
      batch = read_batch(cfg.batch_in);
    } catch (const std::invalid_argument& e) {
      throw DataError(DataErrorKind::malformed, fmt::format("{}: {}", cfg.batch_in, e.what()));
    } catch (const std::runtime_error& e) {
      throw DataError(DataErrorKind::unreadable, fmt::format("{}: {}", cfg.batch_in, e.what()));
    }
  } else {
    try {
      validate(cfg.pyramid);
      batch = build_embedding_batch(cfg.pyramid, cfg.dim);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  try {
    validate(cfg.contrast);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!cfg.batch_out.empty()) {
    write_batch(batch, cfg.batch_out);
  }

  ContrastDemoOutcome out;
  out.spatial = spatial_loss(batch, cfg.contrast);
  out.semantic = semantic_loss(batch, cfg.contrast);
  try {
    out.total = total_loss({out.spatial, out.semantic, cfg.psrpn_loss, cfg.alpha});
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  out.gradcheck = check_contrast_grad(batch, cfg.contrast, cfg.fd_step, cfg.tolerance);

  fmt::print(log, "batch       L={} N={} D={} tau={}\n", batch.levels(), batch.images(),
             batch.dim(), cfg.contrast.tau);
  fmt::print(log, "L_s         {:.12g}\n", out.spatial);
  fmt::print(log, "L_sem       {:.12g}\n", out.semantic);
  fmt::print(log, "L_total     {:.12g}  (alpha={}, L_psrpn={})\n", out.total, cfg.alpha,
             cfg.psrpn_loss);
  fmt::print(log, "gradcheck   entries={} max_rel={:.3e} max_abs={:.3e} tol={:.1e} {}\n",
             out.gradcheck.entries, out.gradcheck.max_rel_error, out.gradcheck.max_abs_error,
             out.gradcheck.tolerance, out.gradcheck.passed ? "PASS" : "FAIL");
  return out;
}

std::string labels_hash(const AssignResult& result) {
  Fnv1a64 h;
  for (std::size_t a = 0; a < result.size(); ++a) {
    h.byte(static_cast<unsigned char>(result.labels[a]));
    h.u64(result.gt_index[a] ? *result.gt_index[a] + 1 : 0);
  }
  return h.hex();
}

BenchWorkload make_bench_workload(const BenchConfig& cfg) {
  constexpr double kFrame = 1024.0;
  BenchWorkload w;
  CounterStream gts(cfg.seed, 1);
  CounterStream anchors(cfg.seed, 2);
  w.gts.reserve(cfg.gts_n);
  for (std::size_t i = 0; i < cfg.gts_n; ++i) {
    w.gts.push_back(make_box(gts.uniform(0.0, kFrame), gts.uniform(0.0, kFrame),
                             gts.uniform(4.0, 64.0), gts.uniform(4.0, 64.0)));
  }
  w.anchors.reserve(cfg.anchors_n);
  for (std::size_t i = 0; i < cfg.anchors_n; ++i) {
    w.anchors.push_back(make_box(anchors.uniform(0.0, kFrame), anchors.uniform(0.0, kFrame),
                                 anchors.uniform(8.0, 256.0), anchors.uniform(8.0, 256.0)));
  }
  return w;
}

BenchOutcome cmd_bench(const BenchConfig& cfg, std::ostream& log) {
  if (cfg.anchors_n == 0 || cfg.gts_n == 0 || cfg.repeats == 0) {
    throw UsageError("bench needs --anchors-n, --gts-n and --repeats >= 1");
  }
  const BenchWorkload w = make_bench_workload(cfg);
  BenchOutcome out;
  out.normalizers = finalize(psdet::accumulate(NormalizerAccumulator{}, w.gts, w.anchors));

  using Clock = std::chrono::steady_clock;
  const double pairs = static_cast<double>(cfg.anchors_n) * static_cast<double>(cfg.gts_n);
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    const auto t0 = Clock::now();
    const ScoreMatrix scores = ps_matrix(w.gts, w.anchors, out.normalizers);
    const auto t1 = Clock::now();
    const AssignResult result = assign(scores, cfg.thresholds);
    const auto t2 = Clock::now();

    BenchRun run;
    run.score_seconds = std::chrono::duration<double>(t1 - t0).count();
    run.assign_seconds = std::chrono::duration<double>(t2 - t1).count();
    run.total_seconds = run.score_seconds + run.assign_seconds;
    run.pairs_per_second = pairs / run.total_seconds;
    run.positives = static_cast<std::uint64_t>(
        std::count(result.labels.begin(), result.labels.end(), Label::positive));
    run.labels_hash = labels_hash(result);
    out.runs.push_back(run);
  }

  fmt::print(log, "workload    {} anchors x {} gts, m={:.6g} n={:.6g}\n", cfg.anchors_n,
             cfg.gts_n, out.normalizers.m, out.normalizers.n);
  fmt::print(log, "{:>4} {:>10} {:>10} {:>10} {:>14} {:>10} {:>18}\n", "run", "score_s",
             "assign_s", "total_s", "pairs/s", "positives", "labels_hash");
  for (std::size_t r = 0; r < out.runs.size(); ++r) {
    const auto& run = out.runs[r];
    fmt::print(log, "{:>4} {:>10.4f} {:>10.4f} {:>10.4f} {:>14.4e} {:>10} {:>18}\n", r,
               run.score_seconds, run.assign_seconds, run.total_seconds, run.pairs_per_second,
               run.positives, run.labels_hash);
  }
  return out;
}

}  // namespace psdet
