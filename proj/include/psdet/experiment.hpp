#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "psdet/assigner.hpp"
#include "psdet/coco.hpp"
#include "psdet/config_io.hpp"
#include "psdet/contrast.hpp"
#include "psdet/gradcheck.hpp"
#include "psdet/report.hpp"
#include "psdet/toy_fpn.hpp"

namespace psdet {

struct ExperimentConfig {
  std::string annotations;
  AnchorGridSpec anchors = default_anchor_spec(0.0, 0.0);
  AssignThresholds thresholds;
  std::vector<Metric> metrics{Metric::ps, Metric::iou};
  Bucketing buckets;
  AssignMode mode = AssignMode::pooled;
  std::string cache_path;  // normalizer cache; optional for assign
  std::size_t workers = 1;
  std::string out_dir;     // assign writes report.json and report.csv here
};

// Throws UsageError.
void validate(const ExperimentConfig& cfg);

// Runs fn(begin, end, worker) over contiguous index chunks, one per worker,
// worker w getting the w-th chunk. Returns after all chunks finish.
void for_each_chunk(std::size_t count, std::size_t workers,
                    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

// Streams every image; per-worker accumulators are merged in worker order.
NormalizerAccumulator accumulate_dataset(const DatasetIndex& index, const AnchorGridSpec& spec,
                                         std::size_t workers);

struct StatsOutcome {
  NormalizerCache cache;
  bool cache_hit = false;
};

// Loads (or reuses via the cache) the dataset normalizers. With an empty cache
// path nothing is written.
StatsOutcome compute_normalizers(const DatasetIndex& index, const ExperimentConfig& cfg);

StatsOutcome cmd_stats(const ExperimentConfig& cfg, std::ostream& log);

AssignReport run_assignment(const DatasetIndex& index, const ExperimentConfig& cfg,
                            const std::optional<DatasetNormalizers>& norm,
                            std::uint64_t pair_count);

// Writes <out_dir>/report.json and <out_dir>/report.csv.
AssignReport cmd_assign(const ExperimentConfig& cfg, std::ostream& log);

struct ContrastDemoConfig {
  ToyPyramidConfig pyramid;
  std::size_t dim = 16;
  ContrastConfig contrast;
  double alpha = 0.1;
  double psrpn_loss = 0.0;
  double fd_step = 1e-4;
  double tolerance = 1e-5;
  std::string batch_in;   // read this NTFB file instead of building a toy batch
  std::string batch_out;  // save the batch used
};

struct ContrastDemoOutcome {
  double spatial = 0.0;
  double semantic = 0.0;
  double total = 0.0;
  GradCheckReport gradcheck;
};

ContrastDemoOutcome cmd_contrast_demo(const ContrastDemoConfig& cfg, std::ostream& log);

struct BenchConfig {
  std::size_t anchors_n = 100000;
  std::size_t gts_n = 100;
  std::size_t repeats = 3;
  std::uint64_t seed = 1;
  AssignThresholds thresholds;
};

struct BenchRun {
  double score_seconds = 0.0;
  double assign_seconds = 0.0;
  double total_seconds = 0.0;
  double pairs_per_second = 0.0;
  std::uint64_t positives = 0;
  std::string labels_hash;
};

struct BenchOutcome {
  DatasetNormalizers normalizers;
  std::vector<BenchRun> runs;
};

// Synthetic workload: gts of side 4-64 px and anchors of side 8-256 px,
// uniformly placed in a 1024 x 1024 frame.
struct BenchWorkload {
  std::vector<Box> gts;
  std::vector<Box> anchors;
};
BenchWorkload make_bench_workload(const BenchConfig& cfg);

BenchOutcome cmd_bench(const BenchConfig& cfg, std::ostream& log);

std::string labels_hash(const AssignResult& result);

}  // namespace psdet
