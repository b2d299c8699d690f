#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pointmt/attention.hpp"
#include "pointmt/dataio.hpp"
#include "pointmt/model.hpp"
#include "pointmt/training.hpp"

namespace pointmt {

// --- KL statistics and point discriminability --------------------------------

inline constexpr double kKlFloor = 1e-12;

/// sum_i p_i ln(p_i / max(q_i, 1e-12)) with 0 ln 0 = 0. Both inputs must sum
/// to 1 within 1e-6.
double kl_divergence(std::span<const double> p, std::span<const double> q);

struct SampleKlRecord {
  std::size_t sample = 0;
  double mean_kl = 0;
  double correct_fraction = 0;
};

/// Statistics of one sample from its shape logit (1 x K) and point logits
/// (N x K): mean KL(softmax(point) || softmax(shape)) over the points and the
/// share of points whose argmax is `label`.
template <typename T>
SampleKlRecord sample_kl_record(std::size_t sample, const Tensor<T>& shape_logit,
                                const Tensor<T>& point_logits, std::size_t label);

struct Histogram {
  double lo = 0, hi = 0;
  std::vector<std::size_t> counts;
};

/// `bins` uniform bins over [0, max value]; the maximum lands in the last bin.
Histogram histogram(const std::vector<double>& values, std::size_t bins = 40);

struct SpfStatistics {
  std::vector<SampleKlRecord> records;
  double mean_kl = 0;
  double mean_correct_fraction = 0;
  Histogram kl_histogram;
  std::size_t skipped = 0;  // unlabeled samples
};

SpfStatistics summarize(std::vector<SampleKlRecord> records, std::size_t skipped = 0);

/// A traditional-head model is evaluated with the shared classifier applied
/// to its point features as well. Unlabeled samples are skipped with a
/// warning.
template <typename T>
SpfStatistics spf_statistics(const Classifier<T>& model, const Dataset& ds, std::size_t threads = 0);

void write_kl_stats_csv(const SpfStatistics& stats, const std::filesystem::path& path);

// --- Branch comparison --------------------------------------------------------

struct BranchRun {
  BranchMode mode = BranchMode::hybrid;
  std::vector<EpochRecord> records;
};

/// Trains one model per mode with the same model seed, data and schedule.
/// With `out_dir` set, each run writes into out_dir/<mode>.
template <typename T>
std::vector<BranchRun> convergence_compare(const Dataset& train, const Dataset& test,
                                           const ModelConfig& base, const std::vector<BranchMode>& modes,
                                           const TrainConfig& cfg, std::uint64_t model_seed,
                                           const std::filesystem::path& out_dir = {});

/// Aligned curves: epoch,<mode>_train_loss,<mode>_train_acc,<mode>_test_acc...
void write_convergence_csv(const std::vector<BranchRun>& runs, const std::filesystem::path& path);

// --- Complexity benchmark ------------------------------------------------------

struct BenchConfig {
  std::vector<std::size_t> n_list = {1024};
  std::vector<std::size_t> k_list = {8, 16, 32, 64};
  std::size_t channels = 64;
  std::size_t repeats = 5;
  std::uint64_t seed = 42;

  void validate() const;
};

struct BenchRow {
  AttentionMode mode = AttentionMode::linear;
  std::size_t n = 0, k = 0, c = 0;
  FlopBreakdown flops;
  double median_ms = 0;       // projection and core
  double core_median_ms = 0;  // everything after the projections
};

std::string to_string(AttentionMode mode);

/// Times linear and quadratic local attention (value-level, single thread)
/// on random clouds; FLOP columns come from flop_count.
std::vector<BenchRow> complexity_bench(const BenchConfig& cfg);

/// Columns: mode,n,k,c,flops,median_ms,score_agg_flops,core_flops,core_median_ms.
void write_bench_csv(const std::vector<BenchRow>& rows, const std::filesystem::path& path);

/// Least-squares slope of log(y) against log(x).
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Slope of core time against k for one mode and N.
double time_exponent(const std::vector<BenchRow>& rows, AttentionMode mode, std::size_t n,
                     bool core_only = true);

// --- Exports -------------------------------------------------------------------

/// features.csv: sample,label,prediction,pooled_*,shape_logit_*,combined_*
/// points.csv: sample,point,feature_*,point_logit_*
template <typename T>
void export_features(const Classifier<T>& model, const Dataset& ds, const std::filesystem::path& dir,
                     std::size_t threads = 0);

/// Rows neighbor,channel,neighbor_index,score,token_weight,temperature,weight.
template <typename T>
void write_attention_trace_csv(const AttentionTrace<T>& trace, const NeighborhoodIndex& nbr,
                               const std::filesystem::path& path);

}  // namespace pointmt
