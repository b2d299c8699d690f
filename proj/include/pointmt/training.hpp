#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "pointmt/dataio.hpp"
#include "pointmt/model.hpp"

namespace pointmt {

enum class OptimizerKind { adam, sgd };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& s);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t cycle_length = 30;
  double lr_max = 1e-3;
  double lr_min = 1e-5;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double momentum = 0.9;  // sgd only
  bool augment_rotate = false;
  double augment_jitter = 0.0;
  std::size_t threads = 0;  // 0 = all cores
  bool record_wall_time = true;

  /// Three 30-epoch cycles from 1e-3 to 1e-5.
  static TrainConfig reference();

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based: the record is written after this many epochs
  double lr = 0;
  double train_loss = 0;
  double train_acc = 0;
  double test_acc = 0;
  double wall_time = 0;  // seconds since the start of the run

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

inline constexpr const char* kMetricsHeader = "epoch,lr,train_loss,train_acc,test_acc,wall_time";
std::string format_record(const EpochRecord& r);

/// -log softmax(logits)[label], evaluated with the max shift in 64-bit.
template <typename T>
double cross_entropy(const Tensor<T>& logits, std::size_t label);

/// lr_min + (lr_max - lr_min)(1 + cos(pi t / cycle)) / 2 with t = epoch mod
/// cycle; every cycle restarts at lr_max.
double cosine_annealing_lr(std::size_t epoch, const TrainConfig& cfg);

struct EvalResult {
  double overall_accuracy = 0;
  double mean_class_accuracy = 0;
  std::vector<std::size_t> predictions;
  std::vector<std::size_t> absent_classes;  // excluded from the class mean
};

/// OA and mAcc from predicted and true labels.
EvalResult score_predictions(const std::vector<std::size_t>& predictions,
                             const std::vector<std::size_t>& labels, std::size_t num_classes);

template <typename T>
EvalResult evaluate(const Classifier<T>& model, const Dataset& ds, std::size_t threads = 0);

struct FitOptions {
  /// Metrics CSV, per-cycle checkpoints and model.json land here when set.
  std::filesystem::path out_dir;
  /// Stored in every checkpoint manifest.
  nlohmann::json metadata = nlohmann::json::object();
  /// Called after every epoch.
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Mini-batch training with per-sample graphs. Per-sample gradients are
/// computed in parallel and summed in sample order, so results do not depend
/// on the thread count. Throws NumericalError on a non-finite loss.
template <typename T>
std::vector<EpochRecord> fit(Classifier<T>& model, const Dataset& train, const Dataset& test,
                             const TrainConfig& cfg, const FitOptions& options = {});

void write_metrics_csv(const std::vector<EpochRecord>& records, const std::filesystem::path& path);
std::vector<EpochRecord> read_metrics_csv(const std::filesystem::path& path);

/// Dataset cloud converted to the model precision.
template <typename T>
Tensor<T> cloud_coords(const PointCloud<float>& cloud) {
  return cloud.coords.template cast<T>();
}

}  // namespace pointmt
