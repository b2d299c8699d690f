#include "pointmt/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "pointmt/checkpoint.hpp"
#include "pointmt/errors.hpp"
#include "pointmt/parallel.hpp"

namespace pointmt {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + s + "' (expected adam or sgd)");
}

TrainConfig TrainConfig::reference() {
  TrainConfig c;
  c.epochs = 90;
  return c;
}

void TrainConfig::validate() const {
  if (cycle_length == 0) throw ConfigError("train.cycle_length must be >= 1");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr_min >= 0) || !(lr_max >= lr_min) || !std::isfinite(lr_max)) {
    throw ConfigError("train.lr_max and train.lr_min must satisfy lr_max >= lr_min >= 0");
  }
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(adam_epsilon > 0)) {
    throw ConfigError("train.beta1/beta2 must lie in [0, 1) and train.adam_epsilon be > 0");
  }
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (!(augment_jitter >= 0)) throw ConfigError("train.augment_jitter must be >= 0");
}

std::string format_record(const EpochRecord& r) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << r.epoch << ',' << r.lr << ','
     << r.train_loss << ',' << r.train_acc << ',' << r.test_acc << ',' << r.wall_time;
  return os.str();
}

template <typename T>
double cross_entropy(const Tensor<T>& logits, std::size_t label) {
  if (label >= logits.size()) {
    throw ArgumentError("cross_entropy: label " + std::to_string(label) + " >= " +
                        std::to_string(logits.size()) + " classes");
  }
  double peak = -std::numeric_limits<double>::infinity();
  for (T v : logits.data()) peak = std::max(peak, static_cast<double>(v));
  double total = 0;
  for (T v : logits.data()) total += std::exp(static_cast<double>(v) - peak);
  return std::log(total) + peak - static_cast<double>(logits[label]);
}

double cosine_annealing_lr(std::size_t epoch, const TrainConfig& cfg) {
  const double t = static_cast<double>(epoch % cfg.cycle_length);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) *
                          (1 + std::cos(std::numbers::pi * t / static_cast<double>(cfg.cycle_length)));
}

EvalResult score_predictions(const std::vector<std::size_t>& predictions,
                             const std::vector<std::size_t>& labels, std::size_t num_classes) {
  if (predictions.size() != labels.size()) throw ArgumentError("score_predictions: length mismatch");
  if (labels.empty()) throw ArgumentError("score_predictions: empty dataset");
  EvalResult r;
  r.predictions = predictions;
  std::vector<std::size_t> total(num_classes), hit(num_classes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw ArgumentError("score_predictions: label out of range");
    ++total[labels[i]];
    if (predictions[i] == labels[i]) ++hit[labels[i]], ++correct;
  }
  r.overall_accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  double sum = 0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (total[c] == 0) {
      r.absent_classes.push_back(c);
      continue;
    }
    sum += static_cast<double>(hit[c]) / static_cast<double>(total[c]);
    ++present;
  }
  r.mean_class_accuracy = sum / static_cast<double>(present);
  return r;
}

namespace {

template <typename T>
std::size_t argmax(const Tensor<T>& logits) {
  return static_cast<std::size_t>(std::max_element(logits.data().begin(), logits.data().end()) -
                                  logits.data().begin());
}

template <typename T>
struct Prepared {
  std::vector<Tensor<T>> coords;
  std::vector<Pyramid<T>> pyramids;
  std::vector<std::size_t> labels;
};

template <typename T>
Prepared<T> prepare_all(const Classifier<T>& model, const Dataset& ds, std::size_t threads) {
  ds.validate();
  Prepared<T> p;
  p.coords.resize(ds.size());
  p.pyramids.resize(ds.size());
  for (const auto& s : ds.samples) p.labels.push_back(*s.label);
  parallel_for(ds.size(), threads, [&](std::size_t i) {
    p.coords[i] = cloud_coords<T>(ds.samples[i]);
    p.pyramids[i] = model.prepare(p.coords[i]);
  });
  return p;
}

template <typename T>
std::vector<std::size_t> predict_all(const Classifier<T>& model, const Prepared<T>& data,
                                     std::size_t threads) {
  std::vector<std::size_t> preds(data.coords.size());
  parallel_for(preds.size(), threads, [&](std::size_t i) {
    Graph<T> g(false);
    preds[i] = argmax(g.value(model.forward(g, g.constant(data.coords[i]), data.pyramids[i]).prediction));
  });
  return preds;
}

void warn_absent(const EvalResult& r, const Dataset& ds) {
  for (std::size_t c : r.absent_classes) {
    std::cerr << "warning: class " << c << " (" << ds.class_names.at(c) << ") has no samples in the "
              << ds.split << " split; excluded from mAcc\n";
  }
}

template <typename T>
Tensor<T> augment(const Tensor<T>& coords, const TrainConfig& cfg, std::mt19937_64& rng) {
  Tensor<T> out = coords;
  if (cfg.augment_rotate) {
    const double t = std::uniform_real_distribution<double>(0, 2 * std::numbers::pi)(rng);
    const double c = std::cos(t), s = std::sin(t);
    for (std::size_t i = 0; i < out.rows(); ++i) {
      const double x = out(i, 0), y = out(i, 1);
      out(i, 0) = static_cast<T>(c * x - s * y);
      out(i, 1) = static_cast<T>(s * x + c * y);
    }
  }
  if (cfg.augment_jitter > 0) {
    std::normal_distribution<double> n(0, cfg.augment_jitter);
    for (auto& v : out.data()) v = static_cast<T>(v + n(rng));
  }
  return out;
}

template <typename T>
class Optimizer {
 public:
  Optimizer(const ParameterStore<T>& store, const TrainConfig& cfg) : cfg_(cfg) {
    for (const auto& p : store.all()) {
      m_.emplace_back(p.value.shape());
      if (cfg.optimizer == OptimizerKind::adam) v_.emplace_back(p.value.shape());
    }
  }

  void step(ParameterStore<T>& store, double lr) {
    ++t_;
    const double bc1 = 1 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < store.size(); ++p) {
      auto& value = store[p].value;
      const auto& grad = store[p].gradient;
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        double m = m_[p][i];
        if (cfg_.optimizer == OptimizerKind::adam) {
          m = cfg_.beta1 * m + (1 - cfg_.beta1) * g;
          const double v = cfg_.beta2 * v_[p][i] + (1 - cfg_.beta2) * g * g;
          v_[p][i] = static_cast<T>(v);
          value[i] = static_cast<T>(value[i] - lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.adam_epsilon));
        } else {
          m = cfg_.momentum * m + g;
          value[i] = static_cast<T>(value[i] - lr * m);
        }
        m_[p][i] = static_cast<T>(m);
      }
    }
  }

 private:
  const TrainConfig& cfg_;
  std::vector<Tensor<T>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace

template <typename T>
EvalResult evaluate(const Classifier<T>& model, const Dataset& ds, std::size_t threads) {
  const Prepared<T> data = prepare_all(model, ds, threads);
  auto r = score_predictions(predict_all(model, data, threads), data.labels, ds.num_classes());
  warn_absent(r, ds);
  return r;
}

void write_metrics_csv(const std::vector<EpochRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << kMetricsHeader << '\n';
  for (const auto& r : records) out << format_record(r) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::vector<EpochRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kMetricsHeader) throw ParseError(path.string() + ": unexpected metrics header", 0);
  std::vector<EpochRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    EpochRecord r;
    char comma = 0;
    is >> r.epoch >> comma >> r.lr >> comma >> r.train_loss >> comma >> r.train_acc >> comma >>
        r.test_acc >> comma >> r.wall_time;
    if (!is) throw ParseError(path.string() + ": malformed metrics row '" + line + "'", 0);
    out.push_back(r);
  }
  return out;
}

template <typename T>
std::vector<EpochRecord> fit(Classifier<T>& model, const Dataset& train, const Dataset& test,
                             const TrainConfig& cfg, const FitOptions& options) {
  cfg.validate();
  if (train.size() == 0) throw ArgumentError("fit: empty training set");
  if (train.num_classes() != model.config().num_classes) {
    throw ConfigError("fit: dataset has " + std::to_string(train.num_classes()) +
                      " classes, model.num_classes = " + std::to_string(model.config().num_classes));
  }
  const auto start = std::chrono::steady_clock::now();
  const std::size_t threads = cfg.threads;
  const Prepared<T> train_data = prepare_all(model, train, threads);
  const Prepared<T> test_data = prepare_all(model, test, threads);

  const bool writing = !options.out_dir.empty();
  std::ofstream metrics;
  auto checkpoint = [&](const std::string& name, std::size_t epoch) {
    if (!writing) return;
    nlohmann::json meta = options.metadata;
    meta["epoch"] = epoch;
    save_checkpoint(model.parameters(), options.out_dir / name, meta);
  };
  if (writing) {
    std::filesystem::create_directories(options.out_dir);
    metrics.open(options.out_dir / "metrics.csv");
    metrics << kMetricsHeader << '\n' << std::flush;
    if (!metrics) throw std::runtime_error("cannot write " + (options.out_dir / "metrics.csv").string());
  }

  auto& store = model.parameters();
  Optimizer<T> optimizer(store, cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochRecord> records;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_annealing_lr(epoch, cfg);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t begin = 0, batch = 0; begin < order.size(); begin += cfg.batch_size, ++batch) {
      const std::size_t size = std::min(cfg.batch_size, order.size() - begin);
      std::vector<Tensor<T>> augmented;
      if (cfg.augment_rotate || cfg.augment_jitter > 0) {
        for (std::size_t b = 0; b < size; ++b) {
          augmented.push_back(augment(train_data.coords[order[begin + b]], cfg, rng));
        }
      }
      std::vector<std::vector<Tensor<T>>> grads(size);
      std::vector<double> losses(size);
      std::vector<std::size_t> hits(size);
      parallel_for(size, threads, [&](std::size_t b) {
        const std::size_t idx = order[begin + b];
        const bool aug = !augmented.empty();
        const Pyramid<T> local = aug ? model.prepare(augmented[b]) : Pyramid<T>{};
        Graph<T> g;
        const ForwardVars f = model.forward(g, g.constant(aug ? augmented[b] : train_data.coords[idx]),
                                            aug ? local : train_data.pyramids[idx]);
        const Var loss = ops::softmax_cross_entropy(g, f.prediction, train_data.labels[idx]);
        losses[b] = static_cast<double>(g.value(loss)[0]);
        hits[b] = argmax(g.value(f.prediction)) == train_data.labels[idx];
        if (!std::isfinite(losses[b])) return;
        g.backward(loss);
        grads[b].resize(store.size());
        g.accumulate_parameter_grads(grads[b]);
      });
      for (std::size_t b = 0; b < size; ++b) {
        if (!std::isfinite(losses[b])) {
          throw NumericalError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                               std::to_string(batch) + " (sample " + std::to_string(order[begin + b]) + ")");
        }
        loss_sum += losses[b];
        correct += hits[b];
      }
      const T scale = T(1) / static_cast<T>(size);
      for (std::size_t p = 0; p < store.size(); ++p) {
        auto& grad = store[p].gradient;
        grad.fill(T(0));
        for (std::size_t b = 0; b < size; ++b) {
          const auto& gb = grads[b][p];
          if (gb.empty()) continue;
          if (!gb.all_finite()) {
            throw NumericalError("non-finite gradient for " + store[p].name + " at epoch " +
                                 std::to_string(epoch + 1) + ", batch " + std::to_string(batch) +
                                 " (sample " + std::to_string(order[begin + b]) + ")");
          }
          for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += gb[i];
        }
        for (auto& v : grad.data()) v *= scale;
      }
      optimizer.step(store, lr);
    }

    EpochRecord r;
    r.epoch = epoch + 1;
    r.lr = lr;
    r.train_loss = loss_sum / static_cast<double>(train.size());
    r.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
    r.test_acc = score_predictions(predict_all(model, test_data, threads), test_data.labels,
                                   test.num_classes())
                     .overall_accuracy;
    r.wall_time = cfg.record_wall_time
                      ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()
                      : 0.0;
    records.push_back(r);
    if (writing) metrics << format_record(r) << '\n' << std::flush;
    if (options.on_epoch) options.on_epoch(r);
    if ((epoch + 1) % cfg.cycle_length == 0 && epoch + 1 < cfg.epochs) {
      checkpoint("checkpoint_epoch" + std::to_string(epoch + 1) + ".json", epoch + 1);
    }
  }
  checkpoint("model.json", cfg.epochs);
  return records;
}

#define POINTMT_INSTANTIATE(T)                                                                  \
  template double cross_entropy<T>(const Tensor<T>&, std::size_t);                              \
  template EvalResult evaluate<T>(const Classifier<T>&, const Dataset&, std::size_t);           \
  template std::vector<EpochRecord> fit<T>(Classifier<T>&, const Dataset&, const Dataset&,      \
                                           const TrainConfig&, const FitOptions&);

POINTMT_INSTANTIATE(float)
POINTMT_INSTANTIATE(double)

#undef POINTMT_INSTANTIATE

}  // namespace pointmt
