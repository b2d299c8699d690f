#include "pointmt/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>

#include "pointmt/errors.hpp"
#include "pointmt/parallel.hpp"

namespace pointmt {

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

template <typename T>
std::vector<double> softmax_row(const Tensor<T>& logits, std::size_t row) {
  const std::size_t k = logits.cols();
  std::vector<double> p(k);
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < k; ++j) peak = std::max(peak, static_cast<double>(logits(row, j)));
  double total = 0;
  for (std::size_t j = 0; j < k; ++j) total += p[j] = std::exp(static_cast<double>(logits(row, j)) - peak);
  for (auto& v : p) v /= total;
  return p;
}

template <typename T>
std::size_t argmax_row(const Tensor<T>& logits, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < logits.cols(); ++j) {
    if (logits(row, j) > logits(row, best)) best = j;
  }
  return best;
}

template <typename T>
void write_row(std::ofstream& out, const Tensor<T>& t, std::size_t row) {
  for (std::size_t j = 0; j < t.cols(); ++j) out << ',' << static_cast<double>(t(row, j));
}

void write_header(std::ofstream& out, const std::string& prefix, std::size_t count) {
  for (std::size_t j = 0; j < count; ++j) out << ',' << prefix << j;
}

}  // namespace

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw ArgumentError("kl_divergence: lengths " + std::to_string(p.size()) + " and " +
                        std::to_string(q.size()) + " differ");
  }
  const double sp = std::accumulate(p.begin(), p.end(), 0.0);
  const double sq = std::accumulate(q.begin(), q.end(), 0.0);
  if (std::abs(sp - 1) > 1e-6 || std::abs(sq - 1) > 1e-6) {
    throw DomainError("kl_divergence: inputs must sum to 1 (got " + std::to_string(sp) + ", " +
                      std::to_string(sq) + ")");
  }
  double total = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0) total += p[i] * std::log(p[i] / std::max(q[i], kKlFloor));
  }
  return total;
}

template <typename T>
SampleKlRecord sample_kl_record(std::size_t sample, const Tensor<T>& shape_logit,
                                const Tensor<T>& point_logits, std::size_t label) {
  if (shape_logit.cols() != point_logits.cols() || shape_logit.rows() != 1 || point_logits.rows() == 0) {
    throw ShapeError("sample_kl_record: shape logit " + shape_string(shape_logit.shape()) +
                     " vs point logits " + shape_string(point_logits.shape()));
  }
  const std::vector<double> q = softmax_row(shape_logit, 0);
  SampleKlRecord r;
  r.sample = sample;
  std::size_t correct = 0;
  const std::size_t n = point_logits.rows();
  for (std::size_t i = 0; i < n; ++i) {
    r.mean_kl += kl_divergence(softmax_row(point_logits, i), q);
    correct += argmax_row(point_logits, i) == label;
  }
  r.mean_kl /= static_cast<double>(n);
  r.correct_fraction = static_cast<double>(correct) / static_cast<double>(n);
  return r;
}

Histogram histogram(const std::vector<double>& values, std::size_t bins) {
  if (bins == 0) throw ArgumentError("histogram: bins must be >= 1");
  Histogram h;
  h.counts.assign(bins, 0);
  if (values.empty()) return h;
  h.hi = *std::max_element(values.begin(), values.end());
  for (double v : values) {
    std::size_t b = h.hi > 0 ? static_cast<std::size_t>(v / h.hi * static_cast<double>(bins)) : 0;
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

SpfStatistics summarize(std::vector<SampleKlRecord> records, std::size_t skipped) {
  SpfStatistics s;
  s.records = std::move(records);
  s.skipped = skipped;
  std::vector<double> kls;
  for (const auto& r : s.records) {
    s.mean_kl += r.mean_kl;
    s.mean_correct_fraction += r.correct_fraction;
    kls.push_back(r.mean_kl);
  }
  if (!s.records.empty()) {
    s.mean_kl /= static_cast<double>(s.records.size());
    s.mean_correct_fraction /= static_cast<double>(s.records.size());
  }
  s.kl_histogram = histogram(kls);
  return s;
}

template <typename T>
SpfStatistics spf_statistics(const Classifier<T>& model, const Dataset& ds, std::size_t threads) {
  std::vector<std::size_t> labeled;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.samples[i].label) {
      labeled.push_back(i);
    } else {
      std::cerr << "warning: sample " << i << " has no label; skipped\n";
    }
  }
  std::vector<SampleKlRecord> records(labeled.size());
  parallel_for(labeled.size(), threads, [&](std::size_t j) {
    const auto& cloud = ds.samples[labeled[j]];
    const auto inf = model.infer(cloud_coords<T>(cloud));
    records[j] = sample_kl_record(labeled[j], inf.spf.shape_logit, inf.spf.point_logits, *cloud.label);
  });
  return summarize(std::move(records), ds.size() - labeled.size());
}

void write_kl_stats_csv(const SpfStatistics& stats, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "sample,mean_kl,correct_fraction\n";
  for (const auto& r : stats.records) out << r.sample << ',' << r.mean_kl << ',' << r.correct_fraction << '\n';
  finish(out, path);
}

template <typename T>
std::vector<BranchRun> convergence_compare(const Dataset& train, const Dataset& test,
                                           const ModelConfig& base, const std::vector<BranchMode>& modes,
                                           const TrainConfig& cfg, std::uint64_t model_seed,
                                           const std::filesystem::path& out_dir) {
  std::vector<BranchRun> runs;
  for (BranchMode mode : modes) {
    ModelConfig config = base;
    config.branch_mode = mode;
    Classifier<T> model(config, model_seed);
    FitOptions options;
    if (!out_dir.empty()) options.out_dir = out_dir / to_string(mode);
    runs.push_back({mode, fit(model, train, test, cfg, options)});
  }
  return runs;
}

void write_convergence_csv(const std::vector<BranchRun>& runs, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "epoch";
  std::size_t epochs = 0;
  for (const auto& r : runs) {
    const std::string m = to_string(r.mode);
    out << ',' << m << "_train_loss," << m << "_train_acc," << m << "_test_acc";
    epochs = std::max(epochs, r.records.size());
  }
  out << '\n';
  for (std::size_t e = 0; e < epochs; ++e) {
    out << e + 1;
    for (const auto& r : runs) {
      if (e < r.records.size()) {
        out << ',' << r.records[e].train_loss << ',' << r.records[e].train_acc << ','
            << r.records[e].test_acc;
      } else {
        out << ",,,";
      }
    }
    out << '\n';
  }
  finish(out, path);
}

void BenchConfig::validate() const {
  if (n_list.empty() || k_list.empty()) throw ConfigError("bench: n_list and k_list must be non-empty");
  if (channels == 0 || repeats == 0) throw ConfigError("bench: channels and repeats must be >= 1");
  for (std::size_t n : n_list) {
    for (std::size_t k : k_list) {
      if (k == 0 || k > n) {
        throw ConfigError("bench: k = " + std::to_string(k) + " invalid for N = " + std::to_string(n));
      }
    }
  }
}

std::string to_string(AttentionMode mode) { return mode == AttentionMode::linear ? "linear" : "quadratic"; }

std::vector<BenchRow> complexity_bench(const BenchConfig& cfg) {
  cfg.validate();
  using Clock = std::chrono::steady_clock;
  std::vector<BenchRow> rows;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  const AttentionParams<float> params = AttentionParams<float>::random(cfg.channels, false, rng);
  for (std::size_t n : cfg.n_list) {
    Tensor<float> coords({n, 3}), features({n, cfg.channels});
    for (auto& v : coords.data()) v = u(rng);
    for (auto& v : features.data()) v = u(rng);
    for (std::size_t k : cfg.k_list) {
      const NeighborhoodIndex nbr = knn(coords, coords, k);
      for (AttentionMode mode : {AttentionMode::linear, AttentionMode::quadratic}) {
        std::vector<double> total, core;
        float sink = 0;
        for (std::size_t r = 0; r < cfg.repeats; ++r) {
          const auto t0 = Clock::now();
          const ProjectedFeatures<float> projected = project(features, params);
          const auto t1 = Clock::now();
          const Tensor<float> out = attention_core(projected, nbr, mode);
          const auto t2 = Clock::now();
          sink += out[0];
          total.push_back(std::chrono::duration<double, std::milli>(t2 - t0).count());
          core.push_back(std::chrono::duration<double, std::milli>(t2 - t1).count());
        }
        if (!std::isfinite(sink)) throw NumericalError("bench: non-finite attention output");
        auto median = [](std::vector<double> v) {
          std::sort(v.begin(), v.end());
          const std::size_t m = v.size() / 2;
          return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
        };
        rows.push_back({mode, n, k, cfg.channels, flop_count(mode, n, k, cfg.channels), median(total),
                        median(core)});
      }
    }
  }
  return rows;
}

void write_bench_csv(const std::vector<BenchRow>& rows, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "mode,n,k,c,flops,median_ms,score_agg_flops,core_flops,core_median_ms\n";
  for (const auto& r : rows) {
    out << to_string(r.mode) << ',' << r.n << ',' << r.k << ',' << r.c << ',' << r.flops.total() << ','
        << r.median_ms << ',' << r.flops.score_aggregation() << ',' << r.flops.core() << ','
        << r.core_median_ms << '\n';
  }
  finish(out, path);
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("log_log_slope: need >= 2 paired points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw DomainError("log_log_slope: values must be positive");
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly;
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0) throw DomainError("log_log_slope: x values are all equal");
  return (n * sxy - sx * sy) / denom;
}

double time_exponent(const std::vector<BenchRow>& rows, AttentionMode mode, std::size_t n, bool core_only) {
  std::vector<double> ks, ts;
  for (const auto& r : rows) {
    if (r.mode != mode || r.n != n) continue;
    ks.push_back(static_cast<double>(r.k));
    ts.push_back(core_only ? r.core_median_ms : r.median_ms);
  }
  return log_log_slope(ks, ts);
}

template <typename T>
void export_features(const Classifier<T>& model, const Dataset& ds, const std::filesystem::path& dir,
                     std::size_t threads) {
  ds.validate();
  std::vector<typename Classifier<T>::Inference> results(ds.size());
  parallel_for(ds.size(), threads,
               [&](std::size_t i) { results[i] = model.infer(cloud_coords<T>(ds.samples[i])); });
  const std::size_t c = model.config().channels.back();
  const std::size_t classes = model.config().num_classes;

  const auto features_path = dir / "features.csv";
  auto out = open_output(features_path);
  out << "sample,label,prediction";
  write_header(out, "pooled_", c);
  write_header(out, "shape_logit_", classes);
  write_header(out, "combined_", classes);
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = results[i];
    out << i << ',' << *ds.samples[i].label << ',' << argmax_row(r.prediction, 0);
    write_row(out, r.pooled, 0);
    write_row(out, r.spf.shape_logit, 0);
    write_row(out, r.spf.combined, 0);
    out << '\n';
  }
  finish(out, features_path);

  const auto points_path = dir / "points.csv";
  auto pts = open_output(points_path);
  pts << "sample,point";
  write_header(pts, "feature_", c);
  write_header(pts, "point_logit_", classes);
  pts << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = results[i];
    for (std::size_t p = 0; p < r.features.rows(); ++p) {
      pts << i << ',' << p;
      write_row(pts, r.features, p);
      write_row(pts, r.spf.point_logits, p);
      pts << '\n';
    }
  }
  finish(pts, points_path);
}

template <typename T>
void write_attention_trace_csv(const AttentionTrace<T>& trace, const NeighborhoodIndex& nbr,
                               const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "neighbor,channel,neighbor_index,score,token_weight,temperature,weight\n";
  const std::size_t k = trace.w.rows(), c = trace.w.cols();
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      out << j << ',' << ch << ',' << nbr(trace.center, j) << ',' << static_cast<double>(trace.score[j])
          << ',' << static_cast<double>(trace.w_token[j]) << ','
          << static_cast<double>(trace.temperature[ch]) << ',' << static_cast<double>(trace.w(j, ch))
          << '\n';
    }
  }
  finish(out, path);
}

#define POINTMT_INSTANTIATE(T)                                                                       \
  template SampleKlRecord sample_kl_record<T>(std::size_t, const Tensor<T>&, const Tensor<T>&,      \
                                              std::size_t);                                          \
  template SpfStatistics spf_statistics<T>(const Classifier<T>&, const Dataset&, std::size_t);      \
  template std::vector<BranchRun> convergence_compare<T>(const Dataset&, const Dataset&,             \
                                                         const ModelConfig&,                         \
                                                         const std::vector<BranchMode>&,             \
                                                         const TrainConfig&, std::uint64_t,          \
                                                         const std::filesystem::path&);              \
  template void export_features<T>(const Classifier<T>&, const Dataset&,                            \
                                   const std::filesystem::path&, std::size_t);                      \
  template void write_attention_trace_csv<T>(const AttentionTrace<T>&, const NeighborhoodIndex&,    \
                                             const std::filesystem::path&);

POINTMT_INSTANTIATE(float)
POINTMT_INSTANTIATE(double)

#undef POINTMT_INSTANTIATE

}  // namespace pointmt
