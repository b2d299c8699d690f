// Acceptance suite: one PASS/FAIL line per criterion.
//
// Usage: acceptance [--out DIR] [--only N,...] [--known-fail N,...]
// The exit status is nonzero when a criterion fails, unless that criterion is
// listed in --known-fail (its line still reads FAIL).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "../oracles.hpp"
#include "pointmt/analysis.hpp"
#include "pointmt/checkpoint.hpp"
#include "pointmt/cli.hpp"
#include "pointmt/errors.hpp"
#include "pointmt/verification.hpp"

using namespace pointmt;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
  bool soft = false;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

std::filesystem::path g_out = "acceptance_out";

// --- Shared desk-scale training runs ------------------------------------------

struct TrainedRun {
  std::vector<EpochRecord> records;
  std::unique_ptr<Classifier<float>> model;
  double seconds = 0;
};

struct Benchmark {
  Dataset train, test;
};

const Benchmark& benchmark() {
  static const Benchmark b = [] {
    SynthConfig cfg;  // 8 classes, 64/16 per class, 128 points, noise 0.02, seed 42
    return Benchmark{generate_synthetic(cfg, "train"), generate_synthetic(cfg, "test")};
  }();
  return b;
}

std::string run_key(const ModelConfig& m, std::uint64_t seed) {
  std::ostringstream os;
  os << to_string(m.branch_mode) << '/' << to_string(m.head) << "/k";
  for (auto k : m.neighborhood_sizes) os << k << '.';
  os << "/seed" << seed;
  return os.str();
}

const TrainedRun& trained(const ModelConfig& m, std::uint64_t seed) {
  static std::map<std::string, TrainedRun> cache;
  const std::string key = run_key(m, seed);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const auto start = Clock::now();
  TrainedRun run;
  run.model = std::make_unique<Classifier<float>>(m, seed);
  TrainConfig cfg;  // 30 epochs, one 30-epoch cycle, lr 1e-3 -> 1e-5
  cfg.seed = seed;
  run.records = fit(*run.model, benchmark().train, benchmark().test, cfg);
  run.seconds = seconds_since(start);
  const auto& last = run.records.back();
  std::cout << "    trained " << key << ": epoch " << last.epoch << " test_acc " << fmt(last.test_acc)
            << " train_loss " << fmt(last.train_loss) << " (" << fmt(run.seconds, 3) << " s)" << std::endl;
  return cache.emplace(key, std::move(run)).first->second;
}

ModelConfig desk_with(BranchMode mode, HeadKind head, std::vector<std::size_t> ks = {4, 6, 8}) {
  ModelConfig m = ModelConfig::desk(8);
  m.branch_mode = mode;
  m.head = head;
  m.neighborhood_sizes = std::move(ks);
  return m;
}

// --- Criteria -------------------------------------------------------------------------

Outcome c1_gradcheck() {
  const auto start = Clock::now();
  const auto cases = run_gradcheck_suite(42, 1e-4);
  const double secs = seconds_since(start);
  double worst = 0;
  std::string worst_name;
  bool all = true;
  std::set<std::string> names;
  for (const auto& c : cases) {
    names.insert(c.name);
    all = all && c.report.passed();
    if (c.report.max_relative_error >= worst) worst = c.report.max_relative_error, worst_name = c.name;
    std::cout << "    " << std::left << std::setw(26) << c.name << " " << std::scientific << std::setprecision(2)
              << c.report.max_relative_error << std::defaultfloat << (c.report.passed() ? "" : "  FAIL") << '\n';
  }
  const std::vector<std::string> required = {"linear",        "relu",           "layer_norm",
                                             "relative_rows", "group_max",      "softmax_columns",
                                             "softmax_cross_entropy", "linear_attention", "ta_attention",
                                             "mt_block.hybrid", "classifier.spf", "classifier.traditional"};
  bool covered = true;
  for (const auto& r : required) covered = covered && names.count(r);
  const bool pass = all && covered && worst < 1e-4 && secs < 120;
  return {pass, std::to_string(cases.size()) + " cases, max rel err " + fmt(worst, 3) + " (" + worst_name +
                    "), " + fmt(secs, 3) + " s" + (covered ? "" : ", coverage incomplete")};
}

Outcome c2_oracles() {
  std::mt19937_64 rng(2024);
  double worst[3] = {0, 0, 0};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = oracle::uniform_int(rng, 2, 32);
    const std::size_t k = oracle::uniform_int(rng, 1, std::min<std::size_t>(8, n));
    const std::size_t c = oracle::uniform_int(rng, 1, 16);
    const auto coords = oracle::uniform({n, 3}, rng);
    const auto f = oracle::uniform({n, c}, rng);
    const auto nbr = knn(coords, coords, k);
    const auto lin = oracle::random_params(c, false, rng);
    const auto ta = oracle::random_params(c, true, rng);
    worst[0] = std::max(worst[0], max_abs_diff(linear_local_attention(f, nbr, lin).z,
                                               oracle::linear_attention(f, nbr, lin)));
    worst[1] = std::max(worst[1], max_abs_diff(ta_attention(f, nbr, ta).z, oracle::ta_attention(f, nbr, ta)));
    worst[2] = std::max(worst[2], max_abs_diff(quadratic_local_attention(f, nbr, lin),
                                               oracle::quadratic_attention(f, nbr, lin)));
  }
  const bool pass = worst[0] <= 1e-6 && worst[1] <= 1e-6 && worst[2] <= 1e-6;
  return {pass, "100 instances, max |diff| linear " + fmt(worst[0], 3) + ", TA " + fmt(worst[1], 3) +
                    ", quadratic " + fmt(worst[2], 3)};
}

Outcome c3_decomposition() {
  std::mt19937_64 rng(33);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = oracle::uniform_int(rng, 1, 16), c = oracle::uniform_int(rng, 1, 16);
    const auto raw = oracle::uniform({k}, rng, -3, 3);
    const auto probs = oracle::direct_softmax(std::vector<double>(raw.data().begin(), raw.data().end()));
    Tensor<double> w({k});
    std::copy(probs.begin(), probs.end(), w.data().begin());
    const auto v = oracle::uniform({k, c}, rng, -2, 2);
    const auto s = moment_decomposition(w, v);
    for (std::size_t j = 0; j < c; ++j) {
      double direct = 0, mean = 0;
      for (std::size_t i = 0; i < k; ++i) direct += w[i] * v(i, j) * v(i, j), mean += w[i] * v(i, j);
      double div = 0;
      for (std::size_t i = 0; i < k; ++i) div += w[i] * (v(i, j) - mean) * (v(i, j) - mean);
      worst = std::max({worst, std::abs(direct - (mean * mean + div)),
                        std::abs(s.second_moment[j] - direct),
                        std::abs(s.weighted_mean[j] * s.weighted_mean[j] + s.diversity[j] - direct)});
    }
  }
  return {worst <= 1e-6, "1000 pairs, max |V2 - (mean^2 + diversity)| " + fmt(worst, 3)};
}

Outcome c4_reduction() {
  std::mt19937_64 rng(44);
  std::size_t mismatched = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = oracle::uniform_int(rng, 2, 32);
    const std::size_t k = oracle::uniform_int(rng, 1, std::min<std::size_t>(8, n));
    const std::size_t c = oracle::uniform_int(rng, 1, 16);
    const auto coords = oracle::uniform({n, 3}, rng);
    const auto f = oracle::uniform({n, c}, rng);
    const auto nbr = knn(coords, coords, k);
    auto p = oracle::random_params(c, true, rng);
    p.options.force_unit_temperature = true;
    auto lin = p;
    lin.options.ta_enabled = false;
    lin.options.force_unit_temperature = false;
    mismatched += !(ta_attention(f, nbr, p).z == linear_local_attention(f, nbr, lin).z);
  }
  return {mismatched == 0, "100 instances in 64-bit, " + std::to_string(mismatched) + " not bit-identical"};
}

Outcome c5_complexity() {
  const auto start = Clock::now();
  // FLOP ratio over a sweep, plus counted operations of the real kernels.
  bool ratio_ok = true;
  for (std::size_t n : {16, 256, 1024, 4096}) {
    for (std::size_t k : {1, 2, 8, 16, 32, 64}) {
      for (std::size_t c : {1, 8, 64, 256}) {
        const auto lin = flop_count(AttentionMode::linear, n, k, c);
        const auto quad = flop_count(AttentionMode::quadratic, n, k, c);
        ratio_ok = ratio_ok && quad.score_aggregation() == k * lin.score_aggregation();
      }
    }
  }
  bool counted_ok = true;
  {
    std::mt19937_64 rng(55);
    const auto coords = oracle::uniform({40, 3}, rng);
    const auto f = oracle::uniform({40, 6}, rng);
    const auto p = oracle::random_params(6, false, rng);
    for (std::size_t k : {1, 3, 8}) {
      const auto nbr = knn(coords, coords, k);
      for (auto mode : {AttentionMode::linear, AttentionMode::quadratic}) {
        FlopBreakdown counted;
        attention_core(project(f, p, &counted), nbr, mode, &counted);
        counted_ok = counted_ok && counted == flop_count(mode, 40, k, 6);
      }
    }
  }
  BenchConfig cfg;  // N = 1024, C = 64, k in {8, 16, 32, 64}
  cfg.repeats = 7;
  const auto rows = complexity_bench(cfg);
  write_bench_csv(rows, g_out / "bench.csv");
  const double lin = time_exponent(rows, AttentionMode::linear, 1024);
  const double quad = time_exponent(rows, AttentionMode::quadratic, 1024);
  const double lin_total = time_exponent(rows, AttentionMode::linear, 1024, false);
  const double quad_total = time_exponent(rows, AttentionMode::quadratic, 1024, false);
  for (const auto& r : rows) {
    std::cout << "    " << std::left << std::setw(10) << to_string(r.mode) << " k=" << std::setw(3) << r.k
              << " core " << fmt(r.core_median_ms, 4) << " ms, total " << fmt(r.median_ms, 4) << " ms\n";
  }
  const double secs = seconds_since(start);
  const bool pass = ratio_ok && counted_ok && lin < 1.3 && quad > 1.6 && secs < 300;
  return {pass, std::string("FLOP ratio == k: ") + (ratio_ok ? "yes" : "NO") +
                    ", counted == formula: " + (counted_ok ? "yes" : "NO") + "; core time exponents linear " +
                    fmt(lin, 3) + ", quadratic " + fmt(quad, 3) + " (with projections " + fmt(lin_total, 3) +
                    ", " + fmt(quad_total, 3) + "); " + fmt(secs, 3) + " s"};
}

Outcome c6_convergence() {
  const auto& hybrid = trained(desk_with(BranchMode::hybrid, HeadKind::spf), 42);
  const auto& mlp = trained(desk_with(BranchMode::mlp_only, HeadKind::spf), 42);
  const auto& attn = trained(desk_with(BranchMode::attn_only, HeadKind::spf), 42);
  const auto& h = hybrid.records.back();
  const auto& m = mlp.records.back();
  const auto& a = attn.records.back();
  const double secs = hybrid.seconds + mlp.seconds + attn.seconds;
  std::vector<BranchRun> runs{{BranchMode::mlp_only, mlp.records},
                              {BranchMode::attn_only, attn.records},
                              {BranchMode::hybrid, hybrid.records}};
  write_convergence_csv(runs, g_out / "convergence.csv");
  const bool pass = h.epoch == 30 && h.test_acc >= m.test_acc && h.test_acc >= a.test_acc &&
                    h.train_loss < a.train_loss && secs < 1800;
  return {pass, "epoch-30 test acc hybrid " + fmt(h.test_acc) + ", mlp_only " + fmt(m.test_acc) +
                    ", attn_only " + fmt(a.test_acc) + "; final train loss hybrid " + fmt(h.train_loss) +
                    " vs attn_only " + fmt(a.train_loss) + "; " + fmt(secs, 4) + " s"};
}

Outcome c7_spf() {
  bool all = true;
  std::ostringstream detail;
  double kl_spf = 0, kl_trad = 0, fr_spf = 0, fr_trad = 0;
  for (std::uint64_t seed : {42, 43, 44}) {
    const auto& spf = trained(desk_with(BranchMode::hybrid, HeadKind::spf), seed);
    const auto& trad = trained(desk_with(BranchMode::hybrid, HeadKind::traditional), seed);
    const auto s = spf_statistics(*spf.model, benchmark().test);
    const auto t = spf_statistics(*trad.model, benchmark().test);
    if (seed == 42) {
      write_kl_stats_csv(s, g_out / "kl_stats_spf.csv");
      write_kl_stats_csv(t, g_out / "kl_stats_traditional.csv");
    }
    const bool ok = s.mean_kl < t.mean_kl && s.mean_correct_fraction > t.mean_correct_fraction;
    all = all && ok;
    kl_spf += s.mean_kl / 3, kl_trad += t.mean_kl / 3;
    fr_spf += s.mean_correct_fraction / 3, fr_trad += t.mean_correct_fraction / 3;
    std::cout << "    seed " << seed << ": KL spf " << fmt(s.mean_kl) << " vs traditional " << fmt(t.mean_kl)
              << ", correct-point fraction spf " << fmt(s.mean_correct_fraction) << " vs traditional "
              << fmt(t.mean_correct_fraction) << (ok ? "" : "  (ordering violated)") << '\n';
  }
  detail << "per-seed ordering holds for all 3 seeds: " << (all ? "yes" : "NO") << "; mean KL spf " << fmt(kl_spf)
         << " vs traditional " << fmt(kl_trad) << ", mean fraction spf " << fmt(fr_spf) << " vs traditional "
         << fmt(fr_trad);
  return {all, detail.str()};
}

Outcome c8_neighborhoods() {
  const std::vector<std::pair<std::string, std::vector<std::size_t>>> schedules = {
      {"4/6/8", {4, 6, 8}}, {"4/4/4", {4, 4, 4}}, {"6/6/6", {6, 6, 6}}, {"8/8/8", {8, 8, 8}}};
  std::vector<double> mean(schedules.size(), 0.0);
  for (std::size_t s = 0; s < schedules.size(); ++s) {
    for (std::uint64_t seed : {42, 43, 44}) {
      mean[s] += trained(desk_with(BranchMode::hybrid, HeadKind::spf, schedules[s].second), seed)
                     .records.back()
                     .test_acc /
                 3;
    }
  }
  const auto best = std::max_element(mean.begin() + 1, mean.end());
  std::ostringstream detail;
  detail << "mean test acc over 3 seeds:";
  for (std::size_t s = 0; s < schedules.size(); ++s) detail << ' ' << schedules[s].first << '=' << fmt(mean[s]);
  const bool pass = mean[0] >= *best;
  detail << "; increasing vs best fixed (" << schedules[best - mean.begin()].first << ") "
         << (pass ? "holds" : "REGRESSION");
  return {pass, detail.str(), true};
}

Outcome c9_params() {
  const ModelConfig ref = ModelConfig::reference();
  const std::size_t total = param_count(ref);
  std::ostringstream detail;
  for (const auto& g : param_breakdown(ref)) {
    std::cout << "    " << std::left << std::setw(16) << g.module << std::right << std::setw(10) << g.count << '\n';
  }
  Classifier<float> model(ref, 1);
  const bool store_matches = model.parameters().scalar_count() == total;
  detail << "total " << total << " (reference 2.4M, band [1.2M, 3.6M]); constructed model agrees: "
         << (store_matches ? "yes" : "NO");
  return {store_matches && total >= 1'200'000 && total <= 3'600'000, detail.str()};
}

Outcome c10_permutation() {
  const auto& run = trained(desk_with(BranchMode::hybrid, HeadKind::spf), 42);
  std::mt19937_64 rng(1010);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    PointCloud<float> cloud;
    cloud.coords = Tensor<float>({128, 3});
    for (auto& v : cloud.coords.data()) v = u(rng);
    cloud = normalize_cloud(cloud);
    std::vector<std::size_t> perm(128);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto permuted = gather_rows(cloud.coords, perm);
    const auto a = run.model->infer(cloud.coords).spf.combined;
    const auto b = run.model->infer(permuted).spf.combined;
    worst = std::max(worst, static_cast<double>(max_abs_diff(a, b)));
  }
  return {worst <= 1e-5, "50 clouds, max |combined - combined(permuted)| " + fmt(worst, 3)};
}

std::vector<std::vector<std::string>> csv_rows(const std::filesystem::path& p, bool drop_last_column) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (drop_last_column && !cells.empty()) cells.pop_back();
    rows.push_back(cells);
  }
  return rows;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome c11_determinism() {
  auto train = [](const std::filesystem::path& dir, bool wall) {
    std::filesystem::remove_all(dir);
    std::ostringstream out, err;
    std::vector<std::string> args{"train", "--precision", "f64", "--seed", "42", "--epochs", "3",
                                  "--out", dir.string()};
    if (!wall) args.insert(args.end(), {"--set", "train.record_wall_time=false"});
    const int code = run_cli(args, out, err);
    if (code != 0) std::cout << "    train failed: " << err.str() << '\n';
    return code == 0;
  };
  const auto dir = g_out / "determinism";
  bool ok = train(dir / "a", true) && train(dir / "b", true) && train(dir / "c", false) && train(dir / "d", false);
  const auto ra = csv_rows(dir / "a" / "metrics.csv", true), rb = csv_rows(dir / "b" / "metrics.csv", true);
  const bool timed_equal = ok && ra == rb && ra.size() == 4;
  const bool bytes_equal = ok && slurp(dir / "c" / "metrics.csv") == slurp(dir / "d" / "metrics.csv");
  const bool same_values = ok && csv_rows(dir / "c" / "metrics.csv", true) == ra;
  return {timed_equal && bytes_equal && same_values,
          std::string("64-bit, 3 epochs on the default benchmark: metrics identical apart from wall_time: ") +
              (timed_equal ? "yes" : "NO") + "; byte-identical CSVs with wall time disabled: " +
              (bytes_equal ? "yes" : "NO")};
}

Outcome c12_format() {
  const Dataset& ds = benchmark().test;
  const auto path = g_out / "test.pmtc";
  save_dataset(ds, path);
  const bool round_trip = load_dataset(path) == ds && load_dataset(path, false) == ds;
  const auto good = encode_dataset(ds);
  const bool bytes_stable = encode_dataset(load_dataset(path)) == good;

  // Offsets of the structural fields of the first sample and of the header.
  std::size_t off = 12;
  std::vector<std::size_t> name_len_at;
  for (const auto& name : ds.class_names) name_len_at.push_back(off), off += 4 + name.size();
  const std::size_t sample_count_at = off;
  std::vector<std::size_t> label_at, n_at, coord_at;
  off += 4;
  for (const auto& s : ds.samples) {
    label_at.push_back(off);
    n_at.push_back(off + 4);
    coord_at.push_back(off + 8);
    off += 8 + 12 * s.coords.rows();
  }
  auto put = [](std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
  };

  std::mt19937_64 rng(1212);
  std::size_t parse_errors = 0, other = 0, accepted = 0;
  std::map<std::string, std::size_t> kinds;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::uint8_t> b = good;
    std::string kind;
    if (trial % 2 == 0) {
      kind = "truncation";
      b.resize(rng() % good.size());
    } else {
      const std::size_t choice = rng() % 8;
      const std::size_t s = rng() % ds.size();
      const auto big = static_cast<std::uint32_t>(good.size() + 1 + rng() % 1000000);
      switch (choice) {
        case 0:
          kind = "magic";
          b[rng() % 4] ^= static_cast<std::uint8_t>(1 + rng() % 255);
          break;
        case 1:
          kind = "version";
          put(b, 4, static_cast<std::uint32_t>(2 + rng() % 1000));
          break;
        case 2:
          kind = "class count";
          put(b, 8, big);
          break;
        case 3:
          kind = "name length";
          put(b, name_len_at[rng() % name_len_at.size()], big);
          break;
        case 4:
          kind = "sample count";
          put(b, sample_count_at, big);
          break;
        case 5:
          kind = "label";
          put(b, label_at[s], static_cast<std::uint32_t>(ds.num_classes() + rng() % 1000));
          break;
        case 6:
          kind = "point count";
          put(b, n_at[s], rng() % 2 ? 0u : big);
          break;
        default: {
          kind = "coordinate";
          const float bad = rng() % 2 ? std::numeric_limits<float>::quiet_NaN() : std::numeric_limits<float>::infinity();
          std::uint32_t bits;
          std::memcpy(&bits, &bad, 4);
          put(b, coord_at[s] + 4 * (rng() % (3 * ds.samples[s].coords.rows())), bits);
        }
      }
    }
    ++kinds[kind];
    try {
      decode_dataset(b);
      ++accepted;
    } catch (const ParseError&) {
      ++parse_errors;
    } catch (...) {
      ++other;
    }
  }
  // Unstructured byte flips: any outcome but a crash or a non-parse exception.
  std::size_t fuzz_other = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    auto b = good;
    for (int f = 0; f < 1 + static_cast<int>(rng() % 6); ++f) b[rng() % b.size()] = static_cast<std::uint8_t>(rng());
    try {
      decode_dataset(b);
    } catch (const ParseError&) {
    } catch (...) {
      ++fuzz_other;
    }
  }
  std::ostringstream kinds_text;
  for (const auto& [k, n] : kinds) kinds_text << (kinds_text.tellp() ? ", " : "") << k << ' ' << n;
  const bool pass = round_trip && bytes_stable && parse_errors == 100 && other == 0 && fuzz_other == 0;
  return {pass, std::string("round trip identity: ") + (round_trip && bytes_stable ? "yes" : "NO") + "; " +
                    std::to_string(parse_errors) + "/100 corrupted files rejected with a parse error (" +
                    kinds_text.str() + "); accepted " + std::to_string(accepted) + ", other exceptions " +
                    std::to_string(other) + "; 2000 random byte-flip files without crash, " +
                    std::to_string(fuzz_other) + " non-parse exceptions"};
}

std::set<int> parse_list(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) out.insert(std::stoi(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only, known_fail;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) {
      g_out = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      only = parse_list(argv[++i]);
    } else if (a == "--known-fail" && i + 1 < argc) {
      known_fail = parse_list(argv[++i]);
    } else {
      std::cerr << "usage: acceptance [--out DIR] [--only N,...] [--known-fail N,...]\n";
      return 2;
    }
  }
  std::filesystem::create_directories(g_out);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient check suite", c1_gradcheck},
      {"attention matches loop oracles", c2_oracles},
      {"second-moment decomposition", c3_decomposition},
      {"unit temperature reduces to linear attention", c4_reduction},
      {"complexity: FLOP ratio and time exponents", c5_complexity},
      {"hybrid convergence vs single branches", c6_convergence},
      {"SPF head: lower KL, more correct points", c7_spf},
      {"increasing neighborhood schedule", c8_neighborhoods},
      {"parameter count of the reference config", c9_params},
      {"permutation invariance", c10_permutation},
      {"training determinism", c11_determinism},
      {"PMTC format robustness", c12_format},
  };

  const auto start = Clock::now();
  std::vector<std::string> lines;
  int hard_failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    std::cout << "--- criterion " << id << ": " << criteria[i].first << std::endl;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::string tag = o.pass ? "PASS" : "FAIL";
    std::string note;
    if (!o.pass && o.soft) note = " [soft, reported only]";
    else if (!o.pass && known_fail.count(id)) note = " [known, see notes]";
    else if (!o.pass) ++hard_failures;
    std::ostringstream line;
    line << tag << "  " << std::setw(2) << id << "  " << criteria[i].first << ": " << o.detail << note;
    std::cout << line.str() << std::endl;
    lines.push_back(line.str());
  }
  std::cout << "\n=== acceptance summary (" << fmt(seconds_since(start), 4) << " s) ===\n";
  for (const auto& l : lines) std::cout << l << '\n';
  std::ofstream(g_out / "summary.txt") << [&] {
    std::string s;
    for (const auto& l : lines) s += l + '\n';
    return s;
  }();
  return hard_failures == 0 ? 0 : 1;
}
