#include "pointmt/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pointmt/analysis.hpp"
#include "pointmt/checkpoint.hpp"
#include "pointmt/config.hpp"
#include "pointmt/errors.hpp"
#include "pointmt/training.hpp"
#include "pointmt/verification.hpp"

namespace pointmt {

namespace {

struct Flags {
  std::string config_path;
  std::uint64_t seed = 42;
  std::size_t threads = 0;
  std::string out_dir = "out";
  std::string precision = "f32";
  std::vector<std::string> overrides;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
  CLI::Option* precision_opt = nullptr;

  std::size_t epochs = 0;
  CLI::Option* epochs_opt = nullptr;
  std::string checkpoint;
  std::string data;
  std::vector<std::size_t> bench_n{1024};
  std::vector<std::size_t> bench_k{8, 16, 32, 64};
  std::size_t bench_channels = 64;
  std::size_t bench_repeats = 5;
  std::vector<std::string> modes{"mlp_only", "attn_only", "hybrid"};
  double tolerance = 1e-4;
  std::size_t sample = 0, point = 0, stage = 0, block = 0;
  CLI::Option* stage_opt = nullptr;
};

struct Session {
  std::ostream& out;
  std::ostream& err;
  Flags flags;
  RunConfig cfg;
  std::filesystem::path out_dir;
};

/// Base config: a checkpoint's stored config if given, then the config file,
/// explicit global flags and --set overrides.
void resolve(Session& s, const nlohmann::json* checkpoint_meta) {
  RunConfig cfg;
  if (checkpoint_meta && checkpoint_meta->contains("config")) {
    apply_config_text(cfg, checkpoint_meta->at("config").get<std::string>(), "checkpoint config");
  }
  if (!s.flags.config_path.empty()) apply_config_file(cfg, s.flags.config_path);
  if (s.flags.seed_opt->count()) cfg.seed = s.flags.seed;
  if (s.flags.threads_opt->count()) cfg.threads = s.flags.threads;
  if (s.flags.precision_opt->count()) cfg.precision = parse_precision(s.flags.precision);
  for (const auto& o : s.flags.overrides) apply_override(cfg, o);
  if (s.flags.epochs_opt && s.flags.epochs_opt->count()) cfg.train.epochs = s.flags.epochs;
  if (checkpoint_meta) cfg.model = model_config_from_json(checkpoint_meta->at("model"));
  cfg.validate();
  s.cfg = cfg;
  s.out_dir = s.flags.out_dir;
}

void log_config(Session& s, const std::string& command) {
  s.out << "# pmt " << command << " seed=" << s.cfg.seed << '\n';
  std::istringstream lines(format_config(s.cfg));
  for (std::string line; std::getline(lines, line);) s.out << "# " << line << '\n';
  s.out.flush();
}

void save_config(const Session& s) {
  std::filesystem::create_directories(s.out_dir);
  std::ofstream f(s.out_dir / "config.txt");
  f << format_config(s.cfg);
  if (!f) throw std::runtime_error("cannot write " + (s.out_dir / "config.txt").string());
}

struct Data {
  Dataset train, test;
};

Data load_data(Session& s, bool need_train) {
  Data d;
  if (s.cfg.train_data.empty()) {
    const SynthConfig synth = s.cfg.resolved_synth();
    if (need_train) d.train = generate_synthetic(synth, "train");
    d.test = generate_synthetic(synth, "test");
    return d;
  }
  if (need_train) d.train = load_dataset(s.cfg.train_data);
  if (!s.cfg.test_data.empty()) {
    d.test = load_dataset(s.cfg.test_data);
    d.test.split = "test";
  } else {
    s.err << "warning: no data.test given; evaluating on the training split\n";
    d.test = need_train ? d.train : load_dataset(s.cfg.train_data);
  }
  return d;
}

const Dataset& eval_split(Session& s, Data& d) {
  if (!s.flags.data.empty()) {
    d.test = load_dataset(s.flags.data);
  }
  return d.test;
}

template <typename Fn>
void with_precision(Precision p, Fn&& fn) {
  if (p == Precision::f32) {
    fn(float{});
  } else {
    fn(double{});
  }
}

nlohmann::json checkpoint_metadata(const std::string& path) {
  return read_checkpoint_manifest(path).at("metadata");
}

template <typename T>
Classifier<T> load_model(const Session& s, const std::string& path, const ModelConfig& config) {
  Classifier<T> model(config, s.cfg.seed);
  load_checkpoint(model.parameters(), path);
  return model;
}

void check_classes(const ModelConfig& model, const Dataset& ds) {
  if (model.num_classes != ds.num_classes()) {
    throw ConfigError("model has " + std::to_string(model.num_classes) + " classes but the " + ds.split +
                      " data has " + std::to_string(ds.num_classes()));
  }
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

int cmd_synth(Session& s) {
  resolve(s, nullptr);
  log_config(s, "synth");
  const SynthConfig synth = s.cfg.resolved_synth();
  std::filesystem::create_directories(s.out_dir);
  for (const std::string split : {"train", "test"}) {
    const Dataset ds = generate_synthetic(synth, split);
    const auto path = s.out_dir / (split + ".pmtc");
    save_dataset(ds, path);
    s.out << "wrote " << path.string() << " (" << ds.size() << " clouds, " << ds.num_classes() << " classes)\n";
  }
  return kExitOk;
}

int cmd_train(Session& s) {
  resolve(s, nullptr);
  log_config(s, "train");
  Data d = load_data(s, true);
  check_classes(s.cfg.model, d.train);
  for (const auto& c : d.train.samples) s.cfg.model.validate_for(c.coords.rows());
  save_config(s);
  nlohmann::json meta = {{"model", to_json(s.cfg.model)},
                         {"precision", to_string(s.cfg.precision)},
                         {"seed", s.cfg.seed},
                         {"config", format_config(s.cfg)}};
  with_precision(s.cfg.precision, [&](auto tag) {
    using T = decltype(tag);
    Classifier<T> model(s.cfg.model, s.cfg.seed);
    s.out << "# parameters " << param_count(s.cfg.model) << '\n';
    FitOptions options;
    options.out_dir = s.out_dir;
    options.metadata = meta;
    options.on_epoch = [&](const EpochRecord& r) {
      s.out << "epoch " << r.epoch << " lr " << r.lr << " loss " << fixed(r.train_loss) << " train_acc "
            << fixed(r.train_acc) << " test_acc " << fixed(r.test_acc) << '\n';
      s.out.flush();
    };
    const auto records = fit(model, d.train, d.test, s.cfg.resolved_train(), options);
    s.out << "wrote " << (s.out_dir / "metrics.csv").string() << " and " << (s.out_dir / "model.json").string()
          << " (" << records.size() << " epochs)\n";
  });
  return kExitOk;
}

int cmd_eval(Session& s) {
  const nlohmann::json meta = checkpoint_metadata(s.flags.checkpoint);
  resolve(s, &meta);
  log_config(s, "eval");
  Data d = load_data(s, false);
  const Dataset& ds = eval_split(s, d);
  check_classes(s.cfg.model, ds);
  with_precision(s.cfg.precision, [&](auto tag) {
    using T = decltype(tag);
    const Classifier<T> model = load_model<T>(s, s.flags.checkpoint, s.cfg.model);
    const EvalResult r = evaluate(model, ds, s.cfg.threads);
    s.out << "samples " << ds.size() << '\n';
    s.out << "OA " << std::setprecision(std::numeric_limits<double>::max_digits10) << r.overall_accuracy << '\n';
    s.out << "mAcc " << r.mean_class_accuracy << '\n';
  });
  return kExitOk;
}

int cmd_bench(Session& s) {
  resolve(s, nullptr);
  BenchConfig bc;
  bc.n_list = s.flags.bench_n;
  bc.k_list = s.flags.bench_k;
  bc.channels = s.flags.bench_channels;
  bc.repeats = s.flags.bench_repeats;
  bc.seed = s.cfg.seed;
  log_config(s, "bench");
  const auto rows = complexity_bench(bc);
  const auto path = s.out_dir / "bench.csv";
  write_bench_csv(rows, path);
  s.out << "mode n k c flops median_ms core_median_ms\n";
  for (const auto& r : rows) {
    s.out << to_string(r.mode) << ' ' << r.n << ' ' << r.k << ' ' << r.c << ' ' << r.flops.total() << ' '
          << fixed(r.median_ms, 3) << ' ' << fixed(r.core_median_ms, 3) << '\n';
  }
  if (bc.k_list.size() >= 2) {
    for (std::size_t n : bc.n_list) {
      s.out << "N=" << n << " time-vs-k exponent (core): linear "
            << fixed(time_exponent(rows, AttentionMode::linear, n)) << ", quadratic "
            << fixed(time_exponent(rows, AttentionMode::quadratic, n)) << '\n';
    }
  }
  s.out << "wrote " << path.string() << '\n';
  return kExitOk;
}

int cmd_analyze(Session& s, const std::string& what) {
  const nlohmann::json meta = checkpoint_metadata(s.flags.checkpoint);
  resolve(s, &meta);
  log_config(s, "analyze " + what);
  Data d = load_data(s, false);
  const Dataset& ds = eval_split(s, d);
  check_classes(s.cfg.model, ds);
  std::filesystem::create_directories(s.out_dir);
  with_precision(s.cfg.precision, [&](auto tag) {
    using T = decltype(tag);
    const Classifier<T> model = load_model<T>(s, s.flags.checkpoint, s.cfg.model);
    if (what == "kl") {
      const SpfStatistics stats = spf_statistics(model, ds, s.cfg.threads);
      write_kl_stats_csv(stats, s.out_dir / "kl_stats.csv");
      std::ofstream h(s.out_dir / "kl_histogram.csv");
      h << std::setprecision(std::numeric_limits<double>::max_digits10) << "bin,lo,hi,count\n";
      const auto& hist = stats.kl_histogram;
      const double width = (hist.hi - hist.lo) / static_cast<double>(hist.counts.size());
      for (std::size_t b = 0; b < hist.counts.size(); ++b) {
        h << b << ',' << hist.lo + width * static_cast<double>(b) << ','
          << hist.lo + width * static_cast<double>(b + 1) << ',' << hist.counts[b] << '\n';
      }
      if (!h) throw std::runtime_error("cannot write " + (s.out_dir / "kl_histogram.csv").string());
      s.out << "samples " << stats.records.size() << '\n';
      s.out << "mean_kl " << fixed(stats.mean_kl, 6) << '\n';
      s.out << "mean_correct_fraction " << fixed(stats.mean_correct_fraction, 6) << '\n';
      s.out << "wrote " << (s.out_dir / "kl_stats.csv").string() << '\n';
    } else if (what == "features") {
      export_features(model, ds, s.out_dir, s.cfg.threads);
      s.out << "wrote " << (s.out_dir / "features.csv").string() << " and "
            << (s.out_dir / "points.csv").string() << '\n';
    } else {
      if (s.flags.sample >= ds.size()) {
        throw ArgumentError("--sample " + std::to_string(s.flags.sample) + " out of range (" +
                            std::to_string(ds.size()) + " samples)");
      }
      const std::size_t stage = s.flags.stage_opt->count() ? s.flags.stage : s.cfg.model.stages - 1;
      const Tensor<T> coords = cloud_coords<T>(ds.samples[s.flags.sample]);
      const auto traces = model.attention_traces(coords, stage, s.flags.block);
      if (s.flags.point >= traces.size()) {
        throw ArgumentError("--point " + std::to_string(s.flags.point) + " out of range (stage " +
                            std::to_string(stage) + " has " + std::to_string(traces.size()) + " points)");
      }
      const auto pyramid = model.prepare(coords);
      const auto path = s.out_dir / ("attn_trace_" + std::to_string(s.flags.point) + ".csv");
      write_attention_trace_csv(traces[s.flags.point], pyramid[stage].nbr, path);
      s.out << "wrote " << path.string() << '\n';
    }
  });
  return kExitOk;
}

int cmd_compare(Session& s) {
  resolve(s, nullptr);
  log_config(s, "compare-branches");
  std::vector<BranchMode> modes;
  for (const auto& m : s.flags.modes) modes.push_back(parse_branch_mode(m));
  Data d = load_data(s, true);
  check_classes(s.cfg.model, d.train);
  save_config(s);
  with_precision(s.cfg.precision, [&](auto tag) {
    using T = decltype(tag);
    const auto runs = convergence_compare<T>(d.train, d.test, s.cfg.model, modes, s.cfg.resolved_train(),
                                             s.cfg.seed, s.out_dir);
    write_convergence_csv(runs, s.out_dir / "convergence.csv");
    s.out << "mode final_train_loss final_train_acc final_test_acc\n";
    for (const auto& r : runs) {
      const EpochRecord last = r.records.empty() ? EpochRecord{} : r.records.back();
      s.out << to_string(r.mode) << ' ' << fixed(last.train_loss) << ' ' << fixed(last.train_acc) << ' '
            << fixed(last.test_acc) << '\n';
    }
    s.out << "wrote " << (s.out_dir / "convergence.csv").string() << '\n';
  });
  return kExitOk;
}

int cmd_gradcheck(Session& s) {
  resolve(s, nullptr);
  log_config(s, "gradcheck");
  const auto cases = run_gradcheck_suite(s.cfg.seed, s.flags.tolerance);
  double worst = 0;
  bool ok = true;
  for (const auto& c : cases) {
    s.out << std::left << std::setw(28) << c.name << " max_rel_err " << std::scientific << std::setprecision(3)
          << c.report.max_relative_error << " (" << c.report.checked << " entries) "
          << (c.report.passed() ? "ok" : "FAIL") << '\n';
    worst = std::max(worst, c.report.max_relative_error);
    ok = ok && c.report.passed();
  }
  s.out << std::defaultfloat << "max relative error " << worst << (ok ? " < " : " >= ") << s.flags.tolerance
        << '\n';
  return ok ? kExitOk : kExitInternalError;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Session s{out, err, {}, {}, {}};
  Flags& f = s.flags;
  CLI::App app{"PointMT point-cloud classifier toolkit", "pmt"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", f.config_path, "Config file of key = value lines")->check(CLI::ExistingFile);
  f.seed_opt = app.add_option("--seed", f.seed, "Seed for every random choice (default 42)");
  f.threads_opt = app.add_option("--threads", f.threads, "Worker cap (0 = all cores)");
  app.add_option("--out", f.out_dir, "Output directory")->capture_default_str();
  f.precision_opt = app.add_option("--precision", f.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  app.add_option("--set", f.overrides, "Config override key=value (repeatable)");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic train/test datasets");
  auto* train = app.add_subcommand("train", "Train a classifier");
  f.epochs_opt = train->add_option("--epochs", f.epochs, "Override train.epochs");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  auto* bench = app.add_subcommand("bench", "Linear vs quadratic attention complexity benchmark");
  bench->add_option("--n", f.bench_n, "Point counts")->capture_default_str();
  bench->add_option("--k", f.bench_k, "Neighborhood sizes")->capture_default_str();
  bench->add_option("--channels", f.bench_channels, "Channel width")->capture_default_str();
  bench->add_option("--repeats", f.bench_repeats, "Timing repeats")->capture_default_str();
  auto* analyze = app.add_subcommand("analyze", "Analyses of a trained checkpoint");
  analyze->require_subcommand(1);
  auto* kl = analyze->add_subcommand("kl", "Point/shape KL statistics");
  auto* attn = analyze->add_subcommand("attn", "Attention weights of one point");
  auto* features = analyze->add_subcommand("features", "Export features and logits");
  attn->add_option("--sample", f.sample, "Sample index")->capture_default_str();
  attn->add_option("--point", f.point, "Point index within the stage")->capture_default_str();
  f.stage_opt = attn->add_option("--stage", f.stage, "Stage (default: last)");
  attn->add_option("--block", f.block, "Block within the stage")->capture_default_str();
  for (auto* sub : {eval, kl, attn, features}) {
    sub->add_option("--checkpoint", f.checkpoint, "Checkpoint manifest (model.json)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--data", f.data, "PMTC file to evaluate (default: the configured test split)")
        ->check(CLI::ExistingFile);
  }
  auto* compare = app.add_subcommand("compare-branches", "Train mlp_only, attn_only and hybrid models");
  compare->add_option("--modes", f.modes, "Branch modes")->capture_default_str();
  auto* gradcheck = app.add_subcommand("gradcheck", "64-bit finite-difference gradient suite");
  gradcheck->add_option("--tolerance", f.tolerance, "Relative error bound")->capture_default_str();

  std::vector<std::string> argv_store{"pmt"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUserError;
  }

  try {
    if (*synth) return cmd_synth(s);
    if (*train) return cmd_train(s);
    if (*eval) return cmd_eval(s);
    if (*bench) return cmd_bench(s);
    if (*kl) return cmd_analyze(s, "kl");
    if (*attn) return cmd_analyze(s, "attn");
    if (*features) return cmd_analyze(s, "features");
    if (*compare) return cmd_compare(s);
    if (*gradcheck) return cmd_gradcheck(s);
    err << app.help();
    return kExitUserError;
  } catch (const InvariantError& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternalError;
  } catch (const VerificationError& e) {
    err << "verification failed: " << e.what() << '\n';
    return kExitInternalError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUserError;
  } catch (const std::domain_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUserError;
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUserError;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed checkpoint: " << e.what() << '\n';
    return kExitUserError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternalError;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + std::min(argc, 1), argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace pointmt
