#include "pointmt/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

#include "pointmt/errors.hpp"

namespace pointmt {

std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  throw ConfigError("unknown precision '" + s + "' (expected f32 or f64)");
}

TrainConfig RunConfig::resolved_train() const {
  TrainConfig t = train;
  t.seed = seed;
  t.threads = threads;
  return t;
}

SynthConfig RunConfig::resolved_synth() const {
  SynthConfig s = synth;
  if (!synth_seed_explicit) s.seed = seed;
  return s;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (train_data.empty()) {
    const SynthConfig s = resolved_synth();
    s.validate();
    if (s.classes.size() != model.num_classes) {
      throw ConfigError("model.num_classes = " + std::to_string(model.num_classes) + " but synth.classes lists " +
                        std::to_string(s.classes.size()) + " classes");
    }
    model.validate_for(s.points_per_cloud);
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (v.empty() || r.ec != std::errc{} || r.ptr != end) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (v.empty() || r.ec != std::errc{} || r.ptr != end) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  for (char ch : v + ",") {
    if (ch == ',' || ch == ' ' || ch == '\t') {
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else {
      item += ch;
    }
  }
  return out;
}

std::vector<std::size_t> parse_uint_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(v)) out.push_back(parse_uint(key, item));
  if (out.empty()) throw ConfigError(key + ": expected a list of integers");
  return out;
}

std::string fmt_real(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define UINT_KEY(NAME, FIELD)                                                                 \
  Key {                                                                                      \
    NAME, [](RunConfig& c, const std::string& v) { c.FIELD = parse_uint(NAME, v); },         \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }                            \
  }
#define REAL_KEY(NAME, FIELD)                                                                 \
  Key {                                                                                      \
    NAME, [](RunConfig& c, const std::string& v) { c.FIELD = parse_real(NAME, v); },         \
        [](const RunConfig& c) { return fmt_real(c.FIELD); }                                  \
  }
#define BOOL_KEY(NAME, FIELD)                                                                 \
  Key {                                                                                      \
    NAME, [](RunConfig& c, const std::string& v) { c.FIELD = parse_bool(NAME, v); },         \
        [](const RunConfig& c) { return fmt_bool(c.FIELD); }                                  \
  }
#define LIST_KEY(NAME, FIELD)                                                                 \
  Key {                                                                                      \
    NAME, [](RunConfig& c, const std::string& v) { c.FIELD = parse_uint_list(NAME, v); },    \
        [](const RunConfig& c) { return fmt_list(c.FIELD); }                                  \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      UINT_KEY("seed", seed),
      {"precision", [](RunConfig& c, const std::string& v) { c.precision = parse_precision(v); },
       [](const RunConfig& c) { return to_string(c.precision); }},
      UINT_KEY("threads", threads),
      {"data.train", [](RunConfig& c, const std::string& v) { c.train_data = v; },
       [](const RunConfig& c) { return c.train_data; }},
      {"data.test", [](RunConfig& c, const std::string& v) { c.test_data = v; },
       [](const RunConfig& c) { return c.test_data; }},
      UINT_KEY("model.stages", model.stages),
      LIST_KEY("model.ratios", model.ratios),
      LIST_KEY("model.neighborhood_sizes", model.neighborhood_sizes),
      LIST_KEY("model.channels", model.channels),
      UINT_KEY("model.blocks_per_stage", model.blocks_per_stage),
      {"model.head", [](RunConfig& c, const std::string& v) { c.model.head = parse_head(v); },
       [](const RunConfig& c) { return to_string(c.model.head); }},
      {"model.branch_mode",
       [](RunConfig& c, const std::string& v) { c.model.branch_mode = parse_branch_mode(v); },
       [](const RunConfig& c) { return to_string(c.model.branch_mode); }},
      UINT_KEY("model.num_classes", model.num_classes),
      BOOL_KEY("model.ta_enabled", model.ta_enabled),
      REAL_KEY("model.temperature_epsilon", model.temperature_epsilon),
      {"model.shape_pool", [](RunConfig& c, const std::string& v) { c.model.shape_pool = parse_pool_mode(v); },
       [](const RunConfig& c) { return to_string(c.model.shape_pool); }},
      BOOL_KEY("model.bias", model.bias),
      UINT_KEY("model.head_hidden", model.head_hidden),
      UINT_KEY("train.epochs", train.epochs),
      UINT_KEY("train.cycle_length", train.cycle_length),
      REAL_KEY("train.lr_max", train.lr_max),
      REAL_KEY("train.lr_min", train.lr_min),
      UINT_KEY("train.batch_size", train.batch_size),
      {"train.optimizer", [](RunConfig& c, const std::string& v) { c.train.optimizer = parse_optimizer(v); },
       [](const RunConfig& c) { return to_string(c.train.optimizer); }},
      REAL_KEY("train.beta1", train.beta1),
      REAL_KEY("train.beta2", train.beta2),
      REAL_KEY("train.adam_epsilon", train.adam_epsilon),
      REAL_KEY("train.momentum", train.momentum),
      BOOL_KEY("train.augment_rotate", train.augment_rotate),
      REAL_KEY("train.augment_jitter", train.augment_jitter),
      BOOL_KEY("train.record_wall_time", train.record_wall_time),
      {"synth.classes", [](RunConfig& c, const std::string& v) { c.synth.classes = split_list(v); },
       [](const RunConfig& c) { return fmt_list(c.synth.classes); }},
      UINT_KEY("synth.samples_per_class", synth.samples_per_class),
      UINT_KEY("synth.test_samples_per_class", synth.test_samples_per_class),
      UINT_KEY("synth.points_per_cloud", synth.points_per_cloud),
      REAL_KEY("synth.noise_sigma", synth.noise_sigma),
      {"synth.seed",
       [](RunConfig& c, const std::string& v) {
         c.synth.seed = parse_uint("synth.seed", v);
         c.synth_seed_explicit = true;
       },
       [](const RunConfig& c) { return std::to_string(c.resolved_synth().seed); }},
  };
  return table;
}

#undef UINT_KEY
#undef REAL_KEY
#undef BOOL_KEY
#undef LIST_KEY

}  // namespace

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = keys();
  const auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return k.name == key; });
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->set(cfg, value);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  apply_setting(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_override(cfg, line);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str(), path.string());
}

std::string format_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& k : keys()) {
    if (k.name == "synth.seed" && !cfg.synth_seed_explicit) continue;
    os << k.name << " = " << k.get(cfg) << '\n';
  }
  return os.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"stages", c.stages},
          {"ratios", c.ratios},
          {"neighborhood_sizes", c.neighborhood_sizes},
          {"channels", c.channels},
          {"blocks_per_stage", c.blocks_per_stage},
          {"head", to_string(c.head)},
          {"branch_mode", to_string(c.branch_mode)},
          {"num_classes", c.num_classes},
          {"ta_enabled", c.ta_enabled},
          {"temperature_epsilon", c.temperature_epsilon},
          {"shape_pool", to_string(c.shape_pool)},
          {"bias", c.bias},
          {"head_hidden", c.head_hidden}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.stages = j.at("stages").get<std::size_t>();
    c.ratios = j.at("ratios").get<std::vector<std::size_t>>();
    c.neighborhood_sizes = j.at("neighborhood_sizes").get<std::vector<std::size_t>>();
    c.channels = j.at("channels").get<std::vector<std::size_t>>();
    c.blocks_per_stage = j.at("blocks_per_stage").get<std::size_t>();
    c.head = parse_head(j.at("head").get<std::string>());
    c.branch_mode = parse_branch_mode(j.at("branch_mode").get<std::string>());
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.ta_enabled = j.at("ta_enabled").get<bool>();
    c.temperature_epsilon = j.at("temperature_epsilon").get<double>();
    c.shape_pool = parse_pool_mode(j.at("shape_pool").get<std::string>());
    c.bias = j.at("bias").get<bool>();
    c.head_hidden = j.at("head_hidden").get<std::size_t>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
}

}  // namespace pointmt
