#include "pointmt/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace pointmt {

std::string to_string(HeadKind head) { return head == HeadKind::spf ? "spf" : "traditional"; }

std::string to_string(BranchMode mode) {
  switch (mode) {
    case BranchMode::hybrid: return "hybrid";
    case BranchMode::mlp_only: return "mlp_only";
    case BranchMode::attn_only: return "attn_only";
  }
  return "hybrid";
}

std::string to_string(PoolMode mode) { return mode == PoolMode::max ? "max" : "mean"; }

HeadKind parse_head(const std::string& s) {
  if (s == "spf") return HeadKind::spf;
  if (s == "traditional") return HeadKind::traditional;
  throw ConfigError("unknown head '" + s + "' (expected spf|traditional)");
}

BranchMode parse_branch_mode(const std::string& s) {
  if (s == "hybrid") return BranchMode::hybrid;
  if (s == "mlp_only") return BranchMode::mlp_only;
  if (s == "attn_only") return BranchMode::attn_only;
  throw ConfigError("unknown branch mode '" + s + "' (expected hybrid|mlp_only|attn_only)");
}

PoolMode parse_pool_mode(const std::string& s) {
  if (s == "max") return PoolMode::max;
  if (s == "mean") return PoolMode::mean;
  throw ConfigError("unknown pool mode '" + s + "' (expected max|mean)");
}

ModelConfig ModelConfig::reference() { return ModelConfig{}; }

ModelConfig ModelConfig::desk(std::size_t num_classes) {
  ModelConfig c;
  c.neighborhood_sizes = {4, 6, 8};
  c.channels = {16, 24, 32};
  c.num_classes = num_classes;
  return c;
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.neighborhood_sizes = {4, 4, 3};
  c.channels = {6, 6, 8};
  c.num_classes = 2;
  return c;
}

void ModelConfig::validate() const {
  if (stages == 0) throw ConfigError("model.stages must be >= 1");
  if (ratios.size() != stages || neighborhood_sizes.size() != stages || channels.size() != stages) {
    throw ConfigError("model.ratios, model.neighborhood_sizes and model.channels must each list " +
                      std::to_string(stages) + " values");
  }
  if (blocks_per_stage == 0) throw ConfigError("model.blocks_per_stage must be >= 1");
  for (std::size_t s = 0; s < stages; ++s) {
    if (ratios[s] == 0) throw ConfigError("model.ratios entries must be >= 1");
    if (neighborhood_sizes[s] == 0) throw ConfigError("model.neighborhood_sizes entries must be >= 1");
    if (channels[s] == 0) throw ConfigError("model.channels entries must be >= 1");
  }
  if (num_classes < 2) throw ConfigError("model.num_classes must be >= 2");
  if (!(temperature_epsilon > 0)) throw ConfigError("model.temperature_epsilon must be > 0");
}

std::vector<std::size_t> ModelConfig::stage_sizes(std::size_t n) const {
  std::vector<std::size_t> sizes;
  std::size_t current = n;
  for (std::size_t s = 0; s < stages; ++s) {
    if (ratios[s] > 1) current = std::max<std::size_t>(1, current / ratios[s]);
    sizes.push_back(current);
  }
  return sizes;
}

void ModelConfig::validate_for(std::size_t n) const {
  validate();
  if (n == 0) throw ConfigError("clouds must contain at least one point");
  const auto sizes = stage_sizes(n);
  for (std::size_t s = 0; s < stages; ++s) {
    if (neighborhood_sizes[s] > sizes[s]) {
      throw ConfigError("stage " + std::to_string(s) + ": k = " +
                        std::to_string(neighborhood_sizes[s]) + " exceeds the " +
                        std::to_string(sizes[s]) + " surviving points");
    }
  }
}

template <typename T>
Var mt_block(Graph<T>& g, Var x, const NeighborhoodIndex& nbr, const BlockSpec& spec,
             const BlockVars& v, std::vector<AttentionTrace<T>>* traces) {
  Var h = ops::linear(g, x, v.fc1_w, v.fc1_b);

  Var mlp_out, attn_out;
  if (spec.mode != BranchMode::attn_only) {
    Var projected = ops::linear(g, h, v.mlp1_w, Var{});
    Var hidden = ops::relu(g, ops::relative_rows(g, projected, nbr, v.mlp1_b));
    hidden = ops::relu(g, ops::linear(g, hidden, v.mlp2_w, v.mlp2_b));
    mlp_out = ops::group_max(g, hidden, nbr.k);
  }
  if (spec.mode != BranchMode::mlp_only) {
    Var q = ops::linear(g, h, v.q_w, v.q_b);
    Var pk = ops::linear(g, h, v.k_w, Var{});
    Var pv = ops::linear(g, h, v.v_w, Var{});
    attn_out = ops::local_attention(g, q, pk, pv, v.k_b, v.v_b, nbr, spec.attention, traces);
  }

  Var fused;
  switch (spec.mode) {
    case BranchMode::hybrid: fused = ops::concat_cols(g, mlp_out, attn_out); break;
    case BranchMode::mlp_only: fused = mlp_out; break;
    case BranchMode::attn_only: fused = attn_out; break;
  }
  Var y = ops::layer_norm(g, ops::linear(g, fused, v.fc2_w, v.fc2_b), v.norm_gain, v.norm_shift);
  if (spec.residual) y = ops::add(g, y, x);
  return y;
}

template <typename T>
MtBlockParams<T> MtBlockParams<T>::random(std::size_t in_channels, std::size_t channels,
                                          BranchMode mode, std::mt19937_64& rng) {
  MtBlockParams<T> p;
  p.mode = mode;
  p.residual = in_channels == channels;
  p.fc1 = LinearLayer<T>::random(in_channels, channels, true, rng);
  p.mlp1 = LinearLayer<T>::random(channels, channels, true, rng);
  p.mlp2 = LinearLayer<T>::random(channels, channels, true, rng);
  p.attn = AttentionParams<T>::random(channels, true, rng);
  const std::size_t fused = mode == BranchMode::hybrid ? 2 * channels : channels;
  p.fc2 = LinearLayer<T>::random(fused, channels, true, rng);
  p.norm_gain = Tensor<T>({channels}, T(1));
  p.norm_shift = Tensor<T>({channels});
  return p;
}

template <typename T>
Tensor<T> mt_block_forward(const Tensor<T>& features, const NeighborhoodIndex& nbr,
                           const MtBlockParams<T>& p) {
  require_rank(features.shape(), 2, "mt_block_forward");
  if (features.cols() != p.fc1.in_features()) {
    throw ShapeError("mt_block_forward: input width " + std::to_string(features.cols()) +
                     " vs FC1 " + shape_string(p.fc1.weight.shape()));
  }
  const std::size_t c = p.fc1.out_features();
  const std::size_t fused = p.mode == BranchMode::hybrid ? 2 * c : c;
  if (p.fc2.in_features() != fused || p.fc2.out_features() != c) {
    throw ShapeError("mt_block_forward: FC2 " + shape_string(p.fc2.weight.shape()) +
                     " does not match branch mode " + to_string(p.mode));
  }
  if (p.residual && features.cols() != c) {
    throw ShapeError("mt_block_forward: residual requires matching widths");
  }
  Graph<T> g(false);
  auto constant = [&](const Tensor<T>& t) { return g.constant(t); };
  auto bias = [&](const LinearLayer<T>& l) { return l.bias ? g.constant(*l.bias) : Var{}; };
  BlockVars v;
  v.fc1_w = constant(p.fc1.weight);
  v.fc1_b = bias(p.fc1);
  v.mlp1_w = constant(p.mlp1.weight);
  v.mlp1_b = bias(p.mlp1);
  v.mlp2_w = constant(p.mlp2.weight);
  v.mlp2_b = bias(p.mlp2);
  v.q_w = constant(p.attn.linear_q.weight);
  v.q_b = bias(p.attn.linear_q);
  v.k_w = constant(p.attn.linear_k.weight);
  v.k_b = bias(p.attn.linear_k);
  v.v_w = constant(p.attn.linear_v.weight);
  v.v_b = bias(p.attn.linear_v);
  v.fc2_w = constant(p.fc2.weight);
  v.fc2_b = bias(p.fc2);
  v.norm_gain = constant(p.norm_gain);
  v.norm_shift = constant(p.norm_shift);
  BlockSpec spec{features.cols(), c, p.mode, p.attn.options, p.residual};
  Var y = mt_block(g, g.constant(features), nbr, spec, v);
  return g.value(y);
}

namespace {

template <typename T>
Tensor<T> classify_rows(const Tensor<T>& rows, const HeadParams<T>& head) {
  Tensor<T> hidden = linear_forward(rows, head.hidden);
  for (auto& v : hidden.data()) v = v > T(0) ? v : T(0);
  return linear_forward(hidden, head.output);
}

template <typename T>
Tensor<T> pooled_feature(const Tensor<T>& point_features, PoolMode mode) {
  require_rank(point_features.shape(), 2, "classification head");
  if (point_features.rows() == 0) throw DomainError("classification head: no point features");
  return pool(point_features, 0, mode).values.reshaped({1, point_features.cols()});
}

}  // namespace

template <typename T>
SpfOutput<T> spf_head_forward(const Tensor<T>& point_features, const HeadParams<T>& head) {
  const Tensor<T> pooled = pooled_feature(point_features, head.pool);
  const std::size_t n = point_features.rows(), c = point_features.cols();
  Tensor<T> stack({n + 1, c});
  std::copy(point_features.data().begin(), point_features.data().end(), stack.data().begin());
  std::copy(pooled.data().begin(), pooled.data().end(),
            stack.data().begin() + static_cast<std::ptrdiff_t>(n * c));
  const Tensor<T> logits = classify_rows(stack, head);
  const std::size_t classes = logits.cols();
  SpfOutput<T> out;
  out.point_logits = Tensor<T>({n, classes});
  std::copy_n(logits.data().begin(), n * classes, out.point_logits.data().begin());
  out.shape_logit = Tensor<T>({1, classes});
  std::copy_n(logits.data().begin() + static_cast<std::ptrdiff_t>(n * classes), classes,
              out.shape_logit.data().begin());
  const Tensor<T> point_logit = pool(out.point_logits, 0, PoolMode::mean).values;
  out.combined = Tensor<T>({1, classes});
  for (std::size_t j = 0; j < classes; ++j) {
    out.combined[j] = T(0.5) * (point_logit[j] + out.shape_logit[j]);
  }
  return out;
}

template <typename T>
Tensor<T> traditional_head_forward(const Tensor<T>& point_features, const HeadParams<T>& head) {
  return classify_rows(pooled_feature(point_features, head.pool), head);
}

std::vector<ParamGroup> param_breakdown(const ModelConfig& config) {
  config.validate();
  const std::size_t b = config.bias ? 1 : 0;
  auto linear = [b](std::size_t in, std::size_t out) { return in * out + b * out; };
  std::vector<ParamGroup> groups;
  groups.push_back({"stem", linear(3, config.channels[0]) + 2 * config.channels[0]});
  std::size_t width = config.channels[0];
  for (std::size_t s = 0; s < config.stages; ++s) {
    const std::size_t c = config.channels[s];
    for (std::size_t k = 0; k < config.blocks_per_stage; ++k) {
      std::size_t count = linear(width, c);
      std::size_t fused = 0;
      if (config.branch_mode != BranchMode::attn_only) {
        count += 2 * linear(c, c);
        fused += c;
      }
      if (config.branch_mode != BranchMode::mlp_only) {
        count += 3 * linear(c, c);
        fused += c;
      }
      count += linear(fused, c) + 2 * c;
      groups.push_back({"stage" + std::to_string(s) + ".block" + std::to_string(k), count});
      width = c;
    }
  }
  groups.push_back({"head", linear(width, config.hidden_width()) +
                                linear(config.hidden_width(), config.num_classes)});
  return groups;
}

std::size_t param_count(const ModelConfig& config) {
  std::size_t total = 0;
  for (const auto& g : param_breakdown(config)) total += g.count;
  return total;
}

template <typename T>
Classifier<T>::Classifier(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const bool bias = config_.bias;
  const std::size_t c0 = config_.channels[0];
  stem_ = LinearHandle::create(store_, "stem.linear", 3, c0, bias, rng);
  stem_gain_ = store_.add("stem.norm.gain", Tensor<T>({c0}, T(1)));
  stem_shift_ = store_.add("stem.norm.shift", Tensor<T>({c0}));

  std::size_t width = c0;
  AttentionOptions attention;
  attention.ta_enabled = config_.ta_enabled;
  attention.epsilon = config_.temperature_epsilon;
  blocks_.resize(config_.stages);
  for (std::size_t s = 0; s < config_.stages; ++s) {
    const std::size_t c = config_.channels[s];
    for (std::size_t k = 0; k < config_.blocks_per_stage; ++k) {
      const std::string name = "stage" + std::to_string(s) + ".block" + std::to_string(k);
      BlockHandles b;
      b.spec = BlockSpec{width, c, config_.branch_mode, attention, width == c};
      b.fc1 = LinearHandle::create(store_, name + ".fc1", width, c, bias, rng);
      std::size_t fused = 0;
      if (config_.branch_mode != BranchMode::attn_only) {
        b.mlp1 = LinearHandle::create(store_, name + ".mlp1", c, c, bias, rng);
        b.mlp2 = LinearHandle::create(store_, name + ".mlp2", c, c, bias, rng);
        fused += c;
      }
      if (config_.branch_mode != BranchMode::mlp_only) {
        b.q = LinearHandle::create(store_, name + ".attn.q", c, c, bias, rng);
        b.k = LinearHandle::create(store_, name + ".attn.k", c, c, bias, rng);
        b.v = LinearHandle::create(store_, name + ".attn.v", c, c, bias, rng);
        fused += c;
      }
      b.fc2 = LinearHandle::create(store_, name + ".fc2", fused, c, bias, rng);
      b.norm_gain = store_.add(name + ".norm.gain", Tensor<T>({c}, T(1)));
      b.norm_shift = store_.add(name + ".norm.shift", Tensor<T>({c}));
      blocks_[s].push_back(b);
      width = c;
    }
  }
  head_hidden_ = LinearHandle::create(store_, "head.hidden", width, config_.hidden_width(), bias, rng);
  head_out_ = LinearHandle::create(store_, "head.output", config_.hidden_width(),
                                   config_.num_classes, bias, rng);
}

template <typename T>
Pyramid<T> Classifier<T>::prepare(const Tensor<T>& coords) const {
  if (coords.rank() != 2 || coords.cols() != 3) {
    throw ShapeError("classifier input must be N x 3, got " + shape_string(coords.shape()));
  }
  config_.validate_for(coords.rows());
  Pyramid<T> pyramid;
  const Tensor<T>* current = &coords;
  for (std::size_t s = 0; s < config_.stages; ++s) {
    StageGeometry<T> stage;
    if (config_.ratios[s] > 1) {
      const std::size_t m = std::max<std::size_t>(1, current->rows() / config_.ratios[s]);
      stage.sampled = farthest_point_sample(*current, m);
      stage.coords = gather_rows(*current, stage.sampled);
    } else {
      stage.coords = *current;
    }
    stage.nbr = knn(stage.coords, stage.coords, config_.neighborhood_sizes[s]);
    pyramid.push_back(std::move(stage));
    current = &pyramid.back().coords;
  }
  return pyramid;
}

template <typename T>
BlockVars Classifier<T>::bind(Graph<T>& g, const BlockHandles& b) const {
  auto w = [&](const LinearHandle& h) { return g.parameter(store_, h.weight); };
  auto bias = [&](const LinearHandle& h) { return h.bias ? g.parameter(store_, *h.bias) : Var{}; };
  BlockVars v;
  v.fc1_w = w(b.fc1);
  v.fc1_b = bias(b.fc1);
  if (b.spec.mode != BranchMode::attn_only) {
    v.mlp1_w = w(b.mlp1);
    v.mlp1_b = bias(b.mlp1);
    v.mlp2_w = w(b.mlp2);
    v.mlp2_b = bias(b.mlp2);
  }
  if (b.spec.mode != BranchMode::mlp_only) {
    v.q_w = w(b.q);
    v.q_b = bias(b.q);
    v.k_w = w(b.k);
    v.k_b = bias(b.k);
    v.v_w = w(b.v);
    v.v_b = bias(b.v);
  }
  v.fc2_w = w(b.fc2);
  v.fc2_b = bias(b.fc2);
  v.norm_gain = g.parameter(store_, b.norm_gain);
  v.norm_shift = g.parameter(store_, b.norm_shift);
  return v;
}

template <typename T>
ForwardVars Classifier<T>::forward(Graph<T>& g, Var input, const Pyramid<T>& pyramid,
                                   bool spf_outputs, std::vector<AttentionTrace<T>>* traces,
                                   std::size_t trace_stage, std::size_t trace_block) const {
  if (pyramid.size() != config_.stages) throw InvariantError("pyramid does not match the model");
  ForwardVars out;
  Var x = ops::linear(g, input, stem_, store_);
  x = ops::relu(g, ops::layer_norm(g, x, g.parameter(store_, stem_gain_),
                                   g.parameter(store_, stem_shift_)));
  for (std::size_t s = 0; s < config_.stages; ++s) {
    if (!pyramid[s].sampled.empty()) x = ops::gather_rows(g, x, pyramid[s].sampled);
    for (std::size_t b = 0; b < blocks_[s].size(); ++b) {
      auto* sink = traces && s == trace_stage && b == trace_block ? traces : nullptr;
      x = mt_block(g, x, pyramid[s].nbr, blocks_[s][b].spec, bind(g, blocks_[s][b]), sink);
    }
    out.stage_features.push_back(x);
  }
  out.features = x;
  out.pooled = ops::reduce_rows(g, x, config_.shape_pool);

  auto classify = [&](Var rows) {
    Var hidden = ops::relu(g, ops::linear(g, rows, head_hidden_, store_));
    return ops::linear(g, hidden, head_out_, store_);
  };
  const std::size_t n = g.value(x).rows();
  if (config_.head == HeadKind::spf || spf_outputs) {
    Var logits = classify(ops::concat_rows(g, x, out.pooled));
    out.point_logits = ops::slice_rows(g, logits, 0, n);
    out.shape_logit = ops::slice_rows(g, logits, n, n + 1);
    out.point_logit = ops::reduce_rows(g, out.point_logits, PoolMode::mean);
    out.combined = ops::average(g, out.point_logit, out.shape_logit);
  }
  if (config_.head == HeadKind::spf) {
    out.prediction = out.combined;
  } else {
    out.prediction = classify(out.pooled);
    if (!out.shape_logit.valid()) out.shape_logit = out.prediction;
  }
  return out;
}

template <typename T>
typename Classifier<T>::Inference Classifier<T>::infer(const Tensor<T>& coords) const {
  const Pyramid<T> pyramid = prepare(coords);
  Graph<T> g(false);
  const ForwardVars f = forward(g, g.constant(coords), pyramid, true);
  Inference out;
  out.spf.shape_logit = g.value(f.shape_logit);
  out.spf.point_logits = g.value(f.point_logits);
  out.spf.combined = g.value(f.combined);
  out.prediction = g.value(f.prediction);
  out.pooled = g.value(f.pooled);
  out.features = g.value(f.features);
  for (const auto& s : pyramid) out.stage_counts.push_back(s.coords.rows());
  return out;
}

template <typename T>
std::vector<AttentionTrace<T>> Classifier<T>::attention_traces(const Tensor<T>& coords,
                                                               std::size_t stage,
                                                               std::size_t block) const {
  if (stage >= config_.stages || block >= config_.blocks_per_stage) {
    throw ArgumentError("attention_traces: no block " + std::to_string(block) + " in stage " +
                        std::to_string(stage));
  }
  if (config_.branch_mode == BranchMode::mlp_only) {
    throw ArgumentError("attention_traces: model has no attention branch");
  }
  const Pyramid<T> pyramid = prepare(coords);
  Graph<T> g(false);
  std::vector<AttentionTrace<T>> traces;
  forward(g, g.constant(coords), pyramid, false, &traces, stage, block);
  return traces;
}

template <typename T>
std::size_t Classifier<T>::predict(const Tensor<T>& coords) const {
  const Pyramid<T> pyramid = prepare(coords);
  Graph<T> g(false);
  const Tensor<T>& logits = g.value(forward(g, g.constant(coords), pyramid).prediction);
  return static_cast<std::size_t>(std::max_element(logits.data().begin(), logits.data().end()) -
                                  logits.data().begin());
}

template <typename T>
MtBlockParams<T> Classifier<T>::block_params(std::size_t stage, std::size_t block) const {
  const BlockHandles& b = blocks_.at(stage).at(block);
  MtBlockParams<T> p;
  p.mode = b.spec.mode;
  p.residual = b.spec.residual;
  p.fc1 = b.fc1.materialize(store_);
  if (p.mode != BranchMode::attn_only) {
    p.mlp1 = b.mlp1.materialize(store_);
    p.mlp2 = b.mlp2.materialize(store_);
  }
  if (p.mode != BranchMode::mlp_only) {
    p.attn.linear_q = b.q.materialize(store_);
    p.attn.linear_k = b.k.materialize(store_);
    p.attn.linear_v = b.v.materialize(store_);
  }
  p.attn.options = b.spec.attention;
  p.fc2 = b.fc2.materialize(store_);
  p.norm_gain = store_[b.norm_gain].value;
  p.norm_shift = store_[b.norm_shift].value;
  return p;
}

template <typename T>
HeadParams<T> Classifier<T>::head_params() const {
  return HeadParams<T>{head_hidden_.materialize(store_), head_out_.materialize(store_),
                       config_.shape_pool};
}

#define POINTMT_INSTANTIATE(T)                                                                 \
  template Var mt_block<T>(Graph<T>&, Var, const NeighborhoodIndex&, const BlockSpec&,         \
                           const BlockVars&, std::vector<AttentionTrace<T>>*);                 \
  template struct MtBlockParams<T>;                                                            \
  template Tensor<T> mt_block_forward<T>(const Tensor<T>&, const NeighborhoodIndex&,           \
                                         const MtBlockParams<T>&);                             \
  template SpfOutput<T> spf_head_forward<T>(const Tensor<T>&, const HeadParams<T>&);           \
  template Tensor<T> traditional_head_forward<T>(const Tensor<T>&, const HeadParams<T>&);      \
  template class Classifier<T>;

POINTMT_INSTANTIATE(float)
POINTMT_INSTANTIATE(double)

#undef POINTMT_INSTANTIATE

}  // namespace pointmt
