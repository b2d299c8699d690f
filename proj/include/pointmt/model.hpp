#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pointmt/attention.hpp"
#include "pointmt/geometry.hpp"
#include "pointmt/graph.hpp"
#include "pointmt/layers.hpp"

namespace pointmt {

enum class HeadKind { spf, traditional };
enum class BranchMode { hybrid, mlp_only, attn_only };

std::string to_string(HeadKind head);
std::string to_string(BranchMode mode);
std::string to_string(PoolMode mode);
HeadKind parse_head(const std::string& s);
BranchMode parse_branch_mode(const std::string& s);
PoolMode parse_pool_mode(const std::string& s);

struct ModelConfig {
  std::size_t stages = 3;
  std::vector<std::size_t> ratios{1, 2, 2};
  std::vector<std::size_t> neighborhood_sizes{8, 12, 16};
  std::vector<std::size_t> channels{64, 128, 256};
  std::size_t blocks_per_stage = 1;
  HeadKind head = HeadKind::spf;
  BranchMode branch_mode = BranchMode::hybrid;
  std::size_t num_classes = 40;
  bool ta_enabled = true;
  double temperature_epsilon = kTemperatureEpsilon;
  PoolMode shape_pool = PoolMode::max;
  bool bias = true;
  std::size_t head_hidden = 0;  // 0 means channels.back() / 2

  /// Three stages, ratios 1/2/2, k 8/12/16, channels 64/128/256, 40 classes.
  static ModelConfig reference();
  /// Desk-scale default for 128-point synthetic clouds.
  static ModelConfig desk(std::size_t num_classes = 8);
  /// 2-class model small enough for exhaustive finite differences on 16 points.
  static ModelConfig toy();

  std::size_t hidden_width() const { return head_hidden ? head_hidden : std::max<std::size_t>(1, channels.back() / 2); }

  /// Structural checks (list lengths, ratios, widths).
  void validate() const;
  /// Stage point counts for an N-point input: floor(previous / ratio), min 1.
  std::vector<std::size_t> stage_sizes(std::size_t n) const;
  /// Structural checks plus k <= surviving points at every stage.
  void validate_for(std::size_t n) const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Geometry of one cloud through the encoder; depends on coordinates only.
template <typename T>
struct StageGeometry {
  std::vector<std::size_t> sampled;  // rows of the previous stage kept (empty: all kept)
  Tensor<T> coords;
  NeighborhoodIndex nbr;
};

template <typename T>
using Pyramid = std::vector<StageGeometry<T>>;

/// Vars of one MT-Block's parameters inside a graph.
struct BlockVars {
  Var fc1_w, fc1_b;
  Var mlp1_w, mlp1_b, mlp2_w, mlp2_b;
  Var q_w, q_b, k_w, k_b, v_w, v_b;
  Var fc2_w, fc2_b;
  Var norm_gain, norm_shift;
};

struct BlockSpec {
  std::size_t in_channels = 0;
  std::size_t channels = 0;
  BranchMode mode = BranchMode::hybrid;
  AttentionOptions attention;
  bool residual = false;
};

/// h = FC1(x); MLP branch: two shared linear+ReLU layers over relative
/// neighbor features, max over neighbors; attention branch: TA-attention on
/// h; concat, FC2, layer norm, residual when widths match.
template <typename T>
Var mt_block(Graph<T>& g, Var x, const NeighborhoodIndex& nbr, const BlockSpec& spec,
             const BlockVars& vars, std::vector<AttentionTrace<T>>* traces = nullptr);

/// Value-level MT-Block parameters.
template <typename T>
struct MtBlockParams {
  LinearLayer<T> fc1;
  LinearLayer<T> mlp1, mlp2;
  AttentionParams<T> attn;
  LinearLayer<T> fc2;  // 2C -> C (hybrid) or C -> C (single branch)
  Tensor<T> norm_gain, norm_shift;
  BranchMode mode = BranchMode::hybrid;
  bool residual = true;

  static MtBlockParams random(std::size_t in_channels, std::size_t channels, BranchMode mode,
                              std::mt19937_64& rng);
};

template <typename T>
Tensor<T> mt_block_forward(const Tensor<T>& features, const NeighborhoodIndex& nbr,
                           const MtBlockParams<T>& params);

template <typename T>
struct HeadParams {
  LinearLayer<T> hidden;  // C_L -> H
  LinearLayer<T> output;  // H -> classes
  PoolMode pool = PoolMode::max;
};

template <typename T>
struct SpfOutput {
  Tensor<T> shape_logit;   // 1 x K
  Tensor<T> point_logits;  // N x K
  Tensor<T> combined;      // 1 x K
};

/// Shared classifier over the N point features and their pooled feature.
template <typename T>
SpfOutput<T> spf_head_forward(const Tensor<T>& point_features, const HeadParams<T>& head);

/// Classifier over the pooled feature only.
template <typename T>
Tensor<T> traditional_head_forward(const Tensor<T>& point_features, const HeadParams<T>& head);

/// Vars produced by one classifier forward pass.
struct ForwardVars {
  std::vector<Var> stage_features;
  Var features;      // N_L x C_L
  Var pooled;        // 1 x C_L
  Var shape_logit;   // 1 x K
  Var point_logits;  // N_L x K (invalid unless SPF outputs were requested)
  Var point_logit;   // 1 x K
  Var combined;      // 1 x K
  Var prediction;    // the configured head's logits
};

struct ParamGroup {
  std::string module;
  std::size_t count = 0;
};

/// Scalar parameter count per module, in construction order.
std::vector<ParamGroup> param_breakdown(const ModelConfig& config);
std::size_t param_count(const ModelConfig& config);

/// The hierarchical PointMT classifier.
template <typename T>
class Classifier {
 public:
  Classifier(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  ParameterStore<T>& parameters() noexcept { return store_; }
  const ParameterStore<T>& parameters() const noexcept { return store_; }

  /// FPS downsampling and kNN for every stage.
  Pyramid<T> prepare(const Tensor<T>& coords) const;

  /// Builds the forward graph. `input` holds the N x 3 coordinates used as
  /// the initial features. SPF outputs are always produced for the SPF head;
  /// `spf_outputs` also grafts them onto a traditional model.
  ForwardVars forward(Graph<T>& g, Var input, const Pyramid<T>& pyramid, bool spf_outputs = false,
                      std::vector<AttentionTrace<T>>* traces = nullptr,
                      std::size_t trace_stage = 0, std::size_t trace_block = 0) const;

  /// Inference on a cloud: every head output plus the final point features.
  struct Inference {
    SpfOutput<T> spf;
    Tensor<T> prediction;
    Tensor<T> pooled;
    Tensor<T> features;
    std::vector<std::size_t> stage_counts;
  };
  Inference infer(const Tensor<T>& coords) const;

  /// Attention weights of one block for every center of that stage.
  std::vector<AttentionTrace<T>> attention_traces(const Tensor<T>& coords, std::size_t stage,
                                                  std::size_t block) const;

  std::size_t predict(const Tensor<T>& coords) const;

  MtBlockParams<T> block_params(std::size_t stage, std::size_t block) const;
  HeadParams<T> head_params() const;

 private:
  struct BlockHandles {
    BlockSpec spec;
    LinearHandle fc1, mlp1, mlp2, q, k, v, fc2;
    ParamId norm_gain = 0, norm_shift = 0;
  };

  BlockVars bind(Graph<T>& g, const BlockHandles& b) const;

  ModelConfig config_;
  ParameterStore<T> store_;
  LinearHandle stem_;
  ParamId stem_gain_ = 0, stem_shift_ = 0;
  std::vector<std::vector<BlockHandles>> blocks_;
  LinearHandle head_hidden_, head_out_;
};

}  // namespace pointmt
