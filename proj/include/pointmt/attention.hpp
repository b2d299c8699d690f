#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pointmt/geometry.hpp"
#include "pointmt/graph.hpp"
#include "pointmt/layers.hpp"
#include "pointmt/tensor.hpp"

namespace pointmt {

inline constexpr double kTemperatureEpsilon = 1e-6;

/// Knobs shared by the value-level functions and the graph op.
struct AttentionOptions {
  bool ta_enabled = true;
  double epsilon = kTemperatureEpsilon;  // clamp on V2/sqrt(k)
  bool force_unit_temperature = false;   // test hook: T = 1 on every channel
};

template <typename T>
struct AttentionParams {
  LinearLayer<T> linear_q, linear_k, linear_v;  // all C -> C
  AttentionOptions options;

  std::size_t channels() const { return linear_q.in_features(); }

  static AttentionParams random(std::size_t channels, bool ta_enabled, std::mt19937_64& rng);
};

/// Intermediates of one center point. Vectors are 1 x C or 1 x k; matrices
/// are k x C. For linear (non-TA) attention `w` holds W_token broadcast over
/// channels and `temperature` is all ones.
template <typename T>
struct AttentionTrace {
  std::size_t center = 0;
  Tensor<T> q;            // C
  Tensor<T> k_mat;        // k x C
  Tensor<T> v_mat;        // k x C
  Tensor<T> score;        // k
  Tensor<T> w_token;      // k
  Tensor<T> v2_bar;       // C
  Tensor<T> temperature;  // C
  Tensor<T> w;            // k x C
  Tensor<T> z;            // C
};

template <typename T>
struct AttentionResult {
  Tensor<T> z;  // N x C
  std::vector<AttentionTrace<T>> traces;
};

template <typename T>
struct ChannelStats {
  Tensor<T> weighted_mean;  // C
  Tensor<T> diversity;      // C
  Tensor<T> second_moment;  // C
};

/// Score = Q K^T / sqrt(C), W_token = softmax(Score), Z = W_token V, where
/// Q = Linear_Q(f_i) and K, V = Linear_{K,V}(f_j - f_i).
template <typename T>
AttentionResult<T> linear_local_attention(const Tensor<T>& features, const NeighborhoodIndex& nbr,
                                          const AttentionParams<T>& params,
                                          bool with_traces = false);

/// Per-channel weighted second moment: sum_i w_i v_ij^2.
template <typename T>
Tensor<T> channel_second_moment(const Tensor<T>& w_token, const Tensor<T>& v_mat);

/// T_j = 1 / max(v2_bar_j / sqrt(k), epsilon).
template <typename T>
Tensor<T> temperature(const Tensor<T>& v2_bar, std::size_t k, double epsilon = kTemperatureEpsilon);

/// Temperature-adaptive attention: the shared score row is divided by a
/// per-channel temperature before a per-channel softmax over the neighbors.
template <typename T>
AttentionResult<T> ta_attention(const Tensor<T>& features, const NeighborhoodIndex& nbr,
                                const AttentionParams<T>& params, bool with_traces = false);

/// Weighted mean, weighted variance (diversity) and weighted second moment of
/// each value column; second_moment == mean^2 + diversity.
template <typename T>
ChannelStats<T> moment_decomposition(const Tensor<T>& w_token, const Tensor<T>& v_mat);

/// Conventional local self-attention baseline: every neighborhood token
/// queries the whole neighborhood (k x k scores per center). Token a uses
/// Q = Linear_Q(f_a) and the same relative K, V as the linear variant; the
/// center's own updated token is returned.
template <typename T>
Tensor<T> quadratic_local_attention(const Tensor<T>& features, const NeighborhoodIndex& nbr,
                                    const AttentionParams<T>& params);

// ---------------------------------------------------------------------------
// Operation counts.
//
// Convention: one multiply-accumulate, add, subtract, multiply, divide or
// exponential is one FLOP; comparisons are free.
//   projection   3nc^2 MACs + nc (bias of Q; the K/V biases are added while
//                gathering)
//   gather       4kc per center (difference and bias for K and V)
//   score        per query-key pair: c MACs + 1 scaling
//   softmax      4 per entry (shift, exp, sum, divide)
//   aggregation  c MACs per query-key pair
// Linear mode has one query per center, quadratic mode has k.

enum class AttentionMode { linear, quadratic };

struct FlopBreakdown {
  std::uint64_t projection = 0;
  std::uint64_t gather = 0;
  std::uint64_t score = 0;
  std::uint64_t softmax = 0;
  std::uint64_t aggregation = 0;

  std::uint64_t score_aggregation() const { return score + aggregation; }
  std::uint64_t core() const { return gather + score + softmax + aggregation; }
  std::uint64_t total() const { return projection + core(); }

  friend bool operator==(const FlopBreakdown&, const FlopBreakdown&) = default;
};

FlopBreakdown flop_count(AttentionMode mode, std::size_t n, std::size_t k, std::size_t c);

/// Projected inputs of the attention core.
template <typename T>
struct ProjectedFeatures {
  Tensor<T> q;   // N x C, bias included
  Tensor<T> pk;  // N x C, features * W_k
  Tensor<T> pv;  // N x C, features * W_v
  Tensor<T> bias_k;
  Tensor<T> bias_v;
};

template <typename T>
ProjectedFeatures<T> project(const Tensor<T>& features, const AttentionParams<T>& params,
                             FlopBreakdown* counter = nullptr);

/// Everything after the projections. When `counter` is set every executed
/// operation is tallied into it.
template <typename T>
Tensor<T> attention_core(const ProjectedFeatures<T>& projected, const NeighborhoodIndex& nbr,
                         AttentionMode mode, FlopBreakdown* counter = nullptr);

namespace ops {

/// Fused (TA-)attention over projected features with hand-derived backward.
/// q: N x C (bias included), pk/pv: N x C without bias; bias_k/bias_v may be
/// invalid Vars. Optionally records one trace per center.
template <typename T>
Var local_attention(Graph<T>& g, Var q, Var pk, Var pv, Var bias_k, Var bias_v,
                    const NeighborhoodIndex& nbr, const AttentionOptions& options,
                    std::vector<AttentionTrace<T>>* traces = nullptr);

}  // namespace ops

}  // namespace pointmt
