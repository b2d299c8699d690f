#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pointmt/tensor.hpp"

namespace pointmt {

using ParamId = std::size_t;

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> gradient;
};

/// Owns every trainable tensor of a model. Names are unique.
template <typename T>
class ParameterStore {
 public:
  ParamId add(std::string name, Tensor<T> value);

  Parameter<T>& operator[](ParamId id) { return params_.at(id); }
  const Parameter<T>& operator[](ParamId id) const { return params_.at(id); }

  std::size_t size() const noexcept { return params_.size(); }
  std::optional<ParamId> find(const std::string& name) const;
  std::size_t scalar_count() const;
  void zero_grad();

  std::vector<Parameter<T>>& all() noexcept { return params_; }
  const std::vector<Parameter<T>>& all() const noexcept { return params_; }

 private:
  std::vector<Parameter<T>> params_;
};

template <typename T>
struct LinearLayer {
  Tensor<T> weight;  // C_in x C_out
  std::optional<Tensor<T>> bias;

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  /// Uniform(-1/sqrt(C_in), 1/sqrt(C_in)) for weight and bias.
  static LinearLayer random(std::size_t in, std::size_t out, bool with_bias, std::mt19937_64& rng);
};

/// Parameter ids of a linear layer registered in a ParameterStore.
struct LinearHandle {
  ParamId weight = 0;
  std::optional<ParamId> bias;

  template <typename T>
  static LinearHandle create(ParameterStore<T>& store, const std::string& name, std::size_t in,
                             std::size_t out, bool with_bias, std::mt19937_64& rng);

  template <typename T>
  LinearLayer<T> materialize(const ParameterStore<T>& store) const;
};

enum class PoolMode { max, mean };

template <typename T>
struct PoolResult {
  Tensor<T> values;                  // input shape with the pooled axis removed
  std::vector<std::size_t> argmax;   // max mode only; index along the pooled axis
};

/// x[..., C_in] -> x[..., C_out] = x * weight (+ bias).
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const LinearLayer<T>& layer);

/// Softmax along `axis` of exp((s - max s) / t). `temperature` is a single
/// value or has the rank of `scores` with every extent equal or 1.
template <typename T>
Tensor<T> softmax(const Tensor<T>& scores, std::size_t axis, const Tensor<T>& temperature);

template <typename T>
Tensor<T> softmax(const Tensor<T>& scores, std::size_t axis, T temperature = T(1));

template <typename T>
PoolResult<T> pool(const Tensor<T>& x, std::size_t axis, PoolMode mode);

/// Gradient of `pool` with respect to its input: max routes to the argmax
/// slot, mean spreads evenly.
template <typename T>
Tensor<T> pool_backward(const PoolResult<T>& forward, const Tensor<T>& grad_out,
                        const Shape& input_shape, std::size_t axis, PoolMode mode);

inline constexpr double kLayerNormEpsilon = 1e-5;

/// Per-row standardization over the last axis, then gain/shift.
template <typename T>
Tensor<T> layer_normalize(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift,
                          T epsilon = T(kLayerNormEpsilon));

namespace kernels {

// out[r, :] = bias + sum_c x[r, c] * w[c, :]. Each row is computed
// independently with a fixed accumulation order, so a row's result does not
// depend on the other rows in the batch.
template <typename T>
void gemm_rows(const T* x, std::size_t rows, std::size_t in, const T* w, std::size_t out,
               const T* bias, T* y);

// dx[r, c] += sum_j dy[r, j] * w[c, j]
template <typename T>
void gemm_rows_grad_input(const T* dy, std::size_t rows, std::size_t out, const T* w,
                          std::size_t in, T* dx);

// dw[c, j] += sum_r x[r, c] * dy[r, j]
template <typename T>
void gemm_rows_grad_weight(const T* x, const T* dy, std::size_t rows, std::size_t in,
                           std::size_t out, T* dw);

}  // namespace kernels

}  // namespace pointmt
