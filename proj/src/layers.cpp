#include "pointmt/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pointmt {

template <typename T>
ParamId ParameterStore<T>::add(std::string name, Tensor<T> value) {
  if (find(name)) throw ArgumentError("duplicate parameter name: " + name);
  Tensor<T> grad(value.shape());
  params_.push_back({std::move(name), std::move(value), std::move(grad)});
  return params_.size() - 1;
}

template <typename T>
std::optional<ParamId> ParameterStore<T>::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  return std::nullopt;
}

template <typename T>
std::size_t ParameterStore<T>::scalar_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.value.size();
  return total;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p.gradient.fill(T(0));
}

template <typename T>
LinearLayer<T> LinearLayer<T>::random(std::size_t in, std::size_t out, bool with_bias,
                                      std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  LinearLayer<T> layer;
  layer.weight = Tensor<T>({in, out});
  for (auto& v : layer.weight.data()) v = static_cast<T>(dist(rng));
  if (with_bias) {
    layer.bias = Tensor<T>({out});
    for (auto& v : layer.bias->data()) v = static_cast<T>(dist(rng));
  }
  return layer;
}

template <typename T>
LinearHandle LinearHandle::create(ParameterStore<T>& store, const std::string& name,
                                  std::size_t in, std::size_t out, bool with_bias,
                                  std::mt19937_64& rng) {
  auto layer = LinearLayer<T>::random(in, out, with_bias, rng);
  LinearHandle handle;
  handle.weight = store.add(name + ".weight", std::move(layer.weight));
  if (layer.bias) handle.bias = store.add(name + ".bias", std::move(*layer.bias));
  return handle;
}

template <typename T>
LinearLayer<T> LinearHandle::materialize(const ParameterStore<T>& store) const {
  LinearLayer<T> layer;
  layer.weight = store[weight].value;
  if (bias) layer.bias = store[*bias].value;
  return layer;
}

namespace kernels {

template <typename T>
void gemm_rows(const T* x, std::size_t rows, std::size_t in, const T* w, std::size_t out,
               const T* bias, T* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* yr = y + r * out;
    if (bias) {
      std::copy(bias, bias + out, yr);
    } else {
      std::fill(yr, yr + out, T(0));
    }
    const T* xr = x + r * in;
    for (std::size_t c = 0; c < in; ++c) {
      const T xv = xr[c];
      const T* wc = w + c * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += xv * wc[j];
    }
  }
}

template <typename T>
void gemm_rows_grad_input(const T* dy, std::size_t rows, std::size_t out, const T* w,
                          std::size_t in, T* dx) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* dyr = dy + r * out;
    T* dxr = dx + r * in;
    for (std::size_t c = 0; c < in; ++c) {
      const T* wc = w + c * out;
      T acc = 0;
      for (std::size_t j = 0; j < out; ++j) acc += dyr[j] * wc[j];
      dxr[c] += acc;
    }
  }
}

template <typename T>
void gemm_rows_grad_weight(const T* x, const T* dy, std::size_t rows, std::size_t in,
                           std::size_t out, T* dw) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * in;
    const T* dyr = dy + r * out;
    for (std::size_t c = 0; c < in; ++c) {
      const T xv = xr[c];
      if (xv == T(0)) continue;
      T* dwc = dw + c * out;
      for (std::size_t j = 0; j < out; ++j) dwc[j] += xv * dyr[j];
    }
  }
}

}  // namespace kernels

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const LinearLayer<T>& layer) {
  require_rank(layer.weight.shape(), 2, "linear_forward weight");
  if (x.rank() == 0 || x.shape().back() != layer.in_features()) {
    throw ShapeError("linear_forward: input " + shape_string(x.shape()) + " vs weight " +
                     shape_string(layer.weight.shape()));
  }
  if (layer.bias && layer.bias->size() != layer.out_features()) {
    throw ShapeError("linear_forward: bias " + shape_string(layer.bias->shape()) +
                     " vs weight " + shape_string(layer.weight.shape()));
  }
  Shape out_shape = x.shape();
  out_shape.back() = layer.out_features();
  Tensor<T> y(out_shape);
  const std::size_t rows = x.size() / layer.in_features();
  kernels::gemm_rows(x.data().data(), rows, layer.in_features(), layer.weight.data().data(),
                     layer.out_features(), layer.bias ? layer.bias->data().data() : nullptr,
                     y.data().data());
  return y;
}

namespace {

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// Expands `t` to `target` under size-1 broadcasting.
template <typename T>
std::vector<T> broadcast_to(const Tensor<T>& t, const Shape& target) {
  const std::size_t total = shape_size(target);
  if (t.size() == 1) return std::vector<T>(total, t[0]);
  if (t.rank() != target.size()) {
    throw ShapeError("temperature " + shape_string(t.shape()) + " not broadcastable to " +
                     shape_string(target));
  }
  std::vector<std::size_t> strides(target.size(), 0);
  std::size_t stride = 1;
  for (std::size_t d = target.size(); d-- > 0;) {
    const std::size_t ext = t.shape()[d];
    if (ext != 1 && ext != target[d]) {
      throw ShapeError("temperature " + shape_string(t.shape()) + " not broadcastable to " +
                       shape_string(target));
    }
    strides[d] = ext == 1 ? 0 : stride;
    stride *= ext;
  }
  std::vector<T> out(total);
  std::vector<std::size_t> idx(target.size(), 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < target.size(); ++d) src += idx[d] * strides[d];
    out[flat] = t[src];
    for (std::size_t d = target.size(); d-- > 0;) {
      if (++idx[d] < target[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> softmax(const Tensor<T>& scores, std::size_t axis, const Tensor<T>& temperature) {
  for (T t : temperature.data()) {
    if (!(t > T(0)) || !std::isfinite(t)) {
      throw DomainError("softmax: temperature must be strictly positive and finite");
    }
  }
  const auto split = split_axis(scores.shape(), axis);
  if (split.len == 0) throw DomainError("softmax: empty axis");
  const std::vector<T> temp = broadcast_to(temperature, scores.shape());
  Tensor<T> out(scores.shape());
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t i = 0; i < split.inner; ++i) {
      const std::size_t base = o * split.len * split.inner + i;
      // The shift uses the max of s/t, which equals the max of s when t is
      // constant along the axis.
      T peak = -std::numeric_limits<T>::infinity();
      for (std::size_t a = 0; a < split.len; ++a) {
        const std::size_t at = base + a * split.inner;
        peak = std::max(peak, scores[at] / temp[at]);
      }
      T total = 0;
      for (std::size_t a = 0; a < split.len; ++a) {
        const std::size_t at = base + a * split.inner;
        out[at] = std::exp(scores[at] / temp[at] - peak);
        total += out[at];
      }
      for (std::size_t a = 0; a < split.len; ++a) out[base + a * split.inner] /= total;
    }
  }
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& scores, std::size_t axis, T temperature) {
  return softmax(scores, axis, Tensor<T>({1}, std::vector<T>{temperature}));
}

template <typename T>
PoolResult<T> pool(const Tensor<T>& x, std::size_t axis, PoolMode mode) {
  const auto split = split_axis(x.shape(), axis);
  if (split.len == 0) throw DomainError("pool: empty axis");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  PoolResult<T> result{Tensor<T>(out_shape), {}};
  if (mode == PoolMode::max) result.argmax.assign(split.outer * split.inner, 0);
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t i = 0; i < split.inner; ++i) {
      const std::size_t base = o * split.len * split.inner + i;
      const std::size_t dst = o * split.inner + i;
      if (mode == PoolMode::max) {
        std::size_t best = 0;
        for (std::size_t a = 1; a < split.len; ++a) {
          if (x[base + a * split.inner] > x[base + best * split.inner]) best = a;
        }
        result.values[dst] = x[base + best * split.inner];
        result.argmax[dst] = best;
      } else {
        T total = 0;
        for (std::size_t a = 0; a < split.len; ++a) total += x[base + a * split.inner];
        result.values[dst] = total / static_cast<T>(split.len);
      }
    }
  }
  return result;
}

template <typename T>
Tensor<T> pool_backward(const PoolResult<T>& forward, const Tensor<T>& grad_out,
                        const Shape& input_shape, std::size_t axis, PoolMode mode) {
  const auto split = split_axis(input_shape, axis);
  if (grad_out.size() != split.outer * split.inner) {
    throw ShapeError("pool_backward: gradient " + shape_string(grad_out.shape()) +
                     " vs input " + shape_string(input_shape));
  }
  Tensor<T> grad_in(input_shape);
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t i = 0; i < split.inner; ++i) {
      const std::size_t base = o * split.len * split.inner + i;
      const std::size_t dst = o * split.inner + i;
      if (mode == PoolMode::max) {
        grad_in[base + forward.argmax[dst] * split.inner] += grad_out[dst];
      } else {
        const T share = grad_out[dst] / static_cast<T>(split.len);
        for (std::size_t a = 0; a < split.len; ++a) grad_in[base + a * split.inner] += share;
      }
    }
  }
  return grad_in;
}

template <typename T>
Tensor<T> layer_normalize(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift,
                          T epsilon) {
  if (x.rank() == 0 || x.shape().back() == 0) throw ShapeError("layer_normalize: C must be >= 1");
  const std::size_t c = x.shape().back();
  if (gain.size() != c || shift.size() != c) {
    throw ShapeError("layer_normalize: gain/shift width does not match " + shape_string(x.shape()));
  }
  Tensor<T> y(x.shape());
  const std::size_t rows = x.size() / c;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data().data() + r * c;
    T mean = 0;
    for (std::size_t j = 0; j < c; ++j) mean += xr[j];
    mean /= static_cast<T>(c);
    T var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(c);
    const T inv = T(1) / std::sqrt(var + epsilon);
    T* yr = y.data().data() + r * c;
    for (std::size_t j = 0; j < c; ++j) yr[j] = (xr[j] - mean) * inv * gain[j] + shift[j];
  }
  return y;
}

#define POINTMT_INSTANTIATE(T)                                                                  \
  template class ParameterStore<T>;                                                             \
  template struct LinearLayer<T>;                                                               \
  template LinearHandle LinearHandle::create<T>(ParameterStore<T>&, const std::string&,         \
                                                std::size_t, std::size_t, bool,                 \
                                                std::mt19937_64&);                              \
  template LinearLayer<T> LinearHandle::materialize<T>(const ParameterStore<T>&) const;         \
  template void kernels::gemm_rows<T>(const T*, std::size_t, std::size_t, const T*,             \
                                      std::size_t, const T*, T*);                               \
  template void kernels::gemm_rows_grad_input<T>(const T*, std::size_t, std::size_t, const T*, \
                                                 std::size_t, T*);                              \
  template void kernels::gemm_rows_grad_weight<T>(const T*, const T*, std::size_t,              \
                                                  std::size_t, std::size_t, T*);                \
  template Tensor<T> linear_forward<T>(const Tensor<T>&, const LinearLayer<T>&);                \
  template Tensor<T> softmax<T>(const Tensor<T>&, std::size_t, const Tensor<T>&);               \
  template Tensor<T> softmax<T>(const Tensor<T>&, std::size_t, T);                              \
  template PoolResult<T> pool<T>(const Tensor<T>&, std::size_t, PoolMode);                      \
  template Tensor<T> pool_backward<T>(const PoolResult<T>&, const Tensor<T>&, const Shape&,    \
                                      std::size_t, PoolMode);                                   \
  template Tensor<T> layer_normalize<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                        T);

POINTMT_INSTANTIATE(float)
POINTMT_INSTANTIATE(double)

#undef POINTMT_INSTANTIATE

}  // namespace pointmt
