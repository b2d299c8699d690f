#include "pointmt/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace pointmt {

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::input(Tensor<T> value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = record_;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::parameter(const ParameterStore<T>& store, ParamId id) {
  Node node;
  node.external = &store[id].value;
  node.param = id;
  node.requires_grad = record_;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::emit(Tensor<T> value, std::initializer_list<Var> parents, Backward backward) {
  Node node;
  node.value = std::move(value);
  if (record_) {
    for (Var p : parents) {
      if (p.valid() && nodes_.at(p.id).requires_grad) node.requires_grad = true;
    }
    if (node.requires_grad) node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
  const Node& node = nodes_.at(v.id);
  return node.external ? *node.external : node.value;
}

template <typename T>
Tensor<T> Graph<T>::grad(Var v) const {
  const Node& node = nodes_.at(v.id);
  if (node.grad.empty()) return Tensor<T>(value(v).shape());
  return node.grad;
}

template <typename T>
Tensor<T>& Graph<T>::grad_buffer(Var v) {
  Node& node = nodes_.at(v.id);
  if (node.grad.empty()) node.grad = Tensor<T>(value(v).shape());
  return node.grad;
}

template <typename T>
void Graph<T>::backward(Var root) {
  if (!record_) throw InvariantError("backward on a non-recording graph");
  if (value(root).size() != 1) {
    throw ShapeError("backward root must be a single value, got " +
                     shape_string(value(root).shape()));
  }
  grad_buffer(root).fill(T(1));
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty() || !node.backward) continue;
    node.backward(*this, node.grad);
  }
}

template <typename T>
void Graph<T>::accumulate_parameter_grads(std::vector<Tensor<T>>& grads) const {
  for (const Node& node : nodes_) {
    if (!node.param || node.grad.empty()) continue;
    Tensor<T>& into = grads.at(*node.param);
    if (into.empty()) into = Tensor<T>(node.grad.shape());
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += node.grad[i];
  }
}

namespace ops {

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src, T scale = T(1)) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

template <typename T>
void require_matrix(const Tensor<T>& x, const char* what) {
  if (x.rank() != 2) {
    throw ShapeError(std::string(what) + ": expected a matrix, got " + shape_string(x.shape()));
  }
}

}  // namespace

template <typename T>
Var linear(Graph<T>& g, Var x, Var weight, Var bias) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& wv = g.value(weight);
  require_matrix(xv, "linear input");
  require_matrix(wv, "linear weight");
  if (xv.cols() != wv.dim(0)) {
    throw ShapeError("linear: input " + shape_string(xv.shape()) + " vs weight " +
                     shape_string(wv.shape()));
  }
  const T* bias_data = nullptr;
  if (bias.valid()) {
    if (g.value(bias).size() != wv.dim(1)) throw ShapeError("linear: bias width mismatch");
    bias_data = g.value(bias).data().data();
  }
  const std::size_t rows = xv.rows(), in = wv.dim(0), out = wv.dim(1);
  Tensor<T> y({rows, out});
  kernels::gemm_rows(xv.data().data(), rows, in, wv.data().data(), out, bias_data,
                     y.data().data());
  return g.emit(std::move(y), {x, weight, bias}, [=](Graph<T>& g, const Tensor<T>& dy) {
    const Tensor<T>& xv = g.value(x);
    const Tensor<T>& wv = g.value(weight);
    if (g.requires_grad(x)) {
      kernels::gemm_rows_grad_input(dy.data().data(), rows, out, wv.data().data(), in,
                                    g.grad_buffer(x).data().data());
    }
    if (g.requires_grad(weight)) {
      kernels::gemm_rows_grad_weight(xv.data().data(), dy.data().data(), rows, in, out,
                                     g.grad_buffer(weight).data().data());
    }
    if (bias.valid() && g.requires_grad(bias)) {
      Tensor<T>& db = g.grad_buffer(bias);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < out; ++j) db[j] += dy[r * out + j];
      }
    }
  });
}

template <typename T>
Var linear(Graph<T>& g, Var x, const LinearHandle& layer, const ParameterStore<T>& store) {
  Var w = g.parameter(store, layer.weight);
  Var b = layer.bias ? g.parameter(store, *layer.bias) : Var{};
  return linear(g, x, w, b);
}

template <typename T>
Var relu(Graph<T>& g, Var x) {
  Tensor<T> y = g.value(x);
  for (auto& v : y.data()) v = v > T(0) ? v : T(0);
  return g.emit(std::move(y), {x}, [=](Graph<T>& g, const Tensor<T>& dy) {
    const Tensor<T>& xv = g.value(x);
    Tensor<T>& dx = g.grad_buffer(x);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (xv[i] > T(0)) dx[i] += dy[i];
    }
  });
}

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "add");
  Tensor<T> y = g.value(a);
  add_into(y, g.value(b));
  return g.emit(std::move(y), {a, b}, [=](Graph<T>& g, const Tensor<T>& dy) {
    if (g.requires_grad(a)) add_into(g.grad_buffer(a), dy);
    if (g.requires_grad(b)) add_into(g.grad_buffer(b), dy);
  });
}

template <typename T>
Var average(Graph<T>& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "average");
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  Tensor<T> y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = T(0.5) * (av[i] + bv[i]);
  return g.emit(std::move(y), {a, b}, [=](Graph<T>& g, const Tensor<T>& dy) {
    if (g.requires_grad(a)) add_into(g.grad_buffer(a), dy, T(0.5));
    if (g.requires_grad(b)) add_into(g.grad_buffer(b), dy, T(0.5));
  });
}

template <typename T>
Var concat_cols(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  require_matrix(av, "concat_cols");
  require_matrix(bv, "concat_cols");
  if (av.rows() != bv.rows()) throw ShapeError("concat_cols: row count mismatch");
  const std::size_t rows = av.rows(), ca = av.cols(), cb = bv.cols();
  Tensor<T> y({rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.row(r).begin(), ca, y.row(r).begin());
    std::copy_n(bv.row(r).begin(), cb, y.row(r).begin() + static_cast<std::ptrdiff_t>(ca));
  }
  return g.emit(std::move(y), {a, b}, [=](Graph<T>& g, const Tensor<T>& dy) {
    for (std::size_t r = 0; r < rows; ++r) {
      const T* src = dy.data().data() + r * (ca + cb);
      if (g.requires_grad(a)) {
        T* da = g.grad_buffer(a).data().data() + r * ca;
        for (std::size_t j = 0; j < ca; ++j) da[j] += src[j];
      }
      if (g.requires_grad(b)) {
        T* db = g.grad_buffer(b).data().data() + r * cb;
        for (std::size_t j = 0; j < cb; ++j) db[j] += src[ca + j];
      }
    }
  });
}

template <typename T>
Var concat_rows(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  if (av.cols() != bv.cols()) throw ShapeError("concat_rows: column count mismatch");
  const std::size_t ra = av.rows(), rb = bv.rows(), c = av.cols();
  Tensor<T> y({ra + rb, c});
  std::copy(av.data().begin(), av.data().end(), y.data().begin());
  std::copy(bv.data().begin(), bv.data().end(), y.data().begin() + static_cast<std::ptrdiff_t>(ra * c));
  return g.emit(std::move(y), {a, b}, [=](Graph<T>& g, const Tensor<T>& dy) {
    if (g.requires_grad(a)) {
      Tensor<T>& da = g.grad_buffer(a);
      for (std::size_t i = 0; i < ra * c; ++i) da[i] += dy[i];
    }
    if (g.requires_grad(b)) {
      Tensor<T>& db = g.grad_buffer(b);
      for (std::size_t i = 0; i < rb * c; ++i) db[i] += dy[ra * c + i];
    }
  });
}

template <typename T>
Var slice_rows(Graph<T>& g, Var x, std::size_t begin, std::size_t end) {
  const Tensor<T>& xv = g.value(x);
  if (begin >= end || end > xv.rows()) throw ShapeError("slice_rows: bad range");
  const std::size_t c = xv.cols();
  Tensor<T> y({end - begin, c});
  std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>(begin * c), (end - begin) * c,
              y.data().begin());
  return g.emit(std::move(y), {x}, [=](Graph<T>& g, const Tensor<T>& dy) {
    Tensor<T>& dx = g.grad_buffer(x);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[begin * c + i] += dy[i];
  });
}

template <typename T>
Var gather_rows(Graph<T>& g, Var x, std::vector<std::size_t> rows) {
  Tensor<T> y = pointmt::gather_rows(g.value(x), rows);
  const std::size_t c = y.cols();
  return g.emit(std::move(y), {x}, [=, rows = std::move(rows)](Graph<T>& g, const Tensor<T>& dy) {
    Tensor<T>& dx = g.grad_buffer(x);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t j = 0; j < c; ++j) dx[rows[r] * c + j] += dy[r * c + j];
    }
  });
}

template <typename T>
Var layer_norm(Graph<T>& g, Var x, Var gain, Var shift) {
  const Tensor<T>& xv = g.value(x);
  require_matrix(xv, "layer_norm");
  const std::size_t rows = xv.rows(), c = xv.cols();
  if (g.value(gain).size() != c || g.value(shift).size() != c) {
    throw ShapeError("layer_norm: gain/shift width mismatch");
  }
  const T* gv = g.value(gain).data().data();
  const T* sv = g.value(shift).data().data();
  auto normalized = std::make_shared<std::vector<T>>(rows * c);
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  Tensor<T> y({rows, c});
  const T eps = static_cast<T>(kLayerNormEpsilon);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data().data() + r * c;
    T mean = 0;
    for (std::size_t j = 0; j < c; ++j) mean += xr[j];
    mean /= static_cast<T>(c);
    T var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(c);
    const T inv = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t j = 0; j < c; ++j) {
      const T xh = (xr[j] - mean) * inv;
      (*normalized)[r * c + j] = xh;
      y[r * c + j] = xh * gv[j] + sv[j];
    }
  }
  return g.emit(std::move(y), {x, gain, shift}, [=](Graph<T>& g, const Tensor<T>& dy) {
    const T* gv = g.value(gain).data().data();
    const std::vector<T>& xh = *normalized;
    if (g.requires_grad(gain)) {
      Tensor<T>& dg = g.grad_buffer(gain);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < c; ++j) dg[j] += dy[r * c + j] * xh[r * c + j];
      }
    }
    if (g.requires_grad(shift)) {
      Tensor<T>& ds = g.grad_buffer(shift);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < c; ++j) ds[j] += dy[r * c + j];
      }
    }
    if (g.requires_grad(x)) {
      Tensor<T>& dx = g.grad_buffer(x);
      std::vector<T> dxh(c);
      for (std::size_t r = 0; r < rows; ++r) {
        T mean_d = 0, mean_dx = 0;
        for (std::size_t j = 0; j < c; ++j) {
          dxh[j] = dy[r * c + j] * gv[j];
          mean_d += dxh[j];
          mean_dx += dxh[j] * xh[r * c + j];
        }
        mean_d /= static_cast<T>(c);
        mean_dx /= static_cast<T>(c);
        const T inv = (*inv_std)[r];
        for (std::size_t j = 0; j < c; ++j) {
          dx[r * c + j] += inv * (dxh[j] - mean_d - xh[r * c + j] * mean_dx);
        }
      }
    }
  });
}

template <typename T>
Var relative_rows(Graph<T>& g, Var projected, const NeighborhoodIndex& nbr, Var bias) {
  const Tensor<T>& pv = g.value(projected);
  require_matrix(pv, "relative_rows");
  const std::size_t n = pv.rows(), c = pv.cols(), k = nbr.k;
  if (nbr.queries != n) throw ShapeError("relative_rows: neighborhood does not match points");
  const T* bv = nullptr;
  if (bias.valid()) {
    if (g.value(bias).size() != c) throw ShapeError("relative_rows: bias width mismatch");
    bv = g.value(bias).data().data();
  }
  Tensor<T> y({n * k, c});
  for (std::size_t i = 0; i < n; ++i) {
    const T* center = pv.data().data() + i * c;
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t src = nbr(i, j);
      if (src >= n) throw InvariantError("relative_rows: neighbor index out of range");
      const T* other = pv.data().data() + src * c;
      T* out = y.data().data() + (i * k + j) * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        out[ch] = other[ch] - center[ch] + (bv ? bv[ch] : T(0));
      }
    }
  }
  return g.emit(std::move(y), {projected, bias}, [=, idx = nbr.indices](Graph<T>& g, const Tensor<T>& dy) {
    if (g.requires_grad(projected)) {
      Tensor<T>& dp = g.grad_buffer(projected);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          const T* d = dy.data().data() + (i * k + j) * c;
          T* other = dp.data().data() + idx[i * k + j] * c;
          T* center = dp.data().data() + i * c;
          for (std::size_t ch = 0; ch < c; ++ch) {
            other[ch] += d[ch];
            center[ch] -= d[ch];
          }
        }
      }
    }
    if (bias.valid() && g.requires_grad(bias)) {
      Tensor<T>& db = g.grad_buffer(bias);
      for (std::size_t r = 0; r < n * k; ++r) {
        for (std::size_t ch = 0; ch < c; ++ch) db[ch] += dy[r * c + ch];
      }
    }
  });
}

template <typename T>
Var group_max(Graph<T>& g, Var x, std::size_t k) {
  const Tensor<T>& xv = g.value(x);
  require_matrix(xv, "group_max");
  if (k == 0 || xv.rows() % k != 0) throw ShapeError("group_max: rows not divisible by k");
  const std::size_t n = xv.rows() / k, c = xv.cols();
  Tensor<T> y({n, c});
  std::vector<std::size_t> arg(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      std::size_t best = i * k;
      for (std::size_t j = 1; j < k; ++j) {
        if (xv[(i * k + j) * c + ch] > xv[best * c + ch]) best = i * k + j;
      }
      arg[i * c + ch] = best;
      y[i * c + ch] = xv[best * c + ch];
    }
  }
  return g.emit(std::move(y), {x}, [=, arg = std::move(arg)](Graph<T>& g, const Tensor<T>& dy) {
    Tensor<T>& dx = g.grad_buffer(x);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) dx[arg[i * c + ch] * c + ch] += dy[i * c + ch];
    }
  });
}

template <typename T>
Var reduce_rows(Graph<T>& g, Var x, PoolMode mode) {
  const Tensor<T>& xv = g.value(x);
  require_matrix(xv, "reduce_rows");
  if (xv.rows() == 0) throw DomainError("reduce_rows: no rows");
  auto pooled = pool(xv, 0, mode);
  const std::size_t rows = xv.rows(), c = xv.cols();
  Tensor<T> y = pooled.values.reshaped({1, c});
  return g.emit(std::move(y), {x}, [=, arg = std::move(pooled.argmax)](Graph<T>& g, const Tensor<T>& dy) {
    Tensor<T>& dx = g.grad_buffer(x);
    for (std::size_t ch = 0; ch < c; ++ch) {
      if (mode == PoolMode::max) {
        dx[arg[ch] * c + ch] += dy[ch];
      } else {
        const T share = dy[ch] / static_cast<T>(rows);
        for (std::size_t r = 0; r < rows; ++r) dx[r * c + ch] += share;
      }
    }
  });
}

template <typename T>
Var softmax_columns(Graph<T>& g, Var scores, Var temperature) {
  const Tensor<T>& sv = g.value(scores);
  require_matrix(sv, "softmax_columns");
  const std::size_t k = sv.rows(), c = sv.cols();
  const Tensor<T>& tv = g.value(temperature);
  if (tv.size() != c) throw ShapeError("softmax_columns: temperature width mismatch");
  Tensor<T> w = softmax(sv, 0, tv.reshaped({1, c}));
  return g.emit(w, {scores, temperature}, [=](Graph<T>& g, const Tensor<T>& dw) {
    const Tensor<T>& sv = g.value(scores);
    const Tensor<T>& tv = g.value(temperature);
    for (std::size_t ch = 0; ch < c; ++ch) {
      T dot = 0;
      for (std::size_t a = 0; a < k; ++a) dot += w[a * c + ch] * dw[a * c + ch];
      for (std::size_t a = 0; a < k; ++a) {
        // gradient with respect to the scaled score s / t
        const T dscaled = w[a * c + ch] * (dw[a * c + ch] - dot);
        if (g.requires_grad(scores)) g.grad_buffer(scores)[a * c + ch] += dscaled / tv[ch];
        if (g.requires_grad(temperature)) {
          g.grad_buffer(temperature)[ch] -= dscaled * sv[a * c + ch] / (tv[ch] * tv[ch]);
        }
      }
    }
  });
}

template <typename T>
Var softmax_cross_entropy(Graph<T>& g, Var logits, std::size_t label) {
  const Tensor<T>& lv = g.value(logits);
  const std::size_t n = lv.size();
  if (label >= n) {
    throw ArgumentError("cross_entropy: label " + std::to_string(label) + " >= class count " +
                        std::to_string(n));
  }
  T peak = *std::max_element(lv.data().begin(), lv.data().end());
  T total = 0;
  for (T v : lv.data()) total += std::exp(v - peak);
  const T log_z = peak + std::log(total);
  Tensor<T> loss({1}, std::vector<T>{log_z - lv[label]});
  return g.emit(std::move(loss), {logits}, [=](Graph<T>& g, const Tensor<T>& dl) {
    const Tensor<T>& lv = g.value(logits);
    Tensor<T>& dx = g.grad_buffer(logits);
    for (std::size_t i = 0; i < n; ++i) {
      const T p = std::exp(lv[i] - log_z);
      dx[i] += dl[0] * (p - (i == label ? T(1) : T(0)));
    }
  });
}

template <typename T>
Var weighted_sum(Graph<T>& g, Var x, Tensor<T> weights) {
  const Tensor<T>& xv = g.value(x);
  if (xv.size() != weights.size()) throw ShapeError("weighted_sum: size mismatch");
  T total = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) total += xv[i] * weights[i];
  return g.emit(Tensor<T>({1}, std::vector<T>{total}), {x},
                [=, weights = std::move(weights)](Graph<T>& g, const Tensor<T>& dl) {
                  Tensor<T>& dx = g.grad_buffer(x);
                  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dl[0] * weights[i];
                });
}

}  // namespace ops

#define POINTMT_INSTANTIATE(T)                                                                 \
  template class Graph<T>;                                                                     \
  template Var ops::linear<T>(Graph<T>&, Var, Var, Var);                                       \
  template Var ops::linear<T>(Graph<T>&, Var, const LinearHandle&, const ParameterStore<T>&);  \
  template Var ops::relu<T>(Graph<T>&, Var);                                                   \
  template Var ops::add<T>(Graph<T>&, Var, Var);                                               \
  template Var ops::average<T>(Graph<T>&, Var, Var);                                           \
  template Var ops::concat_cols<T>(Graph<T>&, Var, Var);                                       \
  template Var ops::concat_rows<T>(Graph<T>&, Var, Var);                                       \
  template Var ops::slice_rows<T>(Graph<T>&, Var, std::size_t, std::size_t);                   \
  template Var ops::gather_rows<T>(Graph<T>&, Var, std::vector<std::size_t>);                  \
  template Var ops::layer_norm<T>(Graph<T>&, Var, Var, Var);                                   \
  template Var ops::relative_rows<T>(Graph<T>&, Var, const NeighborhoodIndex&, Var);           \
  template Var ops::group_max<T>(Graph<T>&, Var, std::size_t);                                 \
  template Var ops::reduce_rows<T>(Graph<T>&, Var, PoolMode);                                  \
  template Var ops::softmax_columns<T>(Graph<T>&, Var, Var);                                   \
  template Var ops::softmax_cross_entropy<T>(Graph<T>&, Var, std::size_t);                     \
  template Var ops::weighted_sum<T>(Graph<T>&, Var, Tensor<T>);

POINTMT_INSTANTIATE(float)
POINTMT_INSTANTIATE(double)

#undef POINTMT_INSTANTIATE

}  // namespace pointmt
