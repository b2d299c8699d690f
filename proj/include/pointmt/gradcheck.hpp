#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pointmt/graph.hpp"
#include "pointmt/layers.hpp"

namespace pointmt {

/// A differentiable fragment: binds its own parameters from the store and
/// maps the graph inputs to one output tensor.
using Fragment =
    std::function<Var(Graph<double>& g, const ParameterStore<double>& params,
                      const std::vector<Var>& inputs)>;

struct GradCheckReport {
  double max_relative_error = 0;
  std::string worst;  // name of the entry with the largest error
  std::size_t checked = 0;
  double tolerance = 0;

  bool passed() const { return max_relative_error < tolerance; }
};

inline constexpr double kFiniteDifferenceStep = 1e-5;
/// Denominator floor of the relative error, so that gradients that are zero
/// up to rounding are compared absolutely.
inline constexpr double kRelativeErrorFloor = 1e-4;

/// Compares analytic gradients of sum(R .* fragment(inputs)), with R a seeded
/// random projection, against central finite differences over every parameter
/// and input entry. Throws VerificationError on non-finite values.
GradCheckReport grad_check(const Fragment& fragment, ParameterStore<double>& params,
                           const std::vector<Tensor<double>>& inputs, double tolerance,
                           std::uint64_t seed = 7, double step = kFiniteDifferenceStep);

double relative_error(double analytic, double numeric);

}  // namespace pointmt
