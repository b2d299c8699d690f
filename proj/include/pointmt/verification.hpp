#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointmt/gradcheck.hpp"

namespace pointmt {

struct GradCheckCase {
  std::string name;
  GradCheckReport report;
};

/// The full 64-bit finite-difference suite: every graph op, linear and
/// TA-attention, MT-Blocks in each branch mode on an 8-point cloud, and the
/// 2-class toy classifier end to end on 16 points under both heads.
/// `tolerance` applies to every case except the single linear layer (1e-6)
/// and the per-channel temperature softmax (1e-5).
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed = 42, double tolerance = 1e-4);

}  // namespace pointmt
