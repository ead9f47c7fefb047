#pragma once

#include <string>
#include <vector>

#include "multifuse/grad_check.hpp"

namespace multifuse {

struct GradSuiteCase {
  std::string name;
  bool ok = true;
  double max_rel_err = 0;
  std::size_t checked = 0;
  std::string first_failure;
};

// Finite-difference checks (double precision, tol 1e-4) covering every
// autodiff op, one-layer encoders of both modalities, and the three fusion
// models end to end. Each case runs `seeds` times with seeds 1..seeds.
std::vector<GradSuiteCase> run_gradcheck_suite(int seeds);

}  // namespace multifuse
