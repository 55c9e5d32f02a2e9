#pragma once

#include <string>
#include <vector>

namespace adcrowd {

struct OpCheck {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Finite-difference audit of every differentiable operation plus the
// composite classifier / density-loss paths, all in 64-bit mode. Tolerance
// is 1e-4. with_corrupt_fixture appends a deliberately broken backward that
// must FAIL (negative control for the harness itself).
std::vector<OpCheck> gradcheck_suite(bool with_corrupt_fixture = false);

bool gradcheck_all_pass(const std::vector<OpCheck>& checks);
std::string gradcheck_table(const std::vector<OpCheck>& checks);

}  // namespace adcrowd
