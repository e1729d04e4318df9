#pragma once
// Finite-difference verification of every registered primitive and of the
// composite blocks and losses built from them.
#include <string>
#include <vector>

namespace madt {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0;
  double tolerance = 1e-4;
  bool pass = false;
};

// Runs every check over `seeds` seeded random inputs; entries report the
// worst relative error seen.
std::vector<GradCheckEntry> gradcheck_all(int seeds);

namespace testhooks {
// Self-test fixture: flips the sign of the convolution input-gradient so the
// harness can prove it detects a broken backward rule.
extern bool conv_dx_sign_defect;
}  // namespace testhooks

}  // namespace madt
