#pragma once
// gradcheck subcommand: runs the library's finite-difference battery and
// prints one line per checked op.
#include <cstdio>

#include "madt/gradcheck.hpp"

namespace {

int cmd_gradcheck(int seeds, const std::string& inject_defect) {
  if (sizeof(madt::real) != 8)
    std::fprintf(stderr,
                 "warning: gradcheck needs the f64 build; central differences are "
                 "unreliable in single precision\n");
  if (inject_defect == "conv_dx_sign") {
    madt::testhooks::conv_dx_sign_defect = true;
  } else if (!inject_defect.empty()) {
    std::fprintf(stderr, "unknown defect fixture: %s\n", inject_defect.c_str());
    return 2;
  }
  auto entries = madt::gradcheck_all(seeds);
  int failures = 0;
  for (const auto& e : entries) {
    std::printf("%-22s max_rel_err=%-12.3g tol=%-8.2g %s\n", e.name.c_str(), e.max_rel_err,
                e.tolerance, e.pass ? "PASS" : "FAIL");
    failures += e.pass ? 0 : 1;
  }
  std::printf("%zu ops checked, %d failed\n", entries.size(), failures);
  return failures == 0 ? 0 : 4;
}

}  // namespace
