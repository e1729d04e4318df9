#include "madt/rng.hpp"

#include <cmath>
#include <sstream>

namespace madt {

std::string Rng::state() const {
  std::ostringstream os;
  os << gen_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> gen_;
}

}  // namespace madt
