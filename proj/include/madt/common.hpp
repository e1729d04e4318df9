#pragma once
// Shared scalar type, error hierarchy and small helpers.
#include <cstdint>
#include <stdexcept>
#include <string>

namespace madt {

#ifdef MADT_REAL32
using real = float;
#else
using real = double;
#endif

// Error codes cover every failure mode surfaced by the public API.
// Categories map to process exit codes: Config=2, Data=3, Numeric=4.
enum class ErrCode {
  IdOutOfRange,
  ShapeMismatch,
  WindowOutOfBounds,
  SamplerExhausted,
  PartnerWiderThanImage,
  OddDimension,
  DivisibilityError,
  ConfigMismatch,
  TooFewSamples,
  UnknownKey,
  RangeError,
  BadFile,
  NumericCheckFailed,
};

enum class ErrCategory { Config = 2, Data = 3, Numeric = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrCode code, ErrCategory cat, const std::string& msg)
      : std::runtime_error(msg), code_(code), cat_(cat) {}
  ErrCode code() const { return code_; }
  ErrCategory category() const { return cat_; }
  int exit_code() const { return static_cast<int>(cat_); }

 private:
  ErrCode code_;
  ErrCategory cat_;
};

[[noreturn]] inline void throw_config(ErrCode c, const std::string& msg) {
  throw Error(c, ErrCategory::Config, msg);
}
[[noreturn]] inline void throw_data(ErrCode c, const std::string& msg) {
  throw Error(c, ErrCategory::Data, msg);
}
[[noreturn]] inline void throw_numeric(ErrCode c, const std::string& msg) {
  throw Error(c, ErrCategory::Numeric, msg);
}

}  // namespace madt
