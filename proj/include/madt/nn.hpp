#pragma once
// Network building blocks on top of the tape: convolution layers with
// optional spectral weight normalization, parameter-free normalizations,
// Xavier-normal init, Adam, and the finite-difference gradient harness.
#include <functional>
#include <string>
#include <vector>

#include "madt/rng.hpp"
#include "madt/tape.hpp"

namespace madt {

struct NamedTensor {
  std::string name;
  Tensor* tensor;
  bool trainable;
};
using ParamList = std::vector<NamedTensor>;

struct Conv2dParams {
  Tensor weight;  // (Co, Ci, k, k)
  Tensor bias;    // (Co)
  int64_t stride = 1;
  int64_t pad = 0;
  bool spectral = false;
  Tensor u;  // (Co) power-iteration state, unit norm

  int64_t out_channels() const { return weight.dim(0); }
  int64_t in_channels() const { return weight.dim(1); }
  int64_t kernel() const { return weight.dim(2); }
  void collect(const std::string& prefix, ParamList& out);
};

// k in {1,3}; pad fixed by kernel size (1 for k=3, 0 for k=1).
Conv2dParams make_conv(int64_t in_ch, int64_t out_ch, int64_t k, int64_t stride, bool spectral,
                       Rng& rng, real gain = real(0.02));

// Bound view of a conv layer on a tape. For spectral layers w_eff = w / sigma
// with sigma estimated from the stored power-iteration vector; w_raw is the
// underlying parameter leaf used for gradient queries.
struct ConvVars {
  Var w;  // effective weight
  Var b;
  Var w_raw;
};

// update_power: run one power iteration (mutates p.u) before binding.
ConvVars bind_conv(Tape& t, Conv2dParams& p, bool update_power);
Var conv_apply(const Var& x, const ConvVars& cv, const Conv2dParams& p,
               PadMode pad_mode = PadMode::Zero);

// Estimated top singular value of the (Co, Ci*k*k) matricization, as a plain
// number (diagnostics + tests).
real spectral_sigma(const Conv2dParams& p);
void power_iteration(Conv2dParams& p);

constexpr real kNormEps = real(1e-5);

Var instance_norm(const Var& x);              // per (n, c) over H,W
Var batch_norm(const Var& x);                 // per c over N,H,W
enum class NormKind { Instance, Batch };
Var apply_norm(const Var& x, NormKind kind);

Tensor xavier_normal(Shape shape, real gain, Rng& rng);

struct AdamState {
  Tensor m, v;
  int64_t step = 0;
};

struct AdamConfig {
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real eps = real(1e-8);
};

void adam_step(Tensor& param, const Tensor& grad, AdamState& st, real lr,
               const AdamConfig& cfg = {});

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  void attach(const ParamList& params);  // trainable entries only
  size_t size() const { return params_.size(); }
  // grads aligned with the attached trainable parameter order.
  void step(const std::vector<Tensor>& grads, real lr);
  void collect_state(const std::string& prefix, ParamList& out);

 private:
  AdamConfig cfg_;
  std::vector<Tensor*> params_;
  std::vector<AdamState> states_;
};

// Max over coordinates of |g_tape - g_central| / max(1, |g_tape|, |g_central|).
double finite_diff_check(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x0,
                         double eps = 1e-5);

}  // namespace madt
