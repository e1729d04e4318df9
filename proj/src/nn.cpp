#include "madt/nn.hpp"

#include <cmath>

namespace madt {

void Conv2dParams::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".w", &weight, true});
  out.push_back({prefix + ".b", &bias, true});
  if (spectral) out.push_back({prefix + ".u", &u, false});
}

Conv2dParams make_conv(int64_t in_ch, int64_t out_ch, int64_t k, int64_t stride, bool spectral,
                       Rng& rng, real gain) {
  Conv2dParams p;
  p.weight = xavier_normal({out_ch, in_ch, k, k}, gain, rng);
  p.bias = Tensor::zeros({out_ch});
  p.stride = stride;
  p.pad = k == 3 ? 1 : 0;
  p.spectral = spectral;
  if (spectral) {
    p.u = Tensor({out_ch});
    real norm = 0;
    for (int64_t i = 0; i < out_ch; ++i) {
      p.u[i] = static_cast<real>(rng.normal());
      norm += p.u[i] * p.u[i];
    }
    norm = std::sqrt(norm);
    for (int64_t i = 0; i < out_ch; ++i) p.u[i] /= norm;
  }
  return p;
}

namespace {

// v = normalize(W^T u) on the (Co, r) matricization, r = Ci*k*k.
Tensor right_vector(const Conv2dParams& p) {
  const int64_t co = p.weight.dim(0);
  const int64_t r = p.weight.numel() / co;
  Tensor v({r});
  const real* w = p.weight.data();
  for (int64_t i = 0; i < co; ++i) {
    const real ui = p.u[i];
    const real* row = w + i * r;
    for (int64_t j = 0; j < r; ++j) v[j] += ui * row[j];
  }
  real norm = 0;
  for (int64_t j = 0; j < r; ++j) norm += v[j] * v[j];
  norm = std::sqrt(norm);
  if (norm > 0)
    for (int64_t j = 0; j < r; ++j) v[j] /= norm;
  return v;
}

}  // namespace

void power_iteration(Conv2dParams& p) {
  const int64_t co = p.weight.dim(0);
  const int64_t r = p.weight.numel() / co;
  Tensor v = right_vector(p);
  Tensor nu({co});
  const real* w = p.weight.data();
  real norm = 0;
  for (int64_t i = 0; i < co; ++i) {
    const real* row = w + i * r;
    real acc = 0;
    for (int64_t j = 0; j < r; ++j) acc += row[j] * v[j];
    nu[i] = acc;
    norm += acc * acc;
  }
  norm = std::sqrt(norm);
  if (norm > 0)
    for (int64_t i = 0; i < co; ++i) nu[i] /= norm;
  p.u = nu;
}

real spectral_sigma(const Conv2dParams& p) {
  const int64_t co = p.weight.dim(0);
  const int64_t r = p.weight.numel() / co;
  Tensor v = right_vector(p);
  const real* w = p.weight.data();
  real sigma = 0;
  for (int64_t i = 0; i < co; ++i) {
    const real* row = w + i * r;
    real acc = 0;
    for (int64_t j = 0; j < r; ++j) acc += row[j] * v[j];
    sigma += p.u[i] * acc;
  }
  return sigma;
}

ConvVars bind_conv(Tape& t, Conv2dParams& p, bool update_power) {
  Var w = t.leaf(p.weight);
  Var b = t.leaf(p.bias);
  if (!p.spectral) return {w, b, w};
  if (update_power) power_iteration(p);
  const int64_t co = p.weight.dim(0);
  const int64_t r = p.weight.numel() / co;
  Tensor v = right_vector(p);
  Var u_row = t.constant(p.u.reshaped({1, co}).clone());
  Var v_col = t.constant(v.reshaped({r, 1}));
  Var w_mat = reshape(w, {co, r});
  Var sigma = reshape(matmul(matmul(u_row, w_mat), v_col), {1, 1, 1, 1});
  // tiny guard keeps zero weight matrices at zero instead of 0/0
  Var inv = pow_const(add_scalar(sigma, real(1e-12)), real(-1));
  Var w_eff = mul(w, broadcast_to(inv, p.weight.shape()));
  return {w_eff, b, w};
}

Var conv_apply(const Var& x, const ConvVars& cv, const Conv2dParams& p, PadMode pad_mode) {
  Var xin = p.pad > 0 ? pad2d(x, p.pad, pad_mode) : x;
  Var y = conv2d_raw(xin, cv.w, p.stride);
  const int64_t co = p.bias.dim(0);
  Var b4 = broadcast_to(reshape(cv.b, {1, co, 1, 1}), y.value.shape());
  return add(y, b4);
}

namespace {
Var norm_over(const Var& x, uint32_t mask) {
  Var m = mean_axes(x, mask);
  Var xc = sub(x, broadcast_to(m, x.value.shape()));
  Var v = mean_axes(square(xc), mask);
  Var inv_std = pow_const(add_scalar(v, kNormEps), real(-0.5));
  return mul(xc, broadcast_to(inv_std, x.value.shape()));
}
}  // namespace

Var instance_norm(const Var& x) {
  if (x.value.rank() != 4) throw_data(ErrCode::ShapeMismatch, "instance_norm expects NCHW");
  // a single spatial sample has no statistics; pass through instead of
  // collapsing the map to zero
  if (x.value.dim(2) * x.value.dim(3) == 1) return x;
  return norm_over(x, (1u << 2) | (1u << 3));
}

Var batch_norm(const Var& x) {
  if (x.value.rank() != 4) throw_data(ErrCode::ShapeMismatch, "batch_norm expects NCHW");
  if (x.value.dim(0) * x.value.dim(2) * x.value.dim(3) == 1) return x;
  return norm_over(x, (1u << 0) | (1u << 2) | (1u << 3));
}

Var apply_norm(const Var& x, NormKind kind) {
  return kind == NormKind::Instance ? instance_norm(x) : batch_norm(x);
}

Tensor xavier_normal(Shape shape, real gain, Rng& rng) {
  int64_t fan_in = 1, fan_out = 1;
  if (shape.size() >= 2) {
    int64_t rf = 1;
    for (size_t d = 2; d < shape.size(); ++d) rf *= shape[d];
    fan_in = shape[1] * rf;
    fan_out = shape[0] * rf;
  } else {
    fan_in = fan_out = shape.empty() ? 1 : shape[0];
  }
  const real std = gain * std::sqrt(real(2) / static_cast<real>(fan_in + fan_out));
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<real>(rng.normal()) * std;
  return t;
}

void adam_step(Tensor& param, const Tensor& grad, AdamState& st, real lr, const AdamConfig& cfg) {
  require_same_shape(param, grad, "adam_step");
  if (!st.m.defined()) {
    st.m = Tensor::zeros(param.shape());
    st.v = Tensor::zeros(param.shape());
  }
  st.step += 1;
  const real b1t = real(1) - std::pow(cfg.beta1, static_cast<real>(st.step));
  const real b2t = real(1) - std::pow(cfg.beta2, static_cast<real>(st.step));
  real* ps = param.data();
  const real* gs = grad.data();
  real* ms = st.m.data();
  real* vs = st.v.data();
  const int64_t n = param.numel();
  for (int64_t i = 0; i < n; ++i) {
    ms[i] = cfg.beta1 * ms[i] + (real(1) - cfg.beta1) * gs[i];
    vs[i] = cfg.beta2 * vs[i] + (real(1) - cfg.beta2) * gs[i] * gs[i];
    const real mhat = ms[i] / b1t;
    const real vhat = vs[i] / b2t;
    ps[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

void Adam::attach(const ParamList& params) {
  for (const auto& p : params) {
    if (!p.trainable) continue;
    params_.push_back(p.tensor);
    states_.emplace_back();
  }
}

void Adam::step(const std::vector<Tensor>& grads, real lr) {
  if (grads.size() != params_.size())
    throw_data(ErrCode::ShapeMismatch, "Adam::step gradient count mismatch");
  for (size_t i = 0; i < params_.size(); ++i) adam_step(*params_[i], grads[i], states_[i], lr, cfg_);
}

void Adam::collect_state(const std::string& prefix, ParamList& out) {
  for (size_t i = 0; i < states_.size(); ++i) {
    if (!states_[i].m.defined()) {
      states_[i].m = Tensor::zeros(params_[i]->shape());
      states_[i].v = Tensor::zeros(params_[i]->shape());
    }
    out.push_back({prefix + ".m" + std::to_string(i), &states_[i].m, false});
    out.push_back({prefix + ".v" + std::to_string(i), &states_[i].v, false});
  }
}

double finite_diff_check(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x0,
                         double eps) {
  Tensor analytic;
  {
    Tape t;
    Var x = t.leaf(x0.clone());
    Var y = f(t, x);
    analytic = t.gradients(y, {x})[0].value;
  }
  double max_err = 0;
  for (int64_t i = 0; i < x0.numel(); ++i) {
    Tensor xp = x0.clone(), xm = x0.clone();
    xp[i] += static_cast<real>(eps);
    xm[i] -= static_cast<real>(eps);
    double yp, ym;
    {
      Tape t;
      yp = static_cast<double>(f(t, t.leaf(xp)).value[0]);
    }
    {
      Tape t;
      ym = static_cast<double>(f(t, t.leaf(xm)).value[0]);
    }
    const double gn = (yp - ym) / (2 * eps);
    const double ga = static_cast<double>(analytic[i]);
    const double denom = std::max({1.0, std::abs(ga), std::abs(gn)});
    max_err = std::max(max_err, std::abs(ga - gn) / denom);
  }
  return max_err;
}

}  // namespace madt
