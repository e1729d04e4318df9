#include "madt/tape.hpp"

#include "madt/gradcheck.hpp"
#include "madt/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace madt {

namespace testhooks {
bool conv_dx_sign_defect = false;
}  // namespace testhooks

namespace {

template <class F>
Tensor map1(const Tensor& x, F f) {
  Tensor y = Tensor::uninitialized(x.shape());
  const real* xs = x.data();
  real* ys = y.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) ys[i] = f(xs[i]);
  return y;
}

template <class F>
Tensor map2(const Tensor& a, const Tensor& b, F f) {
  Tensor y = Tensor::uninitialized(a.shape());
  const real* as = a.data();
  const real* bs = b.data();
  real* ys = y.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) ys[i] = f(as[i], bs[i]);
  return y;
}

std::vector<int64_t> contiguous_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

Tensor broadcast_kernel(const Tensor& x, const Shape& to) {
  Tensor y = Tensor::uninitialized(to);
  const auto& xs = x.shape();
  const real* xd = x.data();
  real* yd = y.data();
  // fast paths for the rank-4 patterns the networks use
  if (to.size() == 4) {
    const int64_t N = to[0], C = to[1], H = to[2], W = to[3], HW = H * W;
    if (xs[2] == 1 && xs[3] == 1) {  // (N|1, C|1, 1, 1) -> NCHW
      for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
          const real v = xd[(xs[0] == 1 ? 0 : n) * xs[1] + (xs[1] == 1 ? 0 : c)];
          real* row = yd + (n * C + c) * HW;
          for (int64_t i = 0; i < HW; ++i) row[i] = v;
        }
      return y;
    }
    if (xs[0] == 1 && xs[1] == 1 && xs[2] == H && xs[3] == W) {  // (1,1,H,W) -> NCHW
      for (int64_t nc = 0; nc < N * C; ++nc)
        std::memcpy(yd + nc * HW, xd, static_cast<size_t>(HW) * sizeof(real));
      return y;
    }
    if (xs[0] == N && xs[1] == 1 && xs[2] == H && xs[3] == W) {  // (N,1,H,W) -> NCHW
      for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
          std::memcpy(yd + (n * C + c) * HW, xd + n * HW, static_cast<size_t>(HW) * sizeof(real));
      return y;
    }
  }
  const auto xstr = contiguous_strides(xs);
  const auto ystr = contiguous_strides(to);
  const size_t r = to.size();
  const int64_t n = y.numel();
  for (int64_t li = 0; li < n; ++li) {
    int64_t rem = li, xi = 0;
    for (size_t d = 0; d < r; ++d) {
      const int64_t id = rem / ystr[d];
      rem -= id * ystr[d];
      xi += (xs[d] == 1 ? 0 : id) * xstr[d];
    }
    yd[li] = xd[xi];
  }
  return y;
}

Tensor reduce_sum_kernel(const Tensor& x, uint32_t axes) {
  Shape out = x.shape();
  for (size_t d = 0; d < out.size(); ++d)
    if (axes & (1u << d)) out[d] = 1;
  Tensor y(out);
  const auto& xs = x.shape();
  const real* xd = x.data();
  real* yd = y.data();
  if (y.numel() == 1) {
    real acc = 0;
    const int64_t n_all = x.numel();
    for (int64_t i = 0; i < n_all; ++i) acc += xd[i];
    yd[0] = acc;
    return y;
  }
  if (xs.size() == 4) {
    const int64_t N = xs[0], C = xs[1], HW = xs[2] * xs[3];
    if (axes == ((1u << 2) | (1u << 3))) {  // per (n,c) over H,W
      for (int64_t nc = 0; nc < N * C; ++nc) {
        const real* row = xd + nc * HW;
        real acc = 0;
        for (int64_t i = 0; i < HW; ++i) acc += row[i];
        yd[nc] = acc;
      }
      return y;
    }
    if (axes == ((1u << 0) | (1u << 2) | (1u << 3))) {  // per c over N,H,W
      for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
          const real* row = xd + (n * C + c) * HW;
          real acc = 0;
          for (int64_t i = 0; i < HW; ++i) acc += row[i];
          yd[c] += acc;
        }
      return y;
    }
    if (axes == (1u << 1)) {  // collapse channels
      for (int64_t n = 0; n < N; ++n) {
        real* orow = yd + n * HW;
        for (int64_t c = 0; c < C; ++c) {
          const real* row = xd + (n * C + c) * HW;
          for (int64_t i = 0; i < HW; ++i) orow[i] += row[i];
        }
      }
      return y;
    }
  }
  const auto xstr = contiguous_strides(xs);
  const auto ystr = contiguous_strides(out);
  const size_t r = xs.size();
  const int64_t n = x.numel();
  for (int64_t li = 0; li < n; ++li) {
    int64_t rem = li, yi = 0;
    for (size_t d = 0; d < r; ++d) {
      const int64_t id = rem / xstr[d];
      rem -= id * xstr[d];
      yi += (out[d] == 1 ? 0 : id) * ystr[d];
    }
    yd[yi] += xd[li];
  }
  return y;
}

void axis_split(const Shape& s, int axis, int64_t& outer, int64_t& inner) {
  outer = 1;
  inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[d];
  for (size_t d = static_cast<size_t>(axis) + 1; d < s.size(); ++d) inner *= s[d];
}

Tensor slice_axis_kernel(const Tensor& x, int axis, int64_t off, int64_t len) {
  Shape out = x.shape();
  out[axis] = len;
  Tensor y(out);
  int64_t outer, inner;
  axis_split(x.shape(), axis, outer, inner);
  const int64_t alen = x.shape()[axis];
  const real* xd = x.data();
  real* yd = y.data();
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(yd + o * len * inner, xd + (o * alen + off) * inner,
                static_cast<size_t>(len * inner) * sizeof(real));
  return y;
}

Tensor insert_axis_kernel(const Tensor& x, int axis, int64_t off, int64_t out_len) {
  Shape out = x.shape();
  out[axis] = out_len;
  Tensor y(out);  // zeros
  int64_t outer, inner;
  axis_split(x.shape(), axis, outer, inner);
  const int64_t alen = x.shape()[axis];
  const real* xd = x.data();
  real* yd = y.data();
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(yd + (o * out_len + off) * inner, xd + o * alen * inner,
                static_cast<size_t>(alen * inner) * sizeof(real));
  return y;
}

Tensor crop2d_kernel(const Tensor& x, int64_t y0, int64_t x0, int64_t h, int64_t w) {
  const int64_t N = x.dim(0), C = x.dim(1), W = x.dim(3);
  Tensor y = Tensor::uninitialized({N, C, h, w});
  const real* xd = x.data();
  real* yd = y.data();
  for (int64_t nc = 0; nc < N * C; ++nc)
    for (int64_t r = 0; r < h; ++r)
      std::memcpy(yd + (nc * h + r) * w, xd + (nc * x.dim(2) + y0 + r) * W + x0,
                  static_cast<size_t>(w) * sizeof(real));
  return y;
}

Tensor uncrop2d_kernel(const Tensor& x, int64_t y0, int64_t x0, int64_t H, int64_t W) {
  const int64_t N = x.dim(0), C = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y({N, C, H, W});
  const real* xd = x.data();
  real* yd = y.data();
  for (int64_t nc = 0; nc < N * C; ++nc)
    for (int64_t r = 0; r < h; ++r)
      std::memcpy(yd + (nc * H + y0 + r) * W + x0, xd + (nc * h + r) * w,
                  static_cast<size_t>(w) * sizeof(real));
  return y;
}

Tensor pad_zero_kernel(const Tensor& x, int64_t p) {
  return uncrop2d_kernel(x, p, p, x.dim(2) + 2 * p, x.dim(3) + 2 * p);
}

inline int64_t wrap_idx(int64_t i, int64_t n) {
  i %= n;
  return i < 0 ? i + n : i;
}

Tensor pad_circular_kernel(const Tensor& x, int64_t p) {
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor y = Tensor::uninitialized({N, C, H + 2 * p, W + 2 * p});
  const real* xd = x.data();
  real* yd = y.data();
  for (int64_t nc = 0; nc < N * C; ++nc)
    for (int64_t r = 0; r < H + 2 * p; ++r) {
      const int64_t sr = wrap_idx(r - p, H);
      for (int64_t c = 0; c < W + 2 * p; ++c)
        yd[(nc * (H + 2 * p) + r) * (W + 2 * p) + c] = xd[(nc * H + sr) * W + wrap_idx(c - p, W)];
    }
  return y;
}

Tensor fold_circular_kernel(const Tensor& g, int64_t p) {
  const int64_t N = g.dim(0), C = g.dim(1), Hp = g.dim(2), Wp = g.dim(3);
  const int64_t H = Hp - 2 * p, W = Wp - 2 * p;
  Tensor y({N, C, H, W});
  const real* gd = g.data();
  real* yd = y.data();
  for (int64_t nc = 0; nc < N * C; ++nc)
    for (int64_t r = 0; r < Hp; ++r) {
      const int64_t sr = wrap_idx(r - p, H);
      for (int64_t c = 0; c < Wp; ++c)
        yd[(nc * H + sr) * W + wrap_idx(c - p, W)] += gd[(nc * Hp + r) * Wp + c];
    }
  return y;
}

// im2col layout: row (ci*kh*kw + ky*kw + kx), column (oy*Wo + ox).
void im2col(const real* ximg, int64_t Ci, int64_t H, int64_t W, int64_t kh, int64_t kw, int64_t s,
            int64_t Ho, int64_t Wo, real* col) {
  for (int64_t ci = 0; ci < Ci; ++ci) {
    const real* xc = ximg + ci * H * W;
    for (int64_t ky = 0; ky < kh; ++ky)
      for (int64_t kx = 0; kx < kw; ++kx) {
        real* crow = col + ((ci * kh + ky) * kw + kx) * Ho * Wo;
        for (int64_t oy = 0; oy < Ho; ++oy) {
          const real* xrow = xc + (oy * s + ky) * W + kx;
          real* cdst = crow + oy * Wo;
          if (s == 1) {
            std::memcpy(cdst, xrow, static_cast<size_t>(Wo) * sizeof(real));
          } else {
            for (int64_t ox = 0; ox < Wo; ++ox) cdst[ox] = xrow[ox * s];
          }
        }
      }
  }
}

void col2im_add(const real* col, int64_t Ci, int64_t H, int64_t W, int64_t kh, int64_t kw,
                int64_t s, int64_t Ho, int64_t Wo, real* ximg) {
  for (int64_t ci = 0; ci < Ci; ++ci) {
    real* xc = ximg + ci * H * W;
    for (int64_t ky = 0; ky < kh; ++ky)
      for (int64_t kx = 0; kx < kw; ++kx) {
        const real* crow = col + ((ci * kh + ky) * kw + kx) * Ho * Wo;
        for (int64_t oy = 0; oy < Ho; ++oy) {
          real* xrow = xc + (oy * s + ky) * W + kx;
          const real* csrc = crow + oy * Wo;
          if (s == 1) {
            for (int64_t ox = 0; ox < Wo; ++ox) xrow[ox] += csrc[ox];
          } else {
            for (int64_t ox = 0; ox < Wo; ++ox) xrow[ox * s] += csrc[ox];
          }
        }
      }
  }
}

// C (MxN) += A (MxK) * B (KxN), all row-major contiguous. Rows of C are
// partitioned across threads; each row keeps its serial accumulation order.
void gemm_rows(const real* A, const real* B, real* C, int64_t i0, int64_t i1, int64_t K, int64_t N) {
  for (int64_t i = i0; i < i1; ++i) {
    real* crow = C + i * N;
    const real* arow = A + i * K;
    int64_t k = 0;
    for (; k + 4 <= K; k += 4) {
      const real a0 = arow[k], a1 = arow[k + 1], a2 = arow[k + 2], a3 = arow[k + 3];
      const real* b0 = B + k * N;
      const real* b1 = b0 + N;
      const real* b2 = b1 + N;
      const real* b3 = b2 + N;
      for (int64_t j = 0; j < N; ++j) crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
    }
    for (; k < K; ++k) {
      const real a = arow[k];
      const real* brow = B + k * N;
      for (int64_t j = 0; j < N; ++j) crow[j] += a * brow[j];
    }
  }
}

void gemm_acc(const real* A, const real* B, real* C, int64_t M, int64_t K, int64_t N) {
  if (M < 4 || M * K * N < 400000) {
    gemm_rows(A, B, C, 0, M, K, N);
    return;
  }
  HalfWorker::instance().run(M, [&](int64_t i0, int64_t i1) { gemm_rows(A, B, C, i0, i1, K, N); });
}

Tensor conv2d_kernel(const Tensor& x, const Tensor& w, int64_t s) {
  const int64_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t Ho = (H - kh) / s + 1, Wo = (W - kw) / s + 1;
  const int64_t K = Ci * kh * kw, HW = Ho * Wo;
  Tensor y({N, Co, Ho, Wo});
  RawStore col;
  col.resize(static_cast<size_t>(K * HW));
  const real* xd = x.data();
  const real* wd = w.data();
  real* yd = y.data();
  for (int64_t n = 0; n < N; ++n) {
    im2col(xd + n * Ci * H * W, Ci, H, W, kh, kw, s, Ho, Wo, col.data());
    gemm_acc(wd, col.data(), yd + n * Co * HW, Co, K, HW);
  }
  return y;
}

Tensor conv2d_dx_kernel(const Tensor& gy, const Tensor& w, int64_t s, int64_t H, int64_t W) {
  const int64_t N = gy.dim(0), Co = gy.dim(1), Ho = gy.dim(2), Wo = gy.dim(3);
  const int64_t Ci = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const int64_t K = Ci * kh * kw, HW = Ho * Wo;
  Tensor dx({N, Ci, H, W});
  // W^T (K x Co) from W (Co x K)
  RawStore wt;
  wt.resize(static_cast<size_t>(K * Co));
  const real* wd = w.data();
  for (int64_t i = 0; i < Co; ++i)
    for (int64_t k = 0; k < K; ++k) wt[static_cast<size_t>(k * Co + i)] = wd[i * K + k];
  RawStore dcol;
  dcol.resize(static_cast<size_t>(K * HW));
  const real* gd = gy.data();
  real* xd = dx.data();
  for (int64_t n = 0; n < N; ++n) {
    std::fill(dcol.begin(), dcol.end(), real(0));
    gemm_acc(wt.data(), gd + n * Co * HW, dcol.data(), K, Co, HW);
    col2im_add(dcol.data(), Ci, H, W, kh, kw, s, Ho, Wo, xd + n * Ci * H * W);
  }
  if (testhooks::conv_dx_sign_defect) {
    for (int64_t i = 0; i < dx.numel(); ++i) dx[i] = -dx[i];
  }
  return dx;
}

Tensor conv2d_dw_kernel(const Tensor& x, const Tensor& gy, int64_t s, int64_t kh, int64_t kw) {
  const int64_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Co = gy.dim(1), Ho = gy.dim(2), Wo = gy.dim(3);
  const int64_t K = Ci * kh * kw, HW = Ho * Wo;
  Tensor dw({Co, Ci, kh, kw});
  RawStore col, colT;
  col.resize(static_cast<size_t>(K * HW));
  colT.resize(static_cast<size_t>(K * HW));
  const real* xd = x.data();
  const real* gd = gy.data();
  real* wd = dw.data();
  for (int64_t n = 0; n < N; ++n) {
    im2col(xd + n * Ci * H * W, Ci, H, W, kh, kw, s, Ho, Wo, col.data());
    for (int64_t k = 0; k < K; ++k)
      for (int64_t o = 0; o < HW; ++o) colT[static_cast<size_t>(o * K + k)] = col[static_cast<size_t>(k * HW + o)];
    gemm_acc(gd + n * Co * HW, colT.data(), wd, Co, HW, K);
  }
  return dw;
}

Tensor matmul_kernel(const Tensor& a, const Tensor& b) {
  const int64_t M = a.dim(0), K = a.dim(1), Nn = b.dim(1);
  Tensor c({M, Nn});
  const real* ad = a.data();
  const real* bd = b.data();
  real* cd = c.data();
  for (int64_t i = 0; i < M; ++i)
    for (int64_t k = 0; k < K; ++k) {
      const real av = ad[i * K + k];
      const real* brow = bd + k * Nn;
      real* crow = cd + i * Nn;
      for (int64_t j = 0; j < Nn; ++j) crow[j] += av * brow[j];
    }
  return c;
}

Tensor transpose2_kernel(const Tensor& a) {
  const int64_t M = a.dim(0), N = a.dim(1);
  Tensor t = Tensor::uninitialized({N, M});
  const real* ad = a.data();
  real* td = t.data();
  for (int64_t i = 0; i < M; ++i)
    for (int64_t j = 0; j < N; ++j) td[j * M + i] = ad[i * N + j];
  return t;
}

struct BilinearTaps {
  std::vector<int64_t> i0, i1;
  std::vector<real> w0, w1;
};

BilinearTaps bilinear_taps(int64_t src, int64_t dst) {
  BilinearTaps t;
  t.i0.resize(dst);
  t.i1.resize(dst);
  t.w0.resize(dst);
  t.w1.resize(dst);
  const double r = static_cast<double>(src) / static_cast<double>(dst);
  for (int64_t i = 0; i < dst; ++i) {
    double s = (static_cast<double>(i) + 0.5) * r - 0.5;
    if (s < 0) s = 0;
    int64_t i0 = static_cast<int64_t>(std::floor(s));
    double frac = s - static_cast<double>(i0);
    int64_t i1 = i0 + 1;
    if (i0 > src - 1) i0 = src - 1;
    if (i1 > src - 1) i1 = src - 1;
    t.i0[i] = i0;
    t.i1[i] = i1;
    t.w0[i] = static_cast<real>(1.0 - frac);
    t.w1[i] = static_cast<real>(frac);
  }
  return t;
}

// Legacy nearest mapping (index floor scaling), matches nearest ups/downs of
// common frameworks and keeps one-hot maps one-hot.
inline int64_t nearest_src(int64_t i, int64_t src, int64_t dst) {
  int64_t s = i * src / dst;
  return s < src ? s : src - 1;
}

Tensor resize_kernel(const Tensor& x, bool bilinear, bool adjoint, int64_t sh, int64_t sw,
                     int64_t dh, int64_t dw) {
  const int64_t N = x.dim(0), C = x.dim(1);
  const int64_t oh = adjoint ? sh : dh, ow = adjoint ? sw : dw;
  Tensor y({N, C, oh, ow});
  const real* xd = x.data();
  real* yd = y.data();
  if (!bilinear) {
    for (int64_t nc = 0; nc < N * C; ++nc) {
      const real* xi = xd + nc * (adjoint ? dh * dw : sh * sw);
      real* yo = yd + nc * oh * ow;
      for (int64_t r = 0; r < dh; ++r) {
        const int64_t srow = nearest_src(r, sh, dh);
        for (int64_t c = 0; c < dw; ++c) {
          const int64_t scol = nearest_src(c, sw, dw);
          if (!adjoint)
            yo[r * ow + c] = xi[srow * sw + scol];
          else
            yo[srow * ow + scol] += xi[r * dw + c];
        }
      }
    }
    return y;
  }
  const BilinearTaps ty = bilinear_taps(sh, dh);
  const BilinearTaps tx = bilinear_taps(sw, dw);
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const real* xi = xd + nc * (adjoint ? dh * dw : sh * sw);
    real* yo = yd + nc * oh * ow;
    for (int64_t r = 0; r < dh; ++r)
      for (int64_t c = 0; c < dw; ++c) {
        if (!adjoint) {
          yo[r * ow + c] = ty.w0[r] * (tx.w0[c] * xi[ty.i0[r] * sw + tx.i0[c]] +
                                       tx.w1[c] * xi[ty.i0[r] * sw + tx.i1[c]]) +
                           ty.w1[r] * (tx.w0[c] * xi[ty.i1[r] * sw + tx.i0[c]] +
                                       tx.w1[c] * xi[ty.i1[r] * sw + tx.i1[c]]);
        } else {
          const real g = xi[r * dw + c];
          yo[ty.i0[r] * ow + tx.i0[c]] += ty.w0[r] * tx.w0[c] * g;
          yo[ty.i0[r] * ow + tx.i1[c]] += ty.w0[r] * tx.w1[c] * g;
          yo[ty.i1[r] * ow + tx.i0[c]] += ty.w1[r] * tx.w0[c] * g;
          yo[ty.i1[r] * ow + tx.i1[c]] += ty.w1[r] * tx.w1[c] * g;
        }
      }
  }
  return y;
}

}  // namespace

Var wrap(Tape& t, int32_t id) { return Var{&t, id, t.node(id).value}; }

Var Tape::push(Op op, int32_t a, int32_t b, NodeAttrs attrs, Tensor value) {
  Node n;
  n.op = op;
  n.in = {a, b};
  n.attrs = std::move(attrs);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  const int32_t id = static_cast<int32_t>(nodes_.size()) - 1;
  return Var{this, id, nodes_.back().value};
}

Var Tape::leaf(Tensor v) { return push(Op::Leaf, -1, -1, {}, std::move(v)); }

namespace {
Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape != b.tape) throw_data(ErrCode::ShapeMismatch, "vars from different tapes");
  return *a.tape;
}
}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value, b.value, "add");
  return same_tape(a, b).push(Op::Add, a.node, b.node, {}, map2(a.value, b.value, [](real x, real y) { return x + y; }));
}
Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value, b.value, "sub");
  return same_tape(a, b).push(Op::Sub, a.node, b.node, {}, map2(a.value, b.value, [](real x, real y) { return x - y; }));
}
Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value, b.value, "mul");
  return same_tape(a, b).push(Op::Mul, a.node, b.node, {}, map2(a.value, b.value, [](real x, real y) { return x * y; }));
}
Var neg(const Var& a) {
  return a.tape->push(Op::Neg, a.node, -1, {}, map1(a.value, [](real x) { return -x; }));
}
Var scale(const Var& a, real c) {
  NodeAttrs at;
  at.c = c;
  return a.tape->push(Op::Scale, a.node, -1, at, map1(a.value, [c](real x) { return c * x; }));
}
Var add_scalar(const Var& a, real c) {
  NodeAttrs at;
  at.c = c;
  return a.tape->push(Op::AddScalar, a.node, -1, at, map1(a.value, [c](real x) { return x + c; }));
}
Var pow_const(const Var& a, real c) {
  NodeAttrs at;
  at.c = c;
  return a.tape->push(Op::PowConst, a.node, -1, at, map1(a.value, [c](real x) { return std::pow(x, c); }));
}
Var vexp(const Var& a) {
  return a.tape->push(Op::Exp, a.node, -1, {}, map1(a.value, [](real x) { return std::exp(x); }));
}
Var vabs(const Var& a) {
  return a.tape->push(Op::Abs, a.node, -1, {}, map1(a.value, [](real x) { return std::abs(x); }));
}
Var relu(const Var& a) {
  return a.tape->push(Op::Relu, a.node, -1, {}, map1(a.value, [](real x) { return x > 0 ? x : real(0); }));
}
Var leaky_relu(const Var& a, real slope) {
  NodeAttrs at;
  at.c = slope;
  return a.tape->push(Op::LeakyRelu, a.node, -1, at, map1(a.value, [slope](real x) { return x > 0 ? x : slope * x; }));
}
Var sigmoid(const Var& a) {
  return a.tape->push(Op::Sigmoid, a.node, -1, {},
                      map1(a.value, [](real x) { return real(1) / (real(1) + std::exp(-x)); }));
}
Var vtanh(const Var& a) {
  return a.tape->push(Op::Tanh, a.node, -1, {}, map1(a.value, [](real x) { return std::tanh(x); }));
}

Var reshape(const Var& a, Shape s) {
  NodeAttrs at;
  at.shape = s;
  return a.tape->push(Op::Reshape, a.node, -1, at, a.value.reshaped(std::move(s)));
}

Var broadcast_to(const Var& a, Shape s) {
  if (a.value.shape().size() != s.size())
    throw_data(ErrCode::ShapeMismatch, "broadcast rank " + shape_str(a.value.shape()) + " -> " + shape_str(s));
  for (size_t d = 0; d < s.size(); ++d)
    if (a.value.dim(d) != 1 && a.value.dim(d) != s[d])
      throw_data(ErrCode::ShapeMismatch, "broadcast " + shape_str(a.value.shape()) + " -> " + shape_str(s));
  NodeAttrs at;
  at.shape = s;
  return a.tape->push(Op::Broadcast, a.node, -1, at, broadcast_kernel(a.value, s));
}

Var reduce_sum_keepdim(const Var& a, uint32_t axes_mask) {
  NodeAttrs at;
  at.i[0] = axes_mask;
  return a.tape->push(Op::ReduceSum, a.node, -1, at, reduce_sum_kernel(a.value, axes_mask));
}

Var slice_axis(const Var& a, int axis, int64_t off, int64_t len) {
  if (off < 0 || len <= 0 || off + len > a.value.dim(axis))
    throw_data(ErrCode::ShapeMismatch, "slice_axis out of range");
  NodeAttrs at;
  at.i = {axis, off, len, 0, 0, 0};
  return a.tape->push(Op::SliceAxis, a.node, -1, at, slice_axis_kernel(a.value, axis, off, len));
}

Var insert_axis(const Var& a, int axis, int64_t off, int64_t out_len) {
  if (off < 0 || off + a.value.dim(axis) > out_len)
    throw_data(ErrCode::ShapeMismatch, "insert_axis out of range");
  NodeAttrs at;
  at.i = {axis, off, out_len, 0, 0, 0};
  return a.tape->push(Op::InsertAxis, a.node, -1, at, insert_axis_kernel(a.value, axis, off, out_len));
}

Var crop2d(const Var& a, int64_t y0, int64_t x0, int64_t h, int64_t w) {
  if (a.value.rank() != 4 || y0 < 0 || x0 < 0 || y0 + h > a.value.dim(2) || x0 + w > a.value.dim(3))
    throw_data(ErrCode::WindowOutOfBounds, "crop2d window outside tensor");
  NodeAttrs at;
  at.i = {y0, x0, h, w, 0, 0};
  return a.tape->push(Op::Crop2d, a.node, -1, at, crop2d_kernel(a.value, y0, x0, h, w));
}

Var uncrop2d(const Var& a, int64_t y0, int64_t x0, int64_t H, int64_t W) {
  if (a.value.rank() != 4 || y0 < 0 || x0 < 0 || y0 + a.value.dim(2) > H || x0 + a.value.dim(3) > W)
    throw_data(ErrCode::WindowOutOfBounds, "uncrop2d window outside target");
  NodeAttrs at;
  at.i = {y0, x0, H, W, 0, 0};
  return a.tape->push(Op::Uncrop2d, a.node, -1, at, uncrop2d_kernel(a.value, y0, x0, H, W));
}

Var pad2d(const Var& a, int64_t p, PadMode mode) {
  if (a.value.rank() != 4) throw_data(ErrCode::ShapeMismatch, "pad2d expects NCHW");
  NodeAttrs at;
  at.i[0] = p;
  if (mode == PadMode::Zero)
    return a.tape->push(Op::PadZero2d, a.node, -1, at, pad_zero_kernel(a.value, p));
  return a.tape->push(Op::PadCircular2d, a.node, -1, at, pad_circular_kernel(a.value, p));
}

Var conv2d_raw(const Var& x, const Var& w, int64_t stride) {
  if (x.value.rank() != 4 || w.value.rank() != 4 || x.value.dim(1) != w.value.dim(1))
    throw_data(ErrCode::ShapeMismatch,
               "conv2d " + shape_str(x.value.shape()) + " w " + shape_str(w.value.shape()));
  if (x.value.dim(2) < w.value.dim(2) || x.value.dim(3) < w.value.dim(3))
    throw_data(ErrCode::ShapeMismatch, "conv2d input smaller than kernel");
  NodeAttrs at;
  at.i[0] = stride;
  return same_tape(x, w).push(Op::Conv2d, x.node, w.node, at, conv2d_kernel(x.value, w.value, stride));
}

Var conv2d_dx_raw(const Var& gy, const Var& w, int64_t stride, int64_t H, int64_t W) {
  NodeAttrs at;
  at.i = {stride, H, W, 0, 0, 0};
  return same_tape(gy, w).push(Op::Conv2dDx, gy.node, w.node, at,
                               conv2d_dx_kernel(gy.value, w.value, stride, H, W));
}

Var conv2d_dw_raw(const Var& x, const Var& gy, int64_t stride, int64_t kh, int64_t kw) {
  NodeAttrs at;
  at.i = {stride, kh, kw, 0, 0, 0};
  return same_tape(x, gy).push(Op::Conv2dDw, x.node, gy.node, at,
                               conv2d_dw_kernel(x.value, gy.value, stride, kh, kw));
}

Var matmul(const Var& a, const Var& b) {
  if (a.value.rank() != 2 || b.value.rank() != 2 || a.value.dim(1) != b.value.dim(0))
    throw_data(ErrCode::ShapeMismatch,
               "matmul " + shape_str(a.value.shape()) + " x " + shape_str(b.value.shape()));
  return same_tape(a, b).push(Op::MatMul, a.node, b.node, {}, matmul_kernel(a.value, b.value));
}

Var transpose2(const Var& a) {
  if (a.value.rank() != 2) throw_data(ErrCode::ShapeMismatch, "transpose2 expects rank 2");
  return a.tape->push(Op::Transpose2, a.node, -1, {}, transpose2_kernel(a.value));
}

Var resize2d(const Var& a, ResizeMode mode, int64_t out_h, int64_t out_w) {
  if (a.value.rank() != 4) throw_data(ErrCode::ShapeMismatch, "resize2d expects NCHW");
  NodeAttrs at;
  at.i = {a.value.dim(2), a.value.dim(3), out_h, out_w, 0, 0};
  at.flags = mode == ResizeMode::Bilinear ? 1 : 0;
  return a.tape->push(Op::Resize, a.node, -1, at,
                      resize_kernel(a.value, mode == ResizeMode::Bilinear, false, a.value.dim(2),
                                    a.value.dim(3), out_h, out_w));
}

namespace {
Var resize2d_adjoint(const Var& g, bool bilinear, int64_t sh, int64_t sw, int64_t dh, int64_t dw) {
  NodeAttrs at;
  at.i = {sh, sw, dh, dw, 0, 0};
  at.flags = static_cast<uint8_t>((bilinear ? 1 : 0) | 2);
  return g.tape->push(Op::Resize, g.node, -1, at, resize_kernel(g.value, bilinear, true, sh, sw, dh, dw));
}
}  // namespace

// --- compositions ----------------------------------------------------------

Var stop_grad(const Var& a) { return a.tape->constant(a.value); }

Var sum_all(const Var& a) {
  uint32_t mask = 0;
  for (size_t d = 0; d < a.value.rank(); ++d) mask |= 1u << d;
  return reshape(reduce_sum_keepdim(a, mask), Shape{1});
}

Var mean_all(const Var& a) { return scale(sum_all(a), real(1) / static_cast<real>(a.value.numel())); }

Var mean_axes(const Var& a, uint32_t axes_mask) {
  int64_t n = 1;
  for (size_t d = 0; d < a.value.rank(); ++d)
    if (axes_mask & (1u << d)) n *= a.value.dim(d);
  return scale(reduce_sum_keepdim(a, axes_mask), real(1) / static_cast<real>(n));
}

Var square(const Var& a) { return mul(a, a); }

Var div_positive(const Var& a, const Var& b) { return mul(a, pow_const(b, real(-1))); }

Var concat_channels(const std::vector<Var>& parts) {
  int64_t total = 0;
  for (const auto& p : parts) total += p.value.dim(1);
  Var acc;
  int64_t off = 0;
  for (const auto& p : parts) {
    Var placed = insert_axis(p, 1, off, total);
    acc = acc.defined() ? add(acc, placed) : placed;
    off += p.value.dim(1);
  }
  return acc;
}

Var resample(const Var& a, double scl, ResizeMode mode) {
  const int64_t H = a.value.dim(2), W = a.value.dim(3);
  if (scl == 2.0) return resize2d(a, mode, H * 2, W * 2);
  if (scl == 0.5) {
    if (H % 2 != 0 || W % 2 != 0)
      throw_data(ErrCode::OddDimension, "resample 0.5 on odd spatial size " + shape_str(a.value.shape()));
    return resize2d(a, mode, H / 2, W / 2);
  }
  throw_data(ErrCode::RangeError, "resample scale must be 0.5 or 2");
}

// --- backward --------------------------------------------------------------

std::vector<Var> Tape::vjp(int32_t id, const Var& gy) {
  const Node n = nodes_[static_cast<size_t>(id)];  // copy: builders may realloc
  Var a = n.in[0] >= 0 ? wrap(*this, n.in[0]) : Var{};
  Var b = n.in[1] >= 0 ? wrap(*this, n.in[1]) : Var{};
  Var out = wrap(*this, id);
  switch (n.op) {
    case Op::Leaf:
      return {};
    case Op::Add:
      return {gy, gy};
    case Op::Sub:
      return {gy, neg(gy)};
    case Op::Mul:
      return {mul(gy, b), mul(gy, a)};
    case Op::Neg:
      return {neg(gy)};
    case Op::Scale:
      return {scale(gy, static_cast<real>(n.attrs.c))};
    case Op::AddScalar:
      return {gy};
    case Op::PowConst: {
      const real p = static_cast<real>(n.attrs.c);
      return {mul(gy, scale(pow_const(a, p - 1), p))};
    }
    case Op::Exp:
      return {mul(gy, out)};
    case Op::Abs:
      return {mul(gy, constant(map1(a.value, [](real x) { return x > 0 ? real(1) : (x < 0 ? real(-1) : real(0)); })))};
    case Op::Relu:
      return {mul(gy, constant(map1(a.value, [](real x) { return x > 0 ? real(1) : real(0); })))};
    case Op::LeakyRelu: {
      const real s = static_cast<real>(n.attrs.c);
      return {mul(gy, constant(map1(a.value, [s](real x) { return x > 0 ? real(1) : s; })))};
    }
    case Op::Sigmoid: {
      Var one_minus = add_scalar(neg(out), real(1));
      return {mul(gy, mul(out, one_minus))};
    }
    case Op::Tanh: {
      Var one_minus_sq = add_scalar(neg(square(out)), real(1));
      return {mul(gy, one_minus_sq)};
    }
    case Op::Reshape:
      return {reshape(gy, a.value.shape())};
    case Op::Broadcast: {
      uint32_t mask = 0;
      for (size_t d = 0; d < a.value.rank(); ++d)
        if (a.value.dim(d) == 1 && n.attrs.shape[d] != 1) mask |= 1u << d;
      return {mask ? reduce_sum_keepdim(gy, mask) : gy};
    }
    case Op::ReduceSum:
      return {broadcast_to(gy, a.value.shape())};
    case Op::SliceAxis:
      return {insert_axis(gy, static_cast<int>(n.attrs.i[0]), n.attrs.i[1], a.value.dim(n.attrs.i[0]))};
    case Op::InsertAxis:
      return {slice_axis(gy, static_cast<int>(n.attrs.i[0]), n.attrs.i[1], a.value.dim(n.attrs.i[0]))};
    case Op::Crop2d:
      return {uncrop2d(gy, n.attrs.i[0], n.attrs.i[1], a.value.dim(2), a.value.dim(3))};
    case Op::Uncrop2d:
      return {crop2d(gy, n.attrs.i[0], n.attrs.i[1], a.value.dim(2), a.value.dim(3))};
    case Op::PadZero2d: {
      const int64_t p = n.attrs.i[0];
      return {crop2d(gy, p, p, a.value.dim(2), a.value.dim(3))};
    }
    case Op::PadCircular2d: {
      NodeAttrs at;
      at.i[0] = n.attrs.i[0];
      return {gy.tape->push(Op::FoldCircular2d, gy.node, -1, at, fold_circular_kernel(gy.value, n.attrs.i[0]))};
    }
    case Op::FoldCircular2d:
      return {pad2d(gy, n.attrs.i[0], PadMode::Circular)};
    case Op::Conv2d: {
      const int64_t s = n.attrs.i[0];
      return {conv2d_dx_raw(gy, b, s, a.value.dim(2), a.value.dim(3)),
              conv2d_dw_raw(a, gy, s, b.value.dim(2), b.value.dim(3))};
    }
    case Op::Conv2dDx: {
      // a = gy0 (output-grad-like), b = w; out is x-like; gy is x-like.
      const int64_t s = n.attrs.i[0];
      return {conv2d_raw(gy, b, s), conv2d_dw_raw(gy, a, s, b.value.dim(2), b.value.dim(3))};
    }
    case Op::Conv2dDw: {
      // a = x, b = gy0; out is w-like; gy is w-like.
      const int64_t s = n.attrs.i[0];
      return {conv2d_dx_raw(b, gy, s, a.value.dim(2), a.value.dim(3)), conv2d_raw(a, gy, s)};
    }
    case Op::MatMul:
      return {matmul(gy, transpose2(b)), matmul(transpose2(a), gy)};
    case Op::Transpose2:
      return {transpose2(gy)};
    case Op::Resize: {
      const bool bilinear = n.attrs.flags & 1;
      const bool adjoint = n.attrs.flags & 2;
      const auto& i = n.attrs.i;
      if (!adjoint) return {resize2d_adjoint(gy, bilinear, i[0], i[1], i[2], i[3])};
      NodeAttrs at;
      at.i = n.attrs.i;
      at.flags = static_cast<uint8_t>(bilinear ? 1 : 0);
      return {gy.tape->push(Op::Resize, gy.node, -1, at,
                            resize_kernel(gy.value, bilinear, false, i[0], i[1], i[2], i[3]))};
    }
  }
  return {};
}

std::vector<Var> Tape::gradients(const Var& out, const std::vector<Var>& wrt) {
  if (out.tape != this) throw_data(ErrCode::ShapeMismatch, "gradients: output from another tape");
  if (out.value.numel() != 1) throw_data(ErrCode::ShapeMismatch, "gradients: output must be scalar");
  const size_t n0 = nodes_.size();
  std::vector<uint8_t> anc(n0, 0), des(n0, 0);
  anc[static_cast<size_t>(out.node)] = 1;
  for (int32_t id = out.node; id >= 0; --id) {
    if (!anc[static_cast<size_t>(id)]) continue;
    for (int32_t in : nodes_[static_cast<size_t>(id)].in)
      if (in >= 0) anc[static_cast<size_t>(in)] = 1;
  }
  for (const Var& w : wrt) {
    if (w.tape != this) throw_data(ErrCode::ShapeMismatch, "gradients: wrt from another tape");
    des[static_cast<size_t>(w.node)] = 1;
  }
  for (size_t id = 0; id < n0; ++id) {
    for (int32_t in : nodes_[id].in)
      if (in >= 0 && des[static_cast<size_t>(in)]) des[id] = 1;
  }
  std::vector<Var> adj(n0);
  adj[static_cast<size_t>(out.node)] = constant(Tensor::full(out.value.shape(), real(1)));
  for (int32_t id = out.node; id >= 0; --id) {
    const size_t uid = static_cast<size_t>(id);
    if (!(anc[uid] && des[uid]) || !adj[uid].defined()) continue;
    auto gs = vjp(id, adj[uid]);
    const auto ins = nodes_[uid].in;
    for (size_t k = 0; k < gs.size(); ++k) {
      const int32_t in = ins[k];
      if (in < 0 || !gs[k].defined()) continue;
      const size_t uin = static_cast<size_t>(in);
      if (!(anc[uin] && des[uin])) continue;
      adj[uin] = adj[uin].defined() ? add(adj[uin], gs[k]) : gs[k];
    }
  }
  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    const size_t uid = static_cast<size_t>(w.node);
    if (adj[uid].defined())
      result.push_back(adj[uid]);
    else
      result.push_back(constant(Tensor::zeros(w.value.shape())));
  }
  return result;
}

}  // namespace madt
