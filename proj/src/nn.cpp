#include "hawkesnn/nn.hpp"

#include <algorithm>
#if defined(__AVX512F__)
#include <immintrin.h>
#endif
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <thread>

#include "hawkesnn/mle.hpp"
#include "hawkesnn/rng.hpp"

namespace hawkes {

namespace {

// Lane width of the batched kernels. Eight sequences advance together; all
// arithmetic is elementwise per lane, so results never depend on how paths
// are packed into lanes.
constexpr int kLanes = 8;
constexpr int kMaxHidden = 16;

// GCC/Clang vector extensions. The autovectorizer loses the small
// fixed-stride accumulator loops here, so the lanes are spelled out.
using Vd = double __attribute__((vector_size(kLanes * sizeof(double))));
using Vi = long long __attribute__((vector_size(kLanes * sizeof(long long))));

inline Vd splat(double s) { return Vd{s, s, s, s, s, s, s, s}; }
inline Vd vload(const double* p) {
  Vd v;
  std::memcpy(&v, p, sizeof(Vd));
  return v;
}
inline void vstore(double* p, Vd v) { std::memcpy(p, &v, sizeof(Vd)); }

// Fixed reduction tree, so results do not depend on how blocks are scheduled.
inline double hsum(Vd v) {
  return ((v[0] + v[1]) + (v[2] + v[3])) + ((v[4] + v[5]) + (v[6] + v[7]));
}

// ---------------------------------------------------------------------------
// Transcendentals. Gate activations dominate the runtime, so exp is a
// branch-free polynomial with exact range reduction (|rel err| < 1e-14)
// instead of a libm call. Inputs are clamped well past saturation.

constexpr double kLog2E = 1.4426950408889634074;
constexpr double kLn2Hi = 6.93147180369123816490e-01;
constexpr double kLn2Lo = 1.90821492927058770002e-10;

inline Vd vexp(Vd v) {
  // Round-to-nearest via the 2^52 + 2^51 trick; valid because callers clamp
  // |v| far below 2^51.
  constexpr double kMagic = 6755399441055744.0;
  const Vd kd = (v * splat(kLog2E) + splat(kMagic)) - splat(kMagic);
  const Vd r = (v - kd * splat(kLn2Hi)) - kd * splat(kLn2Lo);
  Vd p = splat(1.6059043836821614599e-10);   // 1/13!
  p = p * r + splat(2.0876756987868098979e-09);
  p = p * r + splat(2.5052108385441718775e-08);
  p = p * r + splat(2.7557319223985890653e-07);
  p = p * r + splat(2.7557319223985892511e-06);
  p = p * r + splat(2.4801587301587301566e-05);
  p = p * r + splat(1.9841269841269841253e-04);
  p = p * r + splat(1.3888888888888889419e-03);
  p = p * r + splat(8.3333333333333332177e-03);
  p = p * r + splat(4.1666666666666664354e-02);
  p = p * r + splat(1.6666666666666665741e-01);
  p = p * r + splat(0.5);
  p = p * r + splat(1.0);
  p = p * r + splat(1.0);
  const Vi ki = __builtin_convertvector(kd, Vi);
  const Vi bits = (ki + 1023) << 52;
  Vd scale;
  std::memcpy(&scale, &bits, sizeof(scale));
  return p * scale;
}

inline Vd clampv(Vd v, double lo, double hi) {
  const Vd vlo = splat(lo), vhi = splat(hi);
  v = v > vhi ? vhi : v;
  v = v < vlo ? vlo : v;
  return v;
}

// n is a multiple of kLanes for every caller (hid * kLanes).
inline void vsigmoid(double* __restrict__ x, int n) {
  for (int i = 0; i < n; i += kLanes) {
    const Vd v = clampv(vload(x + i), -40.0, 40.0);
    vstore(x + i, splat(1.0) / (splat(1.0) + vexp(-v)));
  }
}

inline void vtanh(double* __restrict__ x, int n) {
  for (int i = 0; i < n; i += kLanes) {
    const Vd v = clampv(vload(x + i), -20.0, 20.0);
    const Vd e = vexp(splat(-2.0) * v);
    vstore(x + i, (splat(1.0) - e) / (splat(1.0) + e));
  }
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Flat weight layout. Gate blocks ordered input, forget, candidate, output.

struct Layout {
  int in1, h1, h2, out;
  std::size_t wx1, wh1, b1, wx2, wh2, b2, wy, by, total;

  explicit Layout(const ModelDims& d)
      : in1(d.input), h1(d.hidden1), h2(d.hidden2), out(d.output) {
    std::size_t off = 0;
    wx1 = off; off += std::size_t(4) * h1 * in1;
    wh1 = off; off += std::size_t(4) * h1 * h1;
    b1 = off;  off += std::size_t(4) * h1;
    wx2 = off; off += std::size_t(4) * h2 * h1;
    wh2 = off; off += std::size_t(4) * h2 * h2;
    b2 = off;  off += std::size_t(4) * h2;
    wy = off;  off += std::size_t(out) * h2;
    by = off;  off += out;
    total = off;
  }
};

void check_dims(const ModelDims& d) {
  if (d.input != 2 || d.hidden1 < 1 || d.hidden2 < 1 || d.output != 4 ||
      d.hidden1 > kMaxHidden || d.hidden2 > kMaxHidden)
    throw std::invalid_argument("bad model dimensions");
}

// ---------------------------------------------------------------------------
// Lane kernels.

inline Vd vsigmoid1(Vd v) {
  return splat(1.0) / (splat(1.0) + vexp(-clampv(v, -40.0, 40.0)));
}
inline Vd vtanh1(Vd v) {
  const Vd e = vexp(splat(-2.0) * clampv(v, -20.0, 20.0));
  return (splat(1.0) - e) / (splat(1.0) + e);
}

// ---------------------------------------------------------------------------
// Single-precision inference lane. Training and its gradient checks stay in
// f64; prediction runs 16 paths per vector with f32 arithmetic, which is
// accurate to ~1e-7 relative -- far below the sampling error of any
// estimate. Weights are cast once per batch.

constexpr int kLanesF = 16;
using Vf = float __attribute__((vector_size(kLanesF * sizeof(float))));
using Vu = int __attribute__((vector_size(kLanesF * sizeof(int))));

inline Vf splatf(float s) {
  return Vf{s, s, s, s, s, s, s, s, s, s, s, s, s, s, s, s};
}
inline Vf vloadf(const float* p) {
  Vf v;
  std::memcpy(&v, p, sizeof(Vf));
  return v;
}
inline void vstoref(float* p, Vf v) { std::memcpy(p, &v, sizeof(Vf)); }

inline Vf vexpf(Vf v) {
  constexpr float kMagicF = 12582912.0f;  // 2^23 + 2^22
  const Vf kd = (v * splatf(1.44269504f) + splatf(kMagicF)) - splatf(kMagicF);
  const Vf r = (v - kd * splatf(0.693359375f)) - kd * splatf(-2.12194440e-4f);
  Vf p = splatf(1.9875691500e-4f);  // ~1/7!
  p = p * r + splatf(1.3981999507e-3f);
  p = p * r + splatf(8.3334519073e-3f);
  p = p * r + splatf(4.1665795894e-2f);
  p = p * r + splatf(1.6666665459e-1f);
  p = p * r + splatf(5.0000001201e-1f);
  p = p * r + splatf(1.0f);
  p = p * r + splatf(1.0f);
  const Vu ki = __builtin_convertvector(kd, Vu);
  const Vu bits = (ki + 127) << 23;
  Vf scale;
  std::memcpy(&scale, &bits, sizeof(scale));
  return p * scale;
}

inline Vf clampvf(Vf v, float lo, float hi) {
  const Vf vlo = splatf(lo), vhi = splatf(hi);
  v = v > vhi ? vhi : v;
  v = v < vlo ? vlo : v;
  return v;
}

// 1/x for x >= 1 without the divider: hardware estimate + one Newton step
// reaches f32 rounding error and keeps the activation loop on the FMA ports.
inline Vf vrecipf(Vf x) {
#if defined(__AVX512F__)
  __m512 est;
  std::memcpy(&est, &x, sizeof(est));
  est = _mm512_rcp14_ps(est);
  Vf y;
  std::memcpy(&y, &est, sizeof(y));
  return y * (splatf(2.0f) - x * y);
#else
  return splatf(1.0f) / x;
#endif
}

inline Vf vsigmoid1f(Vf v) {
  return vrecipf(splatf(1.0f) + vexpf(-clampvf(v, -30.0f, 30.0f)));
}
inline Vf vtanh1f(Vf v) {
  const Vf e = vexpf(splatf(-2.0f) * clampvf(v, -15.0f, 15.0f));
  return (splatf(1.0f) - e) * vrecipf(splatf(1.0f) + e);
}

// log1p(x) for x >= 0 with ~1e-7 absolute accuracy, vectorized.
inline Vf vlog1pf(Vf x) {
  const Vf w = x + splatf(1.0f);
  Vu bits;
  std::memcpy(&bits, &w, sizeof(bits));
  Vu e = (bits >> 23) - 127;
  bits = (bits & 0x007FFFFF) | 0x3F800000;
  Vf m;
  std::memcpy(&m, &bits, sizeof(m));
  const auto big = m > splatf(1.5f);
  m = big ? m * splatf(0.5f) : m;
  e = big ? e + 1 : e;
  const Vf t = (m - splatf(1.0f)) / (m + splatf(1.0f));
  const Vf t2 = t * t;
  Vf p = splatf(1.0f / 9.0f);
  p = p * t2 + splatf(1.0f / 7.0f);
  p = p * t2 + splatf(0.2f);
  p = p * t2 + splatf(1.0f / 3.0f);
  p = p * t2 + splatf(1.0f);
  return __builtin_convertvector(e, Vf) * splatf(0.69314718f) +
         splatf(2.0f) * t * p;
}

// Runs one whole layer over the sequence for 16 paths, states held in
// registers. xseq: [L][in][16], hseq out: [L][Hid][16].
template <int Hid>
void lstm_layer_pass_f(const float* __restrict__ wx,
                       const float* __restrict__ wh,
                       const float* __restrict__ b, int in, std::size_t L,
                       const float* __restrict__ xseq,
                       float* __restrict__ hseq) {
  Vf h[Hid], c[Hid], pre[4 * Hid], go[Hid];
  for (int u = 0; u < Hid; ++u) {
    h[u] = splatf(0.0f);
    c[u] = splatf(0.0f);
  }
  for (std::size_t t = 0; t < L; ++t) {
    const float* x = xseq + t * in * kLanesF;
    for (int g = 0; g < 4 * Hid; g += 2) {
      Vf a0 = splatf(b[g]), a1 = splatf(b[g + 1]);
      const float* w0 = wx + std::size_t(g) * in;
      const float* w1 = w0 + in;
      for (int i = 0; i < in; ++i) {
        const Vf xv = vloadf(x + std::size_t(i) * kLanesF);
        a0 += splatf(w0[i]) * xv;
        a1 += splatf(w1[i]) * xv;
      }
      const float* u0 = wh + std::size_t(g) * Hid;
      const float* u1 = u0 + Hid;
      for (int j = 0; j < Hid; ++j) {
        a0 += splatf(u0[j]) * h[j];
        a1 += splatf(u1[j]) * h[j];
      }
      pre[g] = a0;
      pre[g + 1] = a1;
    }
    for (int u = 0; u < Hid; ++u) {
      c[u] = vsigmoid1f(pre[Hid + u]) * c[u] +
             vsigmoid1f(pre[u]) * vtanh1f(pre[2 * Hid + u]);
      go[u] = vsigmoid1f(pre[3 * Hid + u]);
    }
    float* hout = hseq + t * Hid * kLanesF;
    for (int u = 0; u < Hid; ++u) {
      h[u] = go[u] * vtanh1f(c[u]);
      vstoref(hout + std::size_t(u) * kLanesF, h[u]);
    }
  }
}

using LayerPassFn = void (*)(const float*, const float*, const float*, int,
                             std::size_t, const float*, float*);

LayerPassFn layer_pass_for(int hid) {
  switch (hid) {
    case 1: return &lstm_layer_pass_f<1>;
    case 2: return &lstm_layer_pass_f<2>;
    case 3: return &lstm_layer_pass_f<3>;
    case 4: return &lstm_layer_pass_f<4>;
    case 5: return &lstm_layer_pass_f<5>;
    case 6: return &lstm_layer_pass_f<6>;
    case 7: return &lstm_layer_pass_f<7>;
    case 8: return &lstm_layer_pass_f<8>;
    case 9: return &lstm_layer_pass_f<9>;
    case 10: return &lstm_layer_pass_f<10>;
    case 11: return &lstm_layer_pass_f<11>;
    case 12: return &lstm_layer_pass_f<12>;
    case 13: return &lstm_layer_pass_f<13>;
    case 14: return &lstm_layer_pass_f<14>;
    case 15: return &lstm_layer_pass_f<15>;
    case 16: return &lstm_layer_pass_f<16>;
    default: return nullptr;
  }
}

// Inference-only step: gates live in registers, h and c update in place.
void lstm_step_infer(const double* __restrict__ wx,
                     const double* __restrict__ wh,
                     const double* __restrict__ b, int in, int hid,
                     const double* __restrict__ x, double* __restrict__ h,
                     double* __restrict__ c) {
  Vd xr[kMaxHidden], hr[kMaxHidden], pre[4 * kMaxHidden];
  for (int i = 0; i < in; ++i) xr[i] = vload(x + std::size_t(i) * kLanes);
  for (int j = 0; j < hid; ++j) hr[j] = vload(h + std::size_t(j) * kLanes);
  const int rows = 4 * hid;
  for (int g = 0; g < rows; g += 2) {
    Vd a0 = splat(b[g]), a1 = splat(b[g + 1]);
    const double* w0 = wx + std::size_t(g) * in;
    const double* w1 = w0 + in;
    for (int i = 0; i < in; ++i) {
      a0 += splat(w0[i]) * xr[i];
      a1 += splat(w1[i]) * xr[i];
    }
    const double* u0 = wh + std::size_t(g) * hid;
    const double* u1 = u0 + hid;
    for (int j = 0; j < hid; ++j) {
      a0 += splat(u0[j]) * hr[j];
      a1 += splat(u1[j]) * hr[j];
    }
    pre[g] = a0;
    pre[g + 1] = a1;
  }
  for (int u = 0; u < hid; ++u) {
    const Vd gi = vsigmoid1(pre[u]);
    const Vd gf = vsigmoid1(pre[hid + u]);
    const Vd gg = vtanh1(pre[2 * hid + u]);
    const Vd go = vsigmoid1(pre[3 * hid + u]);
    const Vd cv = gf * vload(c + std::size_t(u) * kLanes) + gi * gg;
    vstore(c + std::size_t(u) * kLanes, cv);
    vstore(h + std::size_t(u) * kLanes, go * vtanh1(cv));
  }
}

// One LSTM step for a lane block. x: [in][K], states: [hid][K],
// gates out: [4*hid][K] post-activation.
void lstm_step(const double* __restrict__ wx, const double* __restrict__ wh,
               const double* __restrict__ b, int in, int hid,
               const double* __restrict__ x, const double* __restrict__ hprev,
               const double* __restrict__ cprev, double* __restrict__ gates,
               double* __restrict__ c, double* __restrict__ tc,
               double* __restrict__ h) {
  const int rows = 4 * hid;
  Vd xr[kMaxHidden], hr[kMaxHidden];
  for (int i = 0; i < in; ++i) xr[i] = vload(x + std::size_t(i) * kLanes);
  for (int j = 0; j < hid; ++j) hr[j] = vload(hprev + std::size_t(j) * kLanes);
  // Two rows at a time: independent accumulator chains hide FMA latency.
  for (int g = 0; g < rows; g += 2) {
    Vd a0 = splat(b[g]), a1 = splat(b[g + 1]);
    const double* w0 = wx + std::size_t(g) * in;
    const double* w1 = w0 + in;
    for (int i = 0; i < in; ++i) {
      a0 += splat(w0[i]) * xr[i];
      a1 += splat(w1[i]) * xr[i];
    }
    const double* u0 = wh + std::size_t(g) * hid;
    const double* u1 = u0 + hid;
    for (int j = 0; j < hid; ++j) {
      a0 += splat(u0[j]) * hr[j];
      a1 += splat(u1[j]) * hr[j];
    }
    vstore(gates + std::size_t(g) * kLanes, a0);
    vstore(gates + std::size_t(g + 1) * kLanes, a1);
  }
  const int hk = hid * kLanes;
  vsigmoid(gates, hk);            // input gate
  vsigmoid(gates + hk, hk);       // forget gate
  vtanh(gates + 2 * hk, hk);      // candidate
  vsigmoid(gates + 3 * hk, hk);   // output gate
  const double* gi = gates;
  const double* gf = gates + hk;
  const double* gg = gates + 2 * hk;
  const double* go = gates + 3 * hk;
  for (int u = 0; u < hk; u += kLanes) {
    const Vd cv =
        vload(gf + u) * vload(cprev + u) + vload(gi + u) * vload(gg + u);
    vstore(c + u, cv);
  }
  std::memcpy(tc, c, sizeof(double) * hk);
  vtanh(tc, hk);
  for (int u = 0; u < hk; u += kLanes)
    vstore(h + u, vload(go + u) * vload(tc + u));
}

// Reverse of one step. dh holds dL/dh_t including the recurrent carry;
// dc_carry is dL/dc_t from the future on entry and dL/dc_{t-1}'s kernel
// part on exit. dx may be null when input gradients are not needed.
void lstm_step_backward(const double* __restrict__ wx,
                        const double* __restrict__ wh, int in, int hid,
                        const double* __restrict__ x,
                        const double* __restrict__ hprev,
                        const double* __restrict__ cprev,
                        const double* __restrict__ gates,
                        const double* __restrict__ tc,
                        const double* __restrict__ dh,
                        double* __restrict__ dc_carry,
                        double* __restrict__ dpre, double* __restrict__ dwx,
                        double* __restrict__ dwh, double* __restrict__ db,
                        double* __restrict__ dx,
                        double* __restrict__ dh_prev) {
  const int hk = hid * kLanes;
  const double* gi = gates;
  const double* gf = gates + hk;
  const double* gg = gates + 2 * hk;
  const double* go = gates + 3 * hk;
  double* dpi = dpre;
  double* dpf = dpre + hk;
  double* dpg = dpre + 2 * hk;
  double* dpo = dpre + 3 * hk;
  const Vd one = splat(1.0);
  for (int u = 0; u < hk; u += kLanes) {
    const Vd dhv = vload(dh + u);
    const Vd vtc = vload(tc + u);
    const Vd vgi = vload(gi + u);
    const Vd vgf = vload(gf + u);
    const Vd vgg = vload(gg + u);
    const Vd vgo = vload(go + u);
    const Vd dc = dhv * vgo * (one - vtc * vtc) + vload(dc_carry + u);
    vstore(dpo + u, dhv * vtc * vgo * (one - vgo));
    vstore(dpi + u, dc * vgg * vgi * (one - vgi));
    vstore(dpg + u, dc * vgi * (one - vgg * vgg));
    vstore(dpf + u, dc * vload(cprev + u) * vgf * (one - vgf));
    vstore(dc_carry + u, dc * vgf);
  }
  const int rows = 4 * hid;
  for (int g = 0; g < rows; ++g) {
    const Vd dpr = vload(dpre + std::size_t(g) * kLanes);
    db[g] += hsum(dpr);
    double* dwxr = dwx + std::size_t(g) * in;
    for (int i = 0; i < in; ++i)
      dwxr[i] += hsum(dpr * vload(x + std::size_t(i) * kLanes));
    double* dwhr = dwh + std::size_t(g) * hid;
    for (int j = 0; j < hid; ++j)
      dwhr[j] += hsum(dpr * vload(hprev + std::size_t(j) * kLanes));
  }
  if (dx) {
    for (int i = 0; i < in; ++i) {
      Vd acc = splat(0.0);
      for (int g = 0; g < rows; ++g)
        acc += splat(wx[std::size_t(g) * in + i]) *
               vload(dpre + std::size_t(g) * kLanes);
      vstore(dx + std::size_t(i) * kLanes, acc);
    }
  }
  for (int j = 0; j < hid; ++j) {
    Vd acc = splat(0.0);
    for (int g = 0; g < rows; ++g)
      acc += splat(wh[std::size_t(g) * hid + j]) *
             vload(dpre + std::size_t(g) * kLanes);
    vstore(dh_prev + std::size_t(j) * kLanes, acc);
  }
}

struct Workspace {
  // tapes (training only): per step
  std::vector<double> x1;                   // [L][in][K]
  std::vector<double> g1, c1, tc1, h1;      // layer 1
  std::vector<double> g2, c2, tc2, h2;      // layer 2
  // step scratch
  std::vector<double> sa, sb, sc, sd, se, sf, sg, sh;
  std::vector<double> grad_scratch;

  void reserve_train(const Layout& lay, std::size_t L) {
    x1.resize(L * lay.in1 * kLanes);
    g1.resize(L * 4 * lay.h1 * kLanes);
    c1.resize(L * lay.h1 * kLanes);
    tc1.resize(L * lay.h1 * kLanes);
    h1.resize(L * lay.h1 * kLanes);
    g2.resize(L * 4 * lay.h2 * kLanes);
    c2.resize(L * lay.h2 * kLanes);
    tc2.resize(L * lay.h2 * kLanes);
    h2.resize(L * lay.h2 * kLanes);
    const std::size_t m = std::max(lay.h1, lay.h2) * std::size_t(kLanes);
    sa.resize(4 * m);
    sb.resize(m);
    sc.resize(m);
    sd.resize(m);
    se.resize(m);
    sf.resize(m);
    sg.resize(m);
    sh.resize(m);
  }

  void reserve_infer(const Layout& lay) {
    const std::size_t m = std::max(lay.h1, lay.h2) * std::size_t(kLanes);
    x1.resize(std::max<std::size_t>(lay.in1, 1) * kLanes);
    g1.resize(4 * m);
    c1.resize(m);
    tc1.resize(m);
    h1.resize(m);
    g2.resize(4 * m);
    c2.resize(m);
    tc2.resize(m);
    h2.resize(m);
    sb.resize(m);
    sc.resize(m);
    sd.resize(m);
    sf.resize(m);
  }
};

inline void encode_step(const LstmEstimator& m,
                        const FeatureSequence* const* samples, int active,
                        std::size_t t, double* dst /* [in][K] */) {
  for (int k = 0; k < kLanes; ++k) {
    if (k < active) {
      const FeatureSequence& f = *samples[k];
      dst[k] = (std::log1p(f.inter_arrivals[t]) - m.ia_mean) / m.ia_sd;
      dst[kLanes + k] = static_cast<double>(f.directions[t]);
    } else {
      dst[k] = 0.0;
      dst[kLanes + k] = 0.0;
    }
  }
}

// Head output for lane k.
inline void head_raw(const LstmEstimator& m, const Layout& lay,
                     const double* h2 /* [h2][K] */, int k,
                     std::array<double, 4>& raw) {
  const double* wy = m.weights.data() + lay.wy;
  const double* by = m.weights.data() + lay.by;
  for (int o = 0; o < lay.out; ++o) {
    double acc = by[o];
    const double* wyr = wy + std::size_t(o) * lay.h2;
    for (int j = 0; j < lay.h2; ++j) acc += wyr[j] * h2[std::size_t(j) * kLanes + k];
    raw[o] = acc;
  }
}

// Forward a lane block without tapes. Returns head raws per active lane.
void infer_block(const LstmEstimator& m, const Layout& lay,
                 const FeatureSequence* const* samples, int active,
                 std::array<double, 4>* raws, Workspace& ws) {
  const std::size_t L = samples[0]->size();
  const double* w = m.weights.data();
  const int hk1 = lay.h1 * kLanes;
  const int hk2 = lay.h2 * kLanes;
  std::fill(ws.h1.begin(), ws.h1.begin() + hk1, 0.0);
  std::fill(ws.c1.begin(), ws.c1.begin() + hk1, 0.0);
  std::fill(ws.h2.begin(), ws.h2.begin() + hk2, 0.0);
  std::fill(ws.c2.begin(), ws.c2.begin() + hk2, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    encode_step(m, samples, active, t, ws.x1.data());
    lstm_step_infer(w + lay.wx1, w + lay.wh1, w + lay.b1, lay.in1, lay.h1,
                    ws.x1.data(), ws.h1.data(), ws.c1.data());
    lstm_step_infer(w + lay.wx2, w + lay.wh2, w + lay.b2, lay.h1, lay.h2,
                    ws.h1.data(), ws.h2.data(), ws.c2.data());
  }
  for (int k = 0; k < active; ++k) head_raw(m, lay, ws.h2.data(), k, raws[k]);
}

// Scratch for the f32 forward: encoded inputs and both hidden sequences.
struct InferScratch {
  std::vector<float> xseq, h1seq, h2seq;
};

// f32 lane-block forward. wf is the model's weight vector cast to float.
void infer_block_f(const LstmEstimator& m, const float* wf, const Layout& lay,
                   const FeatureSequence* const* samples, int active,
                   std::array<double, 4>* raws, InferScratch& scratch) {
  const std::size_t L = samples[0]->size();
  const float ia_mean = static_cast<float>(m.ia_mean);
  const float inv_sd = static_cast<float>(1.0 / m.ia_sd);

  scratch.xseq.resize(L * lay.in1 * kLanesF);
  scratch.h1seq.resize(L * lay.h1 * kLanesF);
  scratch.h2seq.resize(L * lay.h2 * kLanesF);

  float* xseq = scratch.xseq.data();
  for (std::size_t t = 0; t < L; ++t) {
    float ia[kLanesF];
    float* x = xseq + t * lay.in1 * kLanesF;
    for (int k = 0; k < kLanesF; ++k) {
      if (k < active) {
        const FeatureSequence& f = *samples[k];
        ia[k] = static_cast<float>(f.inter_arrivals[t]);
        x[kLanesF + k] = static_cast<float>(f.directions[t]);
      } else {
        ia[k] = 0.0f;
        x[kLanesF + k] = 0.0f;
      }
    }
    vstoref(x, (vlog1pf(vloadf(ia)) - splatf(ia_mean)) * splatf(inv_sd));
  }

  const LayerPassFn pass1 = layer_pass_for(lay.h1);
  const LayerPassFn pass2 = layer_pass_for(lay.h2);
  pass1(wf + lay.wx1, wf + lay.wh1, wf + lay.b1, lay.in1, L, xseq,
        scratch.h1seq.data());
  pass2(wf + lay.wx2, wf + lay.wh2, wf + lay.b2, lay.h1, L,
        scratch.h1seq.data(), scratch.h2seq.data());

  const float* h2last = scratch.h2seq.data() + (L - 1) * lay.h2 * kLanesF;
  const float* wy = wf + lay.wy;
  const float* by = wf + lay.by;
  for (int k = 0; k < active; ++k) {
    for (int o = 0; o < lay.out; ++o) {
      float acc = by[o];
      const float* wyr = wy + std::size_t(o) * lay.h2;
      for (int j = 0; j < lay.h2; ++j)
        acc += wyr[j] * h2last[std::size_t(j) * kLanesF + k];
      raws[k][o] = static_cast<double>(acc);
    }
  }
}

// Forward with tapes, loss, and full BPTT. Adds the *sum* of per-sample
// gradients into grad (unscaled); returns the sum of per-sample losses.
double train_block(const LstmEstimator& m, const Layout& lay,
                   const FeatureSequence* const* samples, int active,
                   const std::array<double, 4>* targets, double* grad,
                   Workspace& ws) {
  const std::size_t L = samples[0]->size();
  const double* w = m.weights.data();
  const int hk1 = lay.h1 * kLanes;
  const int hk2 = lay.h2 * kLanes;
  const int gk1 = 4 * hk1;
  const int gk2 = 4 * hk2;
  const int xk1 = lay.in1 * kLanes;

  // forward, recording every step
  std::vector<double>& zeros = ws.sg;  // zero state for t = 0
  std::fill(zeros.begin(), zeros.end(), 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    encode_step(m, samples, active, t, ws.x1.data() + t * xk1);
    const double* h1p = t == 0 ? zeros.data() : ws.h1.data() + (t - 1) * hk1;
    const double* c1p = t == 0 ? zeros.data() : ws.c1.data() + (t - 1) * hk1;
    lstm_step(w + lay.wx1, w + lay.wh1, w + lay.b1, lay.in1, lay.h1,
              ws.x1.data() + t * xk1, h1p, c1p, ws.g1.data() + t * gk1,
              ws.c1.data() + t * hk1, ws.tc1.data() + t * hk1,
              ws.h1.data() + t * hk1);
    const double* h2p = t == 0 ? zeros.data() : ws.h2.data() + (t - 1) * hk2;
    const double* c2p = t == 0 ? zeros.data() : ws.c2.data() + (t - 1) * hk2;
    lstm_step(w + lay.wx2, w + lay.wh2, w + lay.b2, lay.h1, lay.h2,
              ws.h1.data() + t * hk1, h2p, c2p, ws.g2.data() + t * gk2,
              ws.c2.data() + t * hk2, ws.tc2.data() + t * hk2,
              ws.h2.data() + t * hk2);
  }

  // head loss and its gradient; inactive lanes stay exactly zero
  double loss_sum = 0.0;
  std::vector<double>& dh2 = ws.sb;  // [h2][K]
  std::fill(dh2.begin(), dh2.begin() + hk2, 0.0);
  const double* h2last = ws.h2.data() + (L - 1) * hk2;
  {
    std::array<double, 4> raw;
    std::array<double, 4> dy;
    for (int k = 0; k < active; ++k) {
      head_raw(m, lay, h2last, k, raw);
      for (int o = 0; o < 4; ++o) {
        const double pred = softplus(raw[o]);
        const double err = pred - targets[k][o];
        loss_sum += 0.25 * err * err;
        dy[o] = 0.5 * err * sigmoid(raw[o]);
      }
      double* dwy = grad + lay.wy;
      double* dby = grad + lay.by;
      for (int o = 0; o < 4; ++o) {
        dby[o] += dy[o];
        double* dwyr = dwy + std::size_t(o) * lay.h2;
        const double* wyr = w + lay.wy + std::size_t(o) * lay.h2;
        for (int j = 0; j < lay.h2; ++j) {
          dwyr[j] += dy[o] * h2last[std::size_t(j) * kLanes + k];
          dh2[std::size_t(j) * kLanes + k] += wyr[j] * dy[o];
        }
      }
    }
  }

  // BPTT, both layers in one descending sweep
  std::vector<double>& dc2 = ws.sc;
  std::vector<double>& dx2 = ws.sd;      // layer 2 input grads = dh for layer 1
  std::vector<double>& dh1 = ws.sf;
  std::vector<double>& dc1 = ws.sh;
  std::vector<double>& dpre = ws.sa;
  std::vector<double>& dhprev = ws.se;
  std::fill(dc2.begin(), dc2.begin() + hk2, 0.0);
  std::fill(dh1.begin(), dh1.begin() + hk1, 0.0);
  std::fill(dc1.begin(), dc1.begin() + hk1, 0.0);

  for (std::size_t ti = L; ti-- > 0;) {
    const double* h2p = ti == 0 ? zeros.data() : ws.h2.data() + (ti - 1) * hk2;
    const double* c2p = ti == 0 ? zeros.data() : ws.c2.data() + (ti - 1) * hk2;
    lstm_step_backward(w + lay.wx2, w + lay.wh2, lay.h1, lay.h2,
                       ws.h1.data() + ti * hk1, h2p, c2p,
                       ws.g2.data() + ti * gk2, ws.tc2.data() + ti * hk2,
                       dh2.data(), dc2.data(), dpre.data(), grad + lay.wx2,
                       grad + lay.wh2, grad + lay.b2, dx2.data(),
                       dhprev.data());
    std::memcpy(dh2.data(), dhprev.data(), sizeof(double) * hk2);

    for (int u = 0; u < hk1; ++u) dh1[u] += dx2[u];
    const double* h1p = ti == 0 ? zeros.data() : ws.h1.data() + (ti - 1) * hk1;
    const double* c1p = ti == 0 ? zeros.data() : ws.c1.data() + (ti - 1) * hk1;
    lstm_step_backward(w + lay.wx1, w + lay.wh1, lay.in1, lay.h1,
                       ws.x1.data() + ti * xk1, h1p, c1p,
                       ws.g1.data() + ti * gk1, ws.tc1.data() + ti * hk1,
                       dh1.data(), dc1.data(), dpre.data(), grad + lay.wx1,
                       grad + lay.wh1, grad + lay.b1, nullptr, dhprev.data());
    std::memcpy(dh1.data(), dhprev.data(), sizeof(double) * hk1);
  }
  return loss_sum;
}

void check_same_length(const std::vector<const FeatureSequence*>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const std::size_t L = batch[0]->size();
  if (L < 1) throw std::invalid_argument("empty sequence");
  for (const auto* f : batch)
    if (f->size() != L)
      throw std::invalid_argument("sequences must share one length");
}

// Runs fn(block_index) for blocks [0, n_blocks), possibly on several threads.
template <typename Fn>
void for_each_block(std::size_t n_blocks, int threads, Fn&& fn) {
  if (threads <= 1 || n_blocks <= 1) {
    for (std::size_t i = 0; i < n_blocks; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  const int n = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(threads), n_blocks));
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (int wk = 0; wk < n; ++wk)
    pool.emplace_back([&]() {
      for (std::size_t i = next.fetch_add(1); i < n_blocks;
           i = next.fetch_add(1))
        fn(i);
    });
  for (auto& th : pool) th.join();
}

// Mean loss over the batch; mean gradient into grad (when non-null).
// Per-block partial gradients are reduced in block order, so the result is
// independent of the thread count.
double batched_loss(const LstmEstimator& model, const Layout& lay,
                    const std::vector<const FeatureSequence*>& batch,
                    const std::vector<std::array<double, 4>>& targets,
                    double* grad, int threads) {
  check_same_length(batch);
  const std::size_t n = batch.size();
  const std::size_t n_blocks = (n + kLanes - 1) / kLanes;
  const std::size_t L = batch[0]->size();

  std::vector<double> block_loss(n_blocks, 0.0);
  std::vector<std::vector<double>> block_grad;
  if (grad) block_grad.assign(n_blocks, std::vector<double>());

  auto run = [&](std::size_t bi) {
    static thread_local std::unique_ptr<Workspace> ws_local;
    if (!ws_local) ws_local = std::make_unique<Workspace>();
    Workspace& ws = *ws_local;
    const std::size_t lo = bi * kLanes;
    const int active = static_cast<int>(std::min<std::size_t>(kLanes, n - lo));
    const FeatureSequence* samples[kLanes];
    std::array<double, 4> tg[kLanes];
    for (int k = 0; k < kLanes; ++k) {
      samples[k] = batch[std::min(lo + k, n - 1)];
      tg[k] = targets[std::min(lo + k, n - 1)];
    }
    if (grad) {
      ws.reserve_train(lay, L);
      auto& g = block_grad[bi];
      g.assign(lay.total, 0.0);
      block_loss[bi] =
          train_block(model, lay, samples, active, tg, g.data(), ws);
    } else {
      ws.reserve_infer(lay);
      std::array<double, 4> raws[kLanes];
      infer_block(model, lay, samples, active, raws, ws);
      double s = 0.0;
      for (int k = 0; k < active; ++k)
        for (int o = 0; o < 4; ++o) {
          const double err = softplus(raws[k][o]) - tg[k][o];
          s += 0.25 * err * err;
        }
      block_loss[bi] = s;
    }
  };
  for_each_block(n_blocks, threads, run);

  double loss = 0.0;
  for (double l : block_loss) loss += l;
  if (grad) {
    std::fill(grad, grad + lay.total, 0.0);
    for (std::size_t bi = 0; bi < n_blocks; ++bi)
      for (std::size_t i = 0; i < lay.total; ++i) grad[i] += block_grad[bi][i];
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < lay.total; ++i) grad[i] *= inv;
  }
  return loss / static_cast<double>(n);
}

}  // namespace

std::size_t LstmEstimator::weight_count(const ModelDims& dims) {
  return Layout(dims).total;
}

LstmEstimator LstmEstimator::init(const ModelDims& dims, std::uint64_t seed) {
  check_dims(dims);
  const Layout lay(dims);
  LstmEstimator m;
  m.dims = dims;
  m.weights.assign(lay.total, 0.0);
  Rng rng(seed);

  auto uniform_block = [&rng](double* w, std::size_t n, int fan_in,
                              int fan_out) {
    const double lim = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < n; ++i) w[i] = rng.uniform(-lim, lim);
  };
  // Orthogonal rows per gate block via Gram-Schmidt on Gaussian draws.
  auto orthogonal_block = [&rng](double* w, int hid) {
    for (int gate = 0; gate < 4; ++gate) {
      double* blk = w + std::size_t(gate) * hid * hid;
      for (int r = 0; r < hid; ++r) {
        double* row = blk + std::size_t(r) * hid;
        while (true) {
          for (int j = 0; j < hid; ++j) row[j] = rng.normal();
          for (int p = 0; p < r; ++p) {
            const double* prev = blk + std::size_t(p) * hid;
            double dot = 0.0;
            for (int j = 0; j < hid; ++j) dot += row[j] * prev[j];
            for (int j = 0; j < hid; ++j) row[j] -= dot * prev[j];
          }
          double norm = 0.0;
          for (int j = 0; j < hid; ++j) norm += row[j] * row[j];
          norm = std::sqrt(norm);
          if (norm > 1e-6) {
            for (int j = 0; j < hid; ++j) row[j] /= norm;
            break;
          }
        }
      }
    }
  };

  double* w = m.weights.data();
  uniform_block(w + lay.wx1, std::size_t(4) * dims.hidden1 * dims.input,
                dims.input, dims.hidden1);
  orthogonal_block(w + lay.wh1, dims.hidden1);
  uniform_block(w + lay.wx2, std::size_t(4) * dims.hidden2 * dims.hidden1,
                dims.hidden1, dims.hidden2);
  orthogonal_block(w + lay.wh2, dims.hidden2);
  uniform_block(w + lay.wy, std::size_t(dims.output) * dims.hidden2,
                dims.hidden2, dims.output);
  // biases zero, forget gate at one to open the memory path
  for (int u = 0; u < dims.hidden1; ++u) w[lay.b1 + dims.hidden1 + u] = 1.0;
  for (int u = 0; u < dims.hidden2; ++u) w[lay.b2 + dims.hidden2 + u] = 1.0;
  return m;
}

HawkesParams head_to_params(const std::array<double, 4>& raw) {
  // Floors guard the softplus underflow corner so that any raw output maps
  // to a strictly positive, sub-critical parameter set.
  const double mu = std::max(softplus(raw[0]), 1e-12);
  const double a1 = std::max(softplus(raw[1]), 1e-12);
  const double a2 = std::max(softplus(raw[2]), 1e-12);
  const double delta =
      std::max(softplus(raw[3]), (a1 + a2) * 1.1e-6 + 1e-12);
  return HawkesParams{mu, a1, a2, a1 + a2 + delta};
}

std::array<double, 4> head_targets(const HawkesParams& p) {
  return {p.mu, p.alpha1, p.alpha2, p.beta - p.alpha1 - p.alpha2};
}

std::array<double, 4> predict_head(const LstmEstimator& model,
                                   const FeatureSequence& seq) {
  if (seq.size() < 1)
    throw std::invalid_argument("predict_head: empty sequence");
  const Layout lay(model.dims);
  Workspace ws;
  ws.reserve_infer(lay);
  const FeatureSequence* samples[kLanes] = {};
  for (int k = 0; k < kLanes; ++k) samples[k] = &seq;
  std::array<double, 4> raws[kLanes];
  infer_block(model, lay, samples, 1, raws, ws);
  for (int o = 0; o < 4; ++o) raws[0][o] = softplus(raws[0][o]);
  return raws[0];
}

HawkesParams forward(const LstmEstimator& model, const FeatureSequence& seq) {
  if (seq.size() < 1) throw std::invalid_argument("forward: empty sequence");
  const Layout lay(model.dims);
  const std::vector<float> wf(model.weights.begin(), model.weights.end());
  const FeatureSequence* samples[kLanesF] = {};
  for (int k = 0; k < kLanesF; ++k) samples[k] = &seq;
  std::array<double, 4> raws[kLanesF];
  InferScratch scratch;
  infer_block_f(model, wf.data(), lay, samples, 1, raws, scratch);
  return head_to_params(raws[0]);
}

BatchPrediction predict_batch(const LstmEstimator& model,
                              const std::vector<FeatureSequence>& seqs,
                              int threads) {
  BatchPrediction out;
  if (seqs.empty()) return out;
  std::vector<const FeatureSequence*> ptrs(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) ptrs[i] = &seqs[i];
  check_same_length(ptrs);

  const Layout lay(model.dims);
  const std::vector<float> wf(model.weights.begin(), model.weights.end());
  const std::size_t n = seqs.size();
  const std::size_t n_blocks = (n + kLanesF - 1) / kLanesF;
  out.params.resize(n);

  const auto t0 = std::chrono::steady_clock::now();
  for_each_block(n_blocks, threads, [&](std::size_t bi) {
    static thread_local std::unique_ptr<InferScratch> scratch_local;
    if (!scratch_local) scratch_local = std::make_unique<InferScratch>();
    const std::size_t lo = bi * kLanesF;
    const int active =
        static_cast<int>(std::min<std::size_t>(kLanesF, n - lo));
    const FeatureSequence* samples[kLanesF];
    for (int k = 0; k < kLanesF; ++k)
      samples[k] = ptrs[std::min(lo + k, n - 1)];
    std::array<double, 4> raws[kLanesF];
    infer_block_f(model, wf.data(), lay, samples, active, raws,
                  *scratch_local);
    for (int k = 0; k < active; ++k)
      out.params[lo + k] = head_to_params(raws[k]);
  });
  out.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  out.per_path_seconds = out.wall_time / static_cast<double>(n);
  return out;
}

double loss_and_gradient(const LstmEstimator& model,
                         const std::vector<const FeatureSequence*>& batch,
                         const std::vector<std::array<double, 4>>& targets,
                         std::vector<double>& grad_out) {
  if (batch.size() != targets.size())
    throw std::invalid_argument("batch/target size mismatch");
  const Layout lay(model.dims);
  grad_out.assign(lay.total, 0.0);
  return batched_loss(model, lay, batch, targets, grad_out.data(), 1);
}

void adam_step(std::vector<double>& weights, const std::vector<double>& grad,
               AdamState& state, const TrainConfig& cfg) {
  if (weights.size() != grad.size())
    throw std::invalid_argument("adam_step: size mismatch");
  if (state.m.empty()) {
    state.m.assign(weights.size(), 0.0);
    state.v.assign(weights.size(), 0.0);
  }
  state.beta1_t *= cfg.adam_beta1;
  state.beta2_t *= cfg.adam_beta2;
  const double corr1 = 1.0 - state.beta1_t;
  const double corr2 = 1.0 - state.beta2_t;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    state.m[i] = cfg.adam_beta1 * state.m[i] + (1.0 - cfg.adam_beta1) * grad[i];
    state.v[i] =
        cfg.adam_beta2 * state.v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
    weights[i] -= cfg.learning_rate * (state.m[i] / corr1) /
                  (std::sqrt(state.v[i] / corr2) + cfg.adam_eps);
  }
}

TrainResult train(const LabeledDataset& ds, const TrainConfig& cfg,
                  ModelDims dims) {
  ds.check();
  if (ds.size() < 2) throw std::invalid_argument("train: need >= 2 paths");
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs >= 1");
  if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 0.5))
    throw std::invalid_argument("train: validation_fraction in (0, 0.5)");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size >= 1");

  const Layout lay(dims);
  Rng rng(cfg.seed);

  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  auto shuffle = [&rng](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[rng.uniform_index(i)]);
  };
  shuffle(idx);
  const std::size_t n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(cfg.validation_fraction *
                                  static_cast<double>(ds.size())));
  const std::size_t n_train = ds.size() - n_val;
  std::vector<std::size_t> train_idx(idx.begin(), idx.begin() + n_train);
  std::vector<std::size_t> val_idx(idx.begin() + n_train, idx.end());

  // Standardization constants from the training portion.
  double sum = 0.0, sumsq = 0.0;
  std::size_t count = 0;
  for (std::size_t i : train_idx)
    for (double ia : ds.features[i].inter_arrivals) {
      const double v = std::log1p(ia);
      sum += v;
      sumsq += v * v;
      ++count;
    }
  const double mean = sum / static_cast<double>(count);
  const double var =
      std::max(sumsq / static_cast<double>(count) - mean * mean, 0.0);

  LstmEstimator model = LstmEstimator::init(dims, rng.next_u64());
  model.ia_mean = mean;
  model.ia_sd = std::max(std::sqrt(var), 1e-12);

  std::vector<std::array<double, 4>> all_targets(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i)
    all_targets[i] = head_targets(ds.targets[i]);

  std::vector<double> grad(lay.total);
  AdamState adam;

  std::vector<const FeatureSequence*> batch;
  std::vector<std::array<double, 4>> batch_targets;
  std::vector<const FeatureSequence*> val_batch;
  std::vector<std::array<double, 4>> val_targets;
  for (std::size_t i : val_idx) {
    val_batch.push_back(&ds.features[i]);
    val_targets.push_back(all_targets[i]);
  }

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(train_idx);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t at = 0; at < n_train; at += cfg.batch_size) {
      const std::size_t hi =
          std::min(n_train, at + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      batch_targets.clear();
      for (std::size_t i = at; i < hi; ++i) {
        batch.push_back(&ds.features[train_idx[i]]);
        batch_targets.push_back(all_targets[train_idx[i]]);
      }
      const double loss = batched_loss(model, lay, batch, batch_targets,
                                       grad.data(), cfg.threads);
      if (!std::isfinite(loss))
        throw NumericalError("train: loss diverged (NaN/inf) at epoch " +
                             std::to_string(epoch + 1) + ", batch " +
                             std::to_string(n_batches + 1));
      loss_sum += loss;
      ++n_batches;
      adam_step(model.weights, grad, adam, cfg);
    }
    EpochStats stats;
    stats.train_mse = loss_sum / static_cast<double>(std::max<std::size_t>(
                                     1, n_batches));
    stats.val_mse =
        batched_loss(model, lay, val_batch, val_targets, nullptr, cfg.threads);
    result.log.epochs.push_back(stats);
    if (cfg.verbose)
      std::fprintf(stderr, "epoch %d/%d train_mse=%.6f val_mse=%.6f\n",
                   epoch + 1, cfg.epochs, stats.train_mse, stats.val_mse);
  }
  result.model = std::move(model);
  return result;
}

EmpiricalTrainResult train_on_empirical(
    const std::vector<EventSequence>& segments, const TrainConfig& cfg,
    const EmpiricalTrainOptions& options, ModelDims dims) {
  if (options.empirical_fraction < 0.0 || options.empirical_fraction > 1.0)
    throw std::invalid_argument("empirical_fraction in [0, 1]");

  LabeledDataset ds;
  EmpiricalTrainResult out;

  std::size_t length = 0;
  if (!segments.empty()) length = segments.front().size();
  for (const auto& s : segments)
    if (s.size() != length)
      throw std::invalid_argument("segments must share one length");

  if (options.empirical_fraction > 0.0) {
    for (const auto& seg : segments) {
      const FitResult fit = fit_mle(seg);
      if (!fit.converged) {
        ++out.segments_skipped;
        continue;
      }
      ds.features.push_back(features_from_events(seg));
      ds.targets.push_back(fit.params);
      ++out.segments_used;
    }
    if (out.segments_used < options.min_segments)
      throw std::runtime_error(
          "train_on_empirical: only " + std::to_string(out.segments_used) +
          " usable segments (need " + std::to_string(options.min_segments) +
          ")");
    ds.length = length;
  }

  // Simulated complement.
  std::size_t n_sim = 0;
  if (options.empirical_fraction <= 0.0) {
    n_sim = options.sim_paths > 0 ? options.sim_paths
                                  : std::max<std::size_t>(segments.size(), 2);
    if (length == 0) length = 2;
  } else if (options.empirical_fraction < 1.0) {
    const double e = static_cast<double>(out.segments_used);
    n_sim = static_cast<std::size_t>(
        std::llround(e * (1.0 - options.empirical_fraction) /
                     options.empirical_fraction));
  }
  if (n_sim > 0) {
    const ParamSampler sampler =
        options.sampler ? options.sampler : default_param_sampler();
    LabeledDataset sim =
        make_dataset(n_sim, length, sampler, options.sim_seed, cfg.threads);
    if (ds.length == 0) ds.length = sim.length;
    for (std::size_t i = 0; i < sim.size(); ++i) {
      ds.features.push_back(std::move(sim.features[i]));
      ds.targets.push_back(sim.targets[i]);
    }
  }

  TrainResult tr = train(ds, cfg, dims);
  out.model = std::move(tr.model);
  out.log = std::move(tr.log);
  return out;
}

namespace {
constexpr char kModelMagic[4] = {'H', 'W', 'K', 'N'};
constexpr std::uint32_t kModelVersion = 1;
}  // namespace

void save_model(const LstmEstimator& model, const std::string& path) {
  const Layout lay(model.dims);
  if (model.weights.size() != lay.total)
    throw std::invalid_argument("save_model: weight count mismatch");
  for (double w : model.weights)
    if (!std::isfinite(w))
      throw std::invalid_argument("save_model: non-finite weight");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(kModelMagic, 4);
  auto put = [&out](const auto& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  put(kModelVersion);
  put(static_cast<std::uint32_t>(model.dims.input));
  put(static_cast<std::uint32_t>(model.dims.hidden1));
  put(static_cast<std::uint32_t>(model.dims.hidden2));
  put(static_cast<std::uint32_t>(model.dims.output));
  put(model.ia_mean);
  put(model.ia_sd);
  put(static_cast<std::uint64_t>(model.weights.size()));
  out.write(reinterpret_cast<const char*>(model.weights.data()),
            static_cast<std::streamsize>(sizeof(double) *
                                         model.weights.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

LstmEstimator load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kModelMagic, 4) != 0)
    throw std::runtime_error("not a HWKN model file: " + path);
  auto get = [&in, &path](auto& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("truncated model file: " + path);
  };
  std::uint32_t version;
  get(version);
  if (version != kModelVersion)
    throw std::runtime_error("unsupported model version " +
                             std::to_string(version) + ": " + path);
  std::uint32_t in1, h1, h2, outn;
  get(in1);
  get(h1);
  get(h2);
  get(outn);
  LstmEstimator m;
  m.dims = ModelDims{static_cast<int>(in1), static_cast<int>(h1),
                     static_cast<int>(h2), static_cast<int>(outn)};
  check_dims(m.dims);
  get(m.ia_mean);
  get(m.ia_sd);
  std::uint64_t count;
  get(count);
  const Layout lay(m.dims);
  if (count != lay.total)
    throw std::runtime_error("model shape mismatch in: " + path);
  m.weights.resize(count);
  in.read(reinterpret_cast<char*>(m.weights.data()),
          static_cast<std::streamsize>(sizeof(double) * count));
  if (!in) throw std::runtime_error("truncated model file: " + path);
  return m;
}

}  // namespace hawkes
