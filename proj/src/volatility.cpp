#include "hawkesnn/volatility.hpp"

#include <cmath>
#include <stdexcept>

namespace hawkes {

namespace {

void require_stationary(const HawkesParams& p, const char* where) {
  const auto report = validate(p);
  if (!report.ok()) {
    std::string msg = std::string(where) + ": invalid parameters:";
    for (const auto& v : report.violations) msg += " " + v;
    throw std::invalid_argument(msg);
  }
}

Mat2 alpha_matrix(const HawkesParams& p) {
  return {{{p.alpha1, p.alpha2}, {p.alpha2, p.alpha1}}};
}

// (beta I - alpha)^{-1}; well-conditioned whenever branching < 1.
Mat2 resolvent(const HawkesParams& p) {
  const double d = p.beta - p.alpha1;
  const double o = p.alpha2;
  const double det = d * d - o * o;
  return {{{d / det, o / det}, {o / det, d / det}}};
}

Mat2 matmul(const Mat2& a, const Mat2& b) {
  Mat2 r{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
  return r;
}

}  // namespace

Vec2 mean_intensity(const HawkesParams& p) {
  require_stationary(p, "mean_intensity");
  const Mat2 inv = resolvent(p);
  const double bm = p.beta * p.mu;
  return {bm * (inv[0][0] + inv[0][1]), bm * (inv[1][0] + inv[1][1])};
}

Mat2 second_moment(const HawkesParams& p) {
  require_stationary(p, "second_moment");
  const Vec2 el = mean_intensity(p);
  const Mat2 a = alpha_matrix(p);

  // alpha Dg(E[l]) alpha / 2
  Mat2 rhs{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      rhs[i][j] = 0.5 * (a[i][0] * el[0] * a[0][j] + a[i][1] * el[1] * a[1][j]);
  // + beta mu E[l]^T
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) rhs[i][j] += p.beta * p.mu * el[j];

  const Mat2 m = matmul(resolvent(p), rhs);
  if (std::abs(m[0][1] - m[1][0]) >
      1e-10 * std::max(1.0, std::abs(m[0][1])))
    throw std::runtime_error("second_moment: symmetry violated");
  return m;
}

Mat2 b_matrix(const HawkesParams& p, const MarkMoments& z) {
  require_stationary(p, "b_matrix");
  if (!z.valid()) throw std::invalid_argument("b_matrix: invalid mark moments");

  const Vec2 el = mean_intensity(p);
  const Mat2 m2 = second_moment(p);
  const Mat2 a = alpha_matrix(p);
  const double zm[2] = {z.z1_mean, z.z2_mean};

  // Zbar[r][c] = E[Z_c], so Zbar^T has constant rows E[Z_r].
  Mat2 inner{};
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c)
      inner[r][c] = zm[r] * m2[r][c]          // Zbar^T o E[ll^T]
                    + el[r] * a[c][r] * zm[r]  // Dg(E[l]) (alpha o Zbar)^T
                    - zm[r] * el[r] * el[c];   // Dg(Zbar) E[l] E[l]^T
  return matmul(inner, resolvent(p));
}

MomentSet moment_set(const HawkesParams& p, const MarkMoments& z) {
  return MomentSet{mean_intensity(p), second_moment(p), b_matrix(p, z)};
}

double net_variance_rate(const HawkesParams& p, const MarkMoments& z) {
  const Vec2 el = mean_intensity(p);
  const Mat2 b = b_matrix(p, z);
  const double zm[2] = {z.z1_mean, z.z2_mean};
  const double zs[2] = {z.z1_sq, z.z2_sq};

  // inner = T{Zbar o B} + Zbar2 o Dg(E[l]); Zbar o B scales column c by E[Z_c].
  Mat2 inner{};
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c)
      inner[r][c] = zm[c] * b[r][c] + zm[r] * b[c][r];
  for (int i = 0; i < 2; ++i) inner[i][i] += zs[i] * el[i];

  const double rate = inner[0][0] - inner[0][1] - inner[1][0] + inner[1][1];
  if (rate < 0.0)
    throw NumericalError("net_variance_rate: negative variance rate");
  return rate;
}

double hawkes_volatility(const HawkesParams& p, const MarkMoments& z,
                         const VolConfig& cfg) {
  return cfg.tick_size * std::sqrt(net_variance_rate(p, z) * cfg.horizon_t);
}

double hawkes_volatility_annualized(const HawkesParams& p,
                                    const MarkMoments& z,
                                    const VolConfig& cfg) {
  return cfg.tick_size * std::sqrt(net_variance_rate(p, z) * cfg.annualization);
}

MarkMoments estimate_mark_moments(const EventSequence& seq) {
  double sum[2] = {0.0, 0.0}, sumsq[2] = {0.0, 0.0};
  std::size_t n[2] = {0, 0};
  for (const auto& e : seq.events) {
    const int i = e.direction == Direction::Up ? 0 : 1;
    const double m = static_cast<double>(e.mark);
    sum[i] += m;
    sumsq[i] += m * m;
    ++n[i];
  }
  if (n[0] == 0 || n[1] == 0)
    throw std::runtime_error(
        "estimate_mark_moments: need at least one event per direction");
  return MarkMoments{sum[0] / n[0], sum[1] / n[1], sumsq[0] / n[0],
                     sumsq[1] / n[1]};
}

double realized_volatility(const std::vector<double>& prices,
                           double window_seconds, const VolConfig& cfg) {
  if (prices.size() < 2)
    throw std::invalid_argument("realized_volatility: need >= 2 samples");
  if (!(window_seconds > 0.0))
    throw std::invalid_argument("realized_volatility: window must be > 0");
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < prices.size(); ++k) {
    if (!(prices[k] > 0.0) || !(prices[k + 1] > 0.0))
      throw std::invalid_argument("realized_volatility: non-positive price");
    const double r = std::log(prices[k + 1] / prices[k]);
    acc += r * r;
  }
  return std::sqrt(acc * cfg.annualization / window_seconds);
}

}  // namespace hawkes
