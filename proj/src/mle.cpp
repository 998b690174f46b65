#include "hawkesnn/mle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace hawkes {

namespace {

struct PassResult {
  double loglik;
  std::array<double, 4> grad;
};

// Single O(N) pass: kernel sums S_i, their beta-sensitivities
// P_i = sum (t - tau_m) e^{-beta (t - tau_m)}, event log terms, and the
// closed-form compensator with its derivatives.
PassResult likelihood_pass(const HawkesParams& p, const EventSequence& seq,
                           bool want_grad) {
  const double T = seq.horizon;
  const double mu = p.mu, a1 = p.alpha1, a2 = p.alpha2, beta = p.beta;

  double s1 = 0.0, s2 = 0.0;    // kernel sums, left limit
  double q1 = 0.0, q2 = 0.0;    // P_i recursions (= -dS_i/dbeta)
  double prev = 0.0;

  double event_sum = 0.0;
  double g_mu = 0.0, g_a1 = 0.0, g_a2 = 0.0, g_beta = 0.0;
  double comp_tail = 0.0;       // sum (1 - e^{-beta (T - tau)})
  double comp_tail_dbeta = 0.0; // sum (T - tau) e^{-beta (T - tau)}

  for (const auto& e : seq.events) {
    const double dt = e.time - prev;
    const double decay = std::exp(-beta * dt);
    q1 = decay * (q1 + dt * s1);
    q2 = decay * (q2 + dt * s2);
    s1 *= decay;
    s2 *= decay;
    prev = e.time;

    const bool up = e.direction == Direction::Up;
    const double s_self = up ? s1 : s2;
    const double s_cross = up ? s2 : s1;
    const double q_self = up ? q1 : q2;
    const double q_cross = up ? q2 : q1;
    const double lambda = mu + a1 * s_self + a2 * s_cross;
    event_sum += std::log(lambda);
    if (want_grad) {
      const double inv = 1.0 / lambda;
      g_mu += inv;
      g_a1 += inv * s_self;
      g_a2 += inv * s_cross;
      g_beta -= inv * (a1 * q_self + a2 * q_cross);
    }

    const double tail = std::exp(-beta * (T - e.time));
    comp_tail += 1.0 - tail;
    if (want_grad) comp_tail_dbeta += (T - e.time) * tail;

    if (up)
      s1 += 1.0;
    else
      s2 += 1.0;
  }

  const double asum = a1 + a2;
  const double compensator = 2.0 * mu * T + (asum / beta) * comp_tail;

  PassResult r;
  r.loglik = event_sum - compensator;
  r.grad = {0.0, 0.0, 0.0, 0.0};
  if (want_grad) {
    r.grad[0] = g_mu - 2.0 * T;
    r.grad[1] = g_a1 - comp_tail / beta;
    r.grad[2] = g_a2 - comp_tail / beta;
    r.grad[3] = g_beta -
                asum * (comp_tail_dbeta / beta - comp_tail / (beta * beta));
  }
  return r;
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_inverse(double y) {
  return y > 1.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

// Unconstrained coordinates: (mu, alpha1, alpha2, beta - alpha1 - alpha2)
// through softplus. Any point of R^4 maps to a stationary parameter set.
HawkesParams decode(const std::array<double, 4>& r) {
  HawkesParams p;
  p.mu = softplus(r[0]);
  p.alpha1 = softplus(r[1]);
  p.alpha2 = softplus(r[2]);
  p.beta = p.alpha1 + p.alpha2 + softplus(r[3]);
  return p;
}

std::array<double, 4> encode(const HawkesParams& p) {
  const double floor = 1e-8;
  const double mu = std::max(p.mu, floor);
  const double a1 = std::max(p.alpha1, floor);
  const double a2 = std::max(p.alpha2, floor);
  const double delta = std::max(p.beta - a1 - a2, 1e-3);
  return {softplus_inverse(mu), softplus_inverse(a1), softplus_inverse(a2),
          softplus_inverse(delta)};
}

// Chain rule through decode: dL/dr from dL/d(mu, a1, a2, beta).
std::array<double, 4> pull_back(const std::array<double, 4>& r,
                                const std::array<double, 4>& g) {
  return {g[0] * sigmoid(r[0]), (g[1] + g[3]) * sigmoid(r[1]),
          (g[2] + g[3]) * sigmoid(r[2]), g[3] * sigmoid(r[3])};
}

double inf_norm(const std::array<double, 4>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

using Mat4 = std::array<std::array<double, 4>, 4>;

Mat4 identity4() {
  Mat4 m{};
  for (int i = 0; i < 4; ++i) m[i][i] = 1.0;
  return m;
}

}  // namespace

double log_likelihood(const HawkesParams& params, const EventSequence& seq) {
  return likelihood_pass(params, seq, false).loglik;
}

std::array<double, 4> log_likelihood_grad(const HawkesParams& params,
                                          const EventSequence& seq) {
  return likelihood_pass(params, seq, true).grad;
}

double log_likelihood_with_grad(const HawkesParams& params,
                                const EventSequence& seq,
                                std::array<double, 4>& grad) {
  const PassResult r = likelihood_pass(params, seq, true);
  grad = r.grad;
  return r.loglik;
}

HawkesParams auto_init(const EventSequence& seq) {
  const double T = std::max(seq.horizon, 1e-12);
  const double n = static_cast<double>(seq.size());
  HawkesParams p;
  p.mu = std::max(0.5 * n / (2.0 * T), 1e-6);
  p.alpha1 = 0.25;
  p.alpha2 = 0.25;
  p.beta = 1.0;
  return p;
}

FitResult fit_mle(const EventSequence& seq, std::optional<HawkesParams> init,
                  const FitOptions& options) {
  if (seq.size() < 10)
    throw std::invalid_argument("fit_mle needs at least 10 events");
  const auto t0 = std::chrono::steady_clock::now();

  std::array<double, 4> r = encode(init.value_or(auto_init(seq)));

  auto eval = [&seq](const std::array<double, 4>& coords,
                     std::array<double, 4>& grad_out) {
    const HawkesParams p = decode(coords);
    std::array<double, 4> g_params;
    const double ll = log_likelihood_with_grad(p, seq, g_params);
    grad_out = pull_back(coords, g_params);
    // Minimize -L.
    for (double& g : grad_out) g = -g;
    return -ll;
  };

  std::array<double, 4> g{};
  double f = eval(r, g);

  Mat4 h = identity4();
  bool first_update = true;
  bool tried_restart = false;
  int iter = 0;
  bool converged = false;

  for (; iter < options.max_iterations; ++iter) {
    if (inf_norm(g) < options.grad_tolerance) {
      converged = true;
      break;
    }

    std::array<double, 4> dir{};
    for (int i = 0; i < 4; ++i) {
      double acc = 0.0;
      for (int j = 0; j < 4; ++j) acc += h[i][j] * g[j];
      dir[i] = -acc;
    }
    double slope = 0.0;
    for (int i = 0; i < 4; ++i) slope += dir[i] * g[i];
    if (!(slope < 0.0)) {  // lost positive definiteness; restart on steepest
      h = identity4();
      first_update = true;
      for (int i = 0; i < 4; ++i) dir[i] = -g[i];
      slope = 0.0;
      for (int i = 0; i < 4; ++i) slope += dir[i] * g[i];
      if (!(slope < 0.0)) break;  // zero gradient to fp precision
    }

    // Strong Wolfe line search (bracket + bisection zoom). The curvature
    // condition keeps s^T y > 0 so the BFGS update stays well-posed. The
    // sufficient-decrease test carries an fp-noise allowance: near the
    // optimum the true decrease falls below the rounding error of a
    // several-thousand-scale objective, and a literal Armijo test would
    // strand the iterate just above the gradient tolerance.
    constexpr double c1 = 1e-4;
    constexpr double c2 = 0.9;
    const double f_noise = 1e-12 * std::max(1.0, std::abs(f));
    std::array<double, 4> r_new{};
    std::array<double, 4> g_new{};
    double f_new = f;
    bool accepted = false;
    {
      auto probe = [&](double step, double& fs, std::array<double, 4>& gs) {
        for (int i = 0; i < 4; ++i) r_new[i] = r[i] + step * dir[i];
        fs = eval(r_new, gs);
        double d = 0.0;
        for (int i = 0; i < 4; ++i) d += gs[i] * dir[i];
        return d;  // directional derivative
      };
      auto sufficient = [&](double step, double fs) {
        return fs <= f + c1 * step * slope + f_noise;
      };
      double lo = 0.0, f_lo = f;
      double hi = -1.0, step = 1.0, f_prev = f;
      bool bracketed = false;
      for (int it = 0; it < 20 && !bracketed; ++it) {
        std::array<double, 4> gs;
        double fs;
        const double d = probe(step, fs, gs);
        if (!std::isfinite(fs) || !sufficient(step, fs) ||
            (it > 0 && fs >= f_prev + f_noise)) {
          hi = step;  // minimum bracketed in (lo, step)
          bracketed = true;
          break;
        }
        if (std::abs(d) <= -c2 * slope) {
          accepted = true;
          f_new = fs;
          g_new = gs;
          break;
        }
        if (d >= 0.0) {
          hi = lo;
          lo = step;
          f_lo = fs;
          bracketed = true;
          break;
        }
        lo = step;
        f_lo = fs;
        f_prev = fs;
        step *= 2.0;
      }
      if (!accepted && bracketed) {
        double best_step = 0.0, best_f = f;
        std::array<double, 4> best_g{};
        bool have_best = false;
        for (int it = 0; it < 40 && !accepted; ++it) {
          step = 0.5 * (lo + hi);
          std::array<double, 4> gs;
          double fs;
          const double d = probe(step, fs, gs);
          if (!std::isfinite(fs) || !sufficient(step, fs) ||
              fs >= f_lo + f_noise) {
            hi = step;
          } else {
            if (!have_best || fs < best_f) {
              best_step = step;
              best_f = fs;
              best_g = gs;
              have_best = true;
            }
            if (std::abs(d) <= -c2 * slope) {
              accepted = true;
              f_new = fs;
              g_new = gs;
              break;
            }
            if (d * (hi - lo) >= 0.0) hi = lo;
            lo = step;
            f_lo = fs;
          }
          if (std::abs(hi - lo) < 1e-14 * std::max(1.0, std::abs(lo))) break;
        }
        // Fall back to the best sufficient-decrease point seen in the zoom.
        if (!accepted && have_best) {
          accepted = true;
          for (int i = 0; i < 4; ++i) r_new[i] = r[i] + best_step * dir[i];
          f_new = best_f;
          g_new = best_g;
        }
      }
    }
    if (!accepted) {
      // One steepest-descent restart before settling for the best iterate.
      if (!tried_restart) {
        tried_restart = true;
        h = identity4();
        first_update = true;
        continue;
      }
      break;
    }

    std::array<double, 4> s{}, y{};
    double sy = 0.0, yy = 0.0, ss = 0.0;
    for (int i = 0; i < 4; ++i) {
      s[i] = r_new[i] - r[i];
      y[i] = g_new[i] - g[i];
      sy += s[i] * y[i];
      yy += y[i] * y[i];
      ss += s[i] * s[i];
    }
    r = r_new;
    f = f_new;
    g = g_new;

    if (sy > 1e-12 * std::sqrt(ss * yy) && yy > 0.0) {
      if (first_update) {
        h = identity4();
        for (int i = 0; i < 4; ++i) h[i][i] = sy / yy;
        first_update = false;
      }
      // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
      const double rho = 1.0 / sy;
      std::array<double, 4> hy{};
      for (int i = 0; i < 4; ++i) {
        double acc = 0.0;
        for (int j = 0; j < 4; ++j) acc += h[i][j] * y[j];
        hy[i] = acc;
      }
      double yhy = 0.0;
      for (int i = 0; i < 4; ++i) yhy += y[i] * hy[i];
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) +
                     rho * (1.0 + rho * yhy) * s[i] * s[j];
    }
  }

  if (!converged) converged = inf_norm(g) < options.grad_tolerance;

  FitResult result;
  result.params = decode(r);
  result.loglik = -f;
  result.iterations = iter;
  result.converged = converged;
  result.grad_inf_norm = inf_norm(g);
  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return result;
}

}  // namespace hawkes
