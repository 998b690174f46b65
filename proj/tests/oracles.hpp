// Test-side reference implementations, kept deliberately independent of the
// library's recursive evaluation paths: plain double sums and quadrature-free
// closed forms that are easy to audit and slow to run.
#pragma once

#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "hawkesnn/core.hpp"
#include "hawkesnn/rng.hpp"

namespace oracle {

// O(N) per query, O(N^2) over a path: every kernel term summed explicitly.
inline std::pair<double, double> intensity_direct(
    const hawkes::HawkesParams& p, const hawkes::EventSequence& seq,
    double t) {
  double l1 = p.mu, l2 = p.mu;
  for (const auto& e : seq.events) {
    if (e.time >= t) break;
    const double k = std::exp(-p.beta * (t - e.time));
    if (e.direction == hawkes::Direction::Up) {
      l1 += p.alpha1 * k;
      l2 += p.alpha2 * k;
    } else {
      l1 += p.alpha2 * k;
      l2 += p.alpha1 * k;
    }
  }
  return {l1, l2};
}

// O(N^2) log-likelihood: left-limit intensities by direct summation and the
// compensator term-by-term.
inline double log_likelihood_direct(const hawkes::HawkesParams& p,
                                    const hawkes::EventSequence& seq) {
  double acc = 0.0;
  for (std::size_t n = 0; n < seq.events.size(); ++n) {
    const auto& e = seq.events[n];
    double l1 = p.mu, l2 = p.mu;
    for (std::size_t m = 0; m < n; ++m) {
      const auto& prior = seq.events[m];
      const double k = std::exp(-p.beta * (e.time - prior.time));
      if (prior.direction == hawkes::Direction::Up) {
        l1 += p.alpha1 * k;
        l2 += p.alpha2 * k;
      } else {
        l1 += p.alpha2 * k;
        l2 += p.alpha1 * k;
      }
    }
    acc += std::log(e.direction == hawkes::Direction::Up ? l1 : l2);
  }
  double compensator = 2.0 * p.mu * seq.horizon;
  for (const auto& e : seq.events)
    compensator += ((p.alpha1 + p.alpha2) / p.beta) *
                   (1.0 - std::exp(-p.beta * (seq.horizon - e.time)));
  return acc - compensator;
}

// Central finite differences of a scalar function of 4 coordinates.
template <typename F>
std::array<double, 4> finite_difference4(F&& f, std::array<double, 4> x,
                                         double rel_h = 1e-6) {
  std::array<double, 4> g{};
  for (int i = 0; i < 4; ++i) {
    const double h = rel_h * std::max(1.0, std::abs(x[i]));
    auto hi = x, lo = x;
    hi[i] += h;
    lo[i] -= h;
    g[i] = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

// Random strictly-increasing marked sequence, for algebra checks only (not
// drawn from any Hawkes law).
inline hawkes::EventSequence random_sequence(hawkes::Rng& rng, std::size_t n,
                                             double mean_gap = 0.5,
                                             std::uint32_t max_mark = 4) {
  hawkes::EventSequence seq;
  double t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    t += rng.exponential(1.0 / mean_gap);
    seq.events.push_back(hawkes::MarkedEvent{
        t,
        rng.uniform01() < 0.5 ? hawkes::Direction::Up
                              : hawkes::Direction::Down,
        static_cast<std::uint32_t>(1 + rng.uniform_index(max_mark))});
  }
  seq.horizon = t + rng.exponential(1.0 / mean_gap);
  return seq;
}

inline hawkes::HawkesParams random_stationary_params(hawkes::Rng& rng) {
  const double mu = rng.uniform(0.05, 1.0);
  const double beta = rng.uniform(0.5, 3.0);
  const double n = rng.uniform(0.05, 0.95);
  const double c = rng.uniform(0.0, 1.0);
  return hawkes::HawkesParams{mu, std::max(c * n * beta, 1e-4),
                              std::max((1.0 - c) * n * beta, 1e-4), beta};
}

}  // namespace oracle
