#pragma once

#include <array>
#include <optional>

#include "hawkesnn/core.hpp"

namespace hawkes {

struct FitResult {
  HawkesParams params;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  double wall_time = 0.0;          // seconds
  double grad_inf_norm = 0.0;      // in the unconstrained coordinates
};

// Exact log-likelihood
//   L = sum_i [ sum_{events of type i} log lambda_i(tau-) - int_0^T lambda_i ]
// with the compensator in closed form and the kernel sums carried by the
// O(N) exponential recursion. Left limits throughout; marks never enter.
double log_likelihood(const HawkesParams& params, const EventSequence& seq);

// Exact dL/d(mu, alpha1, alpha2, beta) via carried recursions.
std::array<double, 4> log_likelihood_grad(const HawkesParams& params,
                                          const EventSequence& seq);

// Evaluates both in one pass; cheaper than calling them separately.
double log_likelihood_with_grad(const HawkesParams& params,
                                const EventSequence& seq,
                                std::array<double, 4>& grad);

struct FitOptions {
  double grad_tolerance = 1e-6;  // infinity norm, unconstrained coordinates
  int max_iterations = 500;
};

// Maximizes the likelihood over the open feasible set by BFGS with
// backtracking line search in unconstrained coordinates: mu, alpha1, alpha2
// and beta - alpha1 - alpha2 each run through softplus, which keeps the
// branching ratio below one at every iterate. Needs >= 10 events.
// Non-convergence is reported, never thrown: the best iterate is returned
// with converged=false.
FitResult fit_mle(const EventSequence& seq,
                  std::optional<HawkesParams> init = std::nullopt,
                  const FitOptions& options = FitOptions{});

// Default initial guess when no init is given: mu = 0.5 * N / (2T),
// branching 0.5 split evenly, beta = 1.
HawkesParams auto_init(const EventSequence& seq);

}  // namespace hawkes
