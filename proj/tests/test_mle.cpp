#include "hawkesnn/mle.hpp"

#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "hawkesnn/simulate.hpp"
#include "oracles.hpp"

using namespace hawkes;

namespace {
const HawkesParams kStudyParams{0.3, 0.4, 0.7, 1.5};

EventSequence study_path(std::size_t n, std::uint64_t seed) {
  SimConfig cfg;
  cfg.params = kStudyParams;
  cfg.stop = StopAtCount{n};
  cfg.seed = seed;
  return simulate(cfg);
}
}  // namespace

TEST_CASE("Poisson closed form") {
  Rng rng(8101);
  const auto seq = oracle::random_sequence(rng, 200);
  const HawkesParams p{0.7, 0.0, 0.0, 1.3};
  const double n1 = static_cast<double>(seq.count(Direction::Up));
  const double n2 = static_cast<double>(seq.count(Direction::Down));
  const double expected =
      (n1 + n2) * std::log(0.7) - 2.0 * 0.7 * seq.horizon;
  CHECK(log_likelihood(p, seq) == doctest::Approx(expected).epsilon(1e-12));

  const auto grad = log_likelihood_grad(p, seq);
  CHECK(grad[0] ==
        doctest::Approx((n1 + n2) / 0.7 - 2.0 * seq.horizon).epsilon(1e-12));
}

TEST_CASE("recursion equals the direct double sum") {
  Rng rng(8102);
  for (int rep = 0; rep < 30; ++rep) {
    const auto params = oracle::random_stationary_params(rng);
    const auto seq = oracle::random_sequence(rng, 10 + rng.uniform_index(190));
    const double fast = log_likelihood(params, seq);
    const double slow = oracle::log_likelihood_direct(params, seq);
    CHECK(std::abs(fast - slow) <= 1e-10 * std::max(1.0, std::abs(slow)));
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  Rng rng(8103);
  for (int rep = 0; rep < 25; ++rep) {
    const auto params = oracle::random_stationary_params(rng);
    const auto seq = oracle::random_sequence(rng, 30 + rng.uniform_index(120));
    const auto analytic = log_likelihood_grad(params, seq);
    const auto fd = oracle::finite_difference4(
        [&seq](const std::array<double, 4>& x) {
          return log_likelihood(HawkesParams{x[0], x[1], x[2], x[3]}, seq);
        },
        {params.mu, params.alpha1, params.alpha2, params.beta});
    for (int i = 0; i < 4; ++i)
      CHECK(std::abs(analytic[i] - fd[i]) <=
            1e-6 * std::max(1.0, std::abs(fd[i])));
  }
}

TEST_CASE("log-likelihood ignores marks") {
  Rng rng(8104);
  const auto params = oracle::random_stationary_params(rng);
  auto seq = oracle::random_sequence(rng, 150);
  const double before = log_likelihood(params, seq);
  for (auto& e : seq.events) e.mark = 1 + (e.mark * 11) % 7;
  CHECK(log_likelihood(params, seq) == before);
}

TEST_CASE("likelihood peaks near the truth on a simulated path") {
  const auto seq = study_path(2000, 8105);
  const double at_truth = log_likelihood(kStudyParams, seq);
  const double fields[4] = {kStudyParams.mu, kStudyParams.alpha1,
                            kStudyParams.alpha2, kStudyParams.beta};
  for (int i = 0; i < 4; ++i) {
    for (double scale : {0.5, 1.5}) {
      double v[4] = {fields[0], fields[1], fields[2], fields[3]};
      v[i] *= scale;
      const HawkesParams perturbed{v[0], v[1], v[2], v[3]};
      CHECK(log_likelihood(perturbed, seq) < at_truth);
    }
  }
}

TEST_CASE("fit from the truth recovers the truth") {
  const auto seq = study_path(2000, 8106);
  const auto fit = fit_mle(seq, kStudyParams);
  CHECK(fit.converged);
  CHECK(validate(fit.params).ok());
  CHECK(fit.grad_inf_norm <= 1e-6);
  // Within five sampling SDs of the L=2000 estimator.
  CHECK(std::abs(fit.params.mu - 0.3) < 5 * 0.0314);
  CHECK(std::abs(fit.params.alpha1 - 0.4) < 5 * 0.0500);
  CHECK(std::abs(fit.params.alpha2 - 0.7) < 5 * 0.0608);
  CHECK(std::abs(fit.params.beta - 1.5) < 5 * 0.1145);
  CHECK(fit.loglik == doctest::Approx(log_likelihood(fit.params, seq)));
}

TEST_CASE("auto-initialized fits converge") {
  int converged = 0;
  const int total = 20;
  for (int rep = 0; rep < total; ++rep) {
    const auto seq = study_path(2000, 8200 + rep);
    const auto fit = fit_mle(seq);
    if (fit.converged) ++converged;
    CHECK(validate(fit.params).ok());
    CHECK(branching_ratio(fit.params) < 1.0);
  }
  CHECK(converged >= static_cast<int>(0.95 * total));
}

TEST_CASE("degenerate Poisson path drives the alphas to the boundary") {
  SimConfig cfg;
  cfg.params = HawkesParams{0.5, 0.0, 0.0, 1.5};
  cfg.stop = StopAtCount{2000};
  cfg.seed = 8107;
  const auto seq = simulate(cfg);
  const double T = seq.horizon;
  const double n = static_cast<double>(seq.size());
  const double poisson_max = n * std::log(n / (2.0 * T)) - n;
  const auto fit = fit_mle(seq);
  CHECK(validate(fit.params).ok());
  CHECK(fit.loglik >= poisson_max - 1e-3);
  CHECK(fit.loglik <= poisson_max + 2.0);  // two boundary parameters
  CHECK(branching_ratio(fit.params) < 1.0);
}

TEST_CASE("fit_mle requires at least 10 events") {
  Rng rng(8108);
  const auto seq = oracle::random_sequence(rng, 5);
  CHECK_THROWS_AS(fit_mle(seq), std::invalid_argument);
}
