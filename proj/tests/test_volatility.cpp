#include "hawkesnn/volatility.hpp"

#include <cmath>

#include "doctest.h"
#include "hawkesnn/simulate.hpp"
#include "oracles.hpp"

using namespace hawkes;

namespace {
const HawkesParams kStudyParams{0.3, 0.4, 0.7, 1.5};

// Counts both directions on (burn_in, burn_in + t].
std::pair<double, double> net_counts(const EventSequence& seq, double burn_in,
                                     double t) {
  double n1 = 0.0, n2 = 0.0;
  for (const auto& e : seq.events) {
    if (e.time <= burn_in || e.time > burn_in + t) continue;
    (e.direction == Direction::Up ? n1 : n2) += 1.0;
  }
  return {n1, n2};
}
}  // namespace

TEST_CASE("mean intensity closed form") {
  const auto el = mean_intensity(kStudyParams);
  CHECK(el[0] == doctest::Approx(1.125).epsilon(1e-12));
  CHECK(el[1] == doctest::Approx(1.125).epsilon(1e-12));

  // Poisson case and linearity in mu.
  const auto poisson = mean_intensity({0.42, 0.0, 0.0, 1.5});
  CHECK(poisson[0] == doctest::Approx(0.42).epsilon(1e-12));
  auto doubled = kStudyParams;
  doubled.mu *= 2.0;
  const auto el2 = mean_intensity(doubled);
  CHECK(el2[0] == doctest::Approx(2.0 * el[0]).epsilon(1e-12));
}

TEST_CASE("second moment closed form") {
  const auto m = second_moment(kStudyParams);
  CHECK(m[0][0] == doctest::Approx(2.13046875).epsilon(1e-12));
  CHECK(m[0][1] == doctest::Approx(2.10234375).epsilon(1e-12));
  CHECK(m[1][0] == doctest::Approx(2.10234375).epsilon(1e-12));
  CHECK(m[1][1] == doctest::Approx(2.13046875).epsilon(1e-12));

  const auto poisson = second_moment({0.42, 0.0, 0.0, 1.5});
  CHECK(poisson[0][0] == doctest::Approx(0.42 * 0.42).epsilon(1e-12));
  CHECK(poisson[0][1] == doctest::Approx(0.42 * 0.42).epsilon(1e-12));
}

TEST_CASE("second moment agrees with a Monte Carlo time average") {
  SimConfig cfg;
  cfg.params = kStudyParams;
  cfg.stop = StopAtHorizon{150000.0};
  cfg.seed = 9001;
  const auto seq = simulate(cfg);

  const double burn_in = 50.0;
  const double dt = 0.5;
  IntensityState state;
  std::size_t next_event = 0;
  double s11 = 0.0, s12 = 0.0, s22 = 0.0;
  std::size_t samples = 0;
  for (double t = burn_in; t < seq.horizon; t += dt) {
    while (next_event < seq.size() && seq.events[next_event].time < t) {
      state.advance(kStudyParams.beta, seq.events[next_event].time);
      state.add_event(seq.events[next_event].direction);
      ++next_event;
    }
    IntensityState probe = state;
    probe.advance(kStudyParams.beta, t);
    const double l1 = probe.lambda1(kStudyParams);
    const double l2 = probe.lambda2(kStudyParams);
    s11 += l1 * l1;
    s12 += l1 * l2;
    s22 += l2 * l2;
    ++samples;
  }
  const auto m = second_moment(kStudyParams);
  const double n = static_cast<double>(samples);
  CHECK(s11 / n == doctest::Approx(m[0][0]).epsilon(0.02));
  CHECK(s12 / n == doctest::Approx(m[0][1]).epsilon(0.02));
  CHECK(s22 / n == doctest::Approx(m[1][1]).epsilon(0.02));
}

TEST_CASE("B matrix") {
  // Poisson: the three terms cancel exactly for any marks.
  const MarkMoments marks{2.0, 3.0, 5.0, 11.0};
  const auto zero = b_matrix({0.42, 0.0, 0.0, 1.5}, marks);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(zero[i][j] == doctest::Approx(0.0));

  const auto b = b_matrix(kStudyParams, unit_marks());
  CHECK(b[0][0] == doctest::Approx(3.587890625).epsilon(1e-12));
  CHECK(b[0][1] == doctest::Approx(3.759765625).epsilon(1e-12));
  CHECK(b[1][0] == doctest::Approx(3.759765625).epsilon(1e-12));
  CHECK(b[1][1] == doctest::Approx(3.587890625).epsilon(1e-12));
}

TEST_CASE("B is affine in the mark means") {
  // Doubling Zbar doubles B when the intensity moments are held fixed;
  // with unit second moments that is exactly scaling the mean entries.
  const MarkMoments unit = unit_marks();
  MarkMoments doubled = unit;
  doubled.z1_mean = 2.0;
  doubled.z2_mean = 2.0;
  doubled.z1_sq = 4.0;
  doubled.z2_sq = 4.0;
  const auto b1 = b_matrix(kStudyParams, unit);
  const auto b2 = b_matrix(kStudyParams, doubled);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(b2[i][j] == doctest::Approx(2.0 * b1[i][j]).epsilon(1e-12));
}

TEST_CASE("volatility closed form") {
  // Poisson reduction: Var(N1 - N2) = (E[Z1^2] + E[Z2^2]) mu t.
  VolConfig cfg;
  cfg.tick_size = 1.0;
  cfg.horizon_t = 1.0;
  const double poisson =
      hawkes_volatility({0.3, 0.0, 0.0, 1.5}, unit_marks(), cfg);
  CHECK(std::abs(poisson - std::sqrt(0.6)) <= 1e-12);

  // Fixed point: variance rate 1.5625 per second, SD(t=100) = 12.5 in ticks.
  CHECK(net_variance_rate(kStudyParams, unit_marks()) ==
        doctest::Approx(1.5625).epsilon(1e-12));
  cfg.horizon_t = 100.0;
  CHECK(hawkes_volatility(kStudyParams, unit_marks(), cfg) ==
        doctest::Approx(12.5).epsilon(1e-12));

  // Price units scale linearly with the tick size.
  cfg.tick_size = 0.02;
  CHECK(hawkes_volatility(kStudyParams, unit_marks(), cfg) ==
        doctest::Approx(0.02 * 12.5).epsilon(1e-12));
}

TEST_CASE("closed form matches the simulated SD of net movements") {
  const double t = 50.0, burn_in = 30.0;
  const int n_paths = 4000;
  std::vector<double> net(n_paths);
  for (int i = 0; i < n_paths; ++i) {
    SimConfig cfg;
    cfg.params = kStudyParams;
    cfg.stop = StopAtHorizon{burn_in + t};
    cfg.seed = 20000 + i;
    const auto seq = simulate(cfg);
    const auto [n1, n2] = net_counts(seq, burn_in, t);
    net[i] = n1 - n2;
  }
  double mean = 0.0;
  for (double v : net) mean += v;
  mean /= n_paths;
  double var = 0.0;
  for (double v : net) var += (v - mean) * (v - mean);
  var /= n_paths - 1;
  const double expected = std::sqrt(net_variance_rate(kStudyParams,
                                                      unit_marks()) * t);
  CHECK(std::sqrt(var) == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("closed form tracks Monte Carlo across random parameter sets") {
  Rng rng(9005);
  for (int set = 0; set < 6; ++set) {
    const auto params = oracle::random_stationary_params(rng);
    const double t = 100.0;
    // burn-in of ~15 relaxation times for a stationary start
    const double burn_in =
        std::min(120.0, 15.0 / (params.beta * (1.0 - branching_ratio(params))));
    const int n_paths = 4000;
    std::vector<double> net(n_paths);
    for (int i = 0; i < n_paths; ++i) {
      SimConfig cfg;
      cfg.params = params;
      cfg.stop = StopAtHorizon{burn_in + t};
      cfg.seed = rng.next_u64();
      const auto seq = simulate(cfg);
      const auto [n1, n2] = net_counts(seq, burn_in, t);
      net[i] = n1 - n2;
    }
    double mean = 0.0;
    for (double v : net) mean += v;
    mean /= n_paths;
    double var = 0.0;
    for (double v : net) var += (v - mean) * (v - mean);
    var /= n_paths - 1;
    const double empirical = std::sqrt(var);
    const double closed =
        std::sqrt(net_variance_rate(params, unit_marks()) * t);
    CAPTURE(params.mu);
    CAPTURE(params.alpha1);
    CAPTURE(params.alpha2);
    CAPTURE(params.beta);
    CHECK(std::abs(closed - empirical) / empirical <= 0.05);
  }
}

TEST_CASE("volatility is increasing in mu") {
  VolConfig cfg;
  double prev = 0.0;
  for (double mu = 0.05; mu <= 1.0; mu += 0.05) {
    HawkesParams p = kStudyParams;
    p.mu = mu;
    const double v = hawkes_volatility(p, unit_marks(), cfg);
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("radicand stays non-negative across the sampled hull") {
  Rng rng(9002);
  const auto sampler = default_param_sampler();
  for (int i = 0; i < 10000; ++i) {
    const auto p = sampler(rng);
    CHECK(net_variance_rate(p, unit_marks()) >= 0.0);
  }
}

TEST_CASE("mark moment estimation") {
  EventSequence seq;
  seq.events = {MarkedEvent{1.0, Direction::Up, 1},
                MarkedEvent{2.0, Direction::Down, 2},
                MarkedEvent{3.0, Direction::Up, 3}};
  seq.horizon = 4.0;
  const auto m = estimate_mark_moments(seq);
  CHECK(m.z1_mean == doctest::Approx(2.0));
  CHECK(m.z1_sq == doctest::Approx(5.0));
  CHECK(m.z2_mean == doctest::Approx(2.0));
  CHECK(m.z2_sq == doctest::Approx(4.0));

  EventSequence all_up;
  all_up.events = {MarkedEvent{1.0, Direction::Up, 1}};
  all_up.horizon = 2.0;
  CHECK_THROWS(estimate_mark_moments(all_up));

  // Jensen: z_sq >= z_mean^2 on random sequences.
  Rng rng(9003);
  for (int rep = 0; rep < 50; ++rep) {
    const auto s = oracle::random_sequence(rng, 40, 0.5, 6);
    if (s.count(Direction::Up) == 0 || s.count(Direction::Down) == 0) continue;
    const auto mm = estimate_mark_moments(s);
    CHECK(mm.z1_sq >= mm.z1_mean * mm.z1_mean - 1e-12);
    CHECK(mm.z2_sq >= mm.z2_mean * mm.z2_mean - 1e-12);
  }
}

TEST_CASE("realized volatility") {
  VolConfig cfg;
  CHECK(realized_volatility({100.0, 100.0, 100.0}, 3600.0, cfg) == 0.0);

  cfg.annualization = 22932000.0;
  const double rv =
      realized_volatility({100.0, 100.0 * std::exp(0.001)}, 3600.0, cfg);
  CHECK(rv == doctest::Approx(0.001 * std::sqrt(22932000.0 / 3600.0))
                  .epsilon(1e-12));

  CHECK_THROWS(realized_volatility({100.0}, 3600.0, cfg));
  CHECK_THROWS(realized_volatility({100.0, -1.0}, 3600.0, cfg));
}

TEST_CASE("realized volatility tracks the closed form on simulated prices") {
  SimConfig sim;
  sim.params = kStudyParams;
  sim.stop = StopAtHorizon{7200.0};
  sim.seed = 9004;
  const auto seq = simulate(sim);

  // Price path: one tick up/down per mark, sampled on the 1 s grid.
  const double tick = 0.01, p0 = 100.0;
  std::vector<double> prices;
  double price = p0;
  std::size_t next = 0;
  for (double t = 0.0; t <= 7200.0; t += 1.0) {
    while (next < seq.size() && seq.events[next].time <= t) {
      const auto& e = seq.events[next];
      price += (e.direction == Direction::Up ? 1.0 : -1.0) *
               tick * static_cast<double>(e.mark);
      ++next;
    }
    prices.push_back(price);
  }

  VolConfig cfg;
  cfg.tick_size = tick;
  const double rv = realized_volatility(prices, 7200.0, cfg);
  const double hv =
      hawkes_volatility_annualized(kStudyParams, unit_marks(), cfg) / p0;
  CHECK(std::abs(rv - hv) / hv <= 0.25);
}
