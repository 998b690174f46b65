#include "hawkesnn/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace hawkes {

std::uint32_t MarkLaw::draw(Rng& rng) const {
  switch (kind) {
    case Kind::Constant:
      return constant;
    case Kind::Geometric: {
      // Inverse CDF on {1,2,...}.
      const double u = rng.uniform01();
      const double k = std::ceil(std::log(u) / std::log1p(-p));
      return k < 1.0 ? 1u : static_cast<std::uint32_t>(k);
    }
  }
  return 1;
}

EventSequence simulate(const SimConfig& config) {
  const auto report = validate(config.params);
  if (!report.ok()) {
    std::string msg = "simulate: invalid parameters:";
    for (const auto& v : report.violations) msg += " " + v;
    throw std::invalid_argument(msg);
  }
  const HawkesParams& p = config.params;
  Rng rng(config.seed);

  const bool by_count = std::holds_alternative<StopAtCount>(config.stop);
  const double horizon =
      by_count ? 0.0 : std::get<StopAtHorizon>(config.stop).horizon;
  const std::size_t target =
      by_count ? std::get<StopAtCount>(config.stop).count : 0;
  if (by_count) {
    if (target < 1) throw std::invalid_argument("simulate: count must be >= 1");
  } else if (!(horizon > 0.0)) {
    throw std::invalid_argument("simulate: horizon must be > 0");
  }

  EventSequence seq;
  if (by_count) seq.events.reserve(target);

  IntensityState state;
  double t = 0.0;
  while (true) {
    // Upper bound: total intensity immediately after the last move; it can
    // only decay until the next event.
    const double bound = state.lambda1(p) + state.lambda2(p);
    double cand = t + rng.exponential(bound);
    if (cand <= t) cand = std::nextafter(t, 1e308);  // strict ordering
    if (!by_count && cand > horizon) break;

    state.advance(p.beta, cand);
    const double l1 = state.lambda1(p);
    const double l2 = state.lambda2(p);
    const double u = rng.uniform01() * bound;
    t = cand;
    if (u <= l1 + l2) {
      const Direction d = u <= l1 ? Direction::Up : Direction::Down;
      state.add_event(d);
      const std::uint32_t mark =
          (d == Direction::Up ? config.mark_law_up : config.mark_law_down)
              .draw(rng);
      seq.events.push_back(MarkedEvent{cand, d, mark});
      if (by_count && seq.events.size() == target) break;
    }
  }
  seq.horizon = by_count ? (seq.events.empty() ? 0.0 : seq.events.back().time)
                         : horizon;
  return seq;
}

ParamSampler param_sampler(const SamplerRanges& r) {
  return [r](Rng& rng) {
    const double mu = rng.uniform(r.mu_lo, r.mu_hi);
    const double beta = rng.uniform(r.beta_lo, r.beta_hi);
    const double n = rng.uniform(r.branching_lo, r.branching_hi);
    const double c = rng.uniform(0.0, 1.0);
    HawkesParams p;
    p.mu = mu;
    p.beta = beta;
    p.alpha1 = std::max(c * n * beta, r.alpha_floor);
    p.alpha2 = std::max((1.0 - c) * n * beta, r.alpha_floor);
    return p;
  };
}

ParamSampler default_param_sampler() { return param_sampler(SamplerRanges{}); }

LabeledDataset make_dataset(std::size_t n_paths, std::size_t length,
                            const ParamSampler& sampler, std::uint64_t seed,
                            int threads) {
  if (n_paths < 1) throw std::invalid_argument("make_dataset: n_paths >= 1");
  if (length < 2) throw std::invalid_argument("make_dataset: L >= 2");

  LabeledDataset d;
  d.length = length;
  d.features.resize(n_paths);
  d.targets.resize(n_paths);

  auto build_path = [&](std::size_t i) {
    Rng rng = Rng::for_stream(seed, i);
    HawkesParams params;
    bool ok = false;
    for (int attempt = 0; attempt < 100; ++attempt) {
      params = sampler(rng);
      if (validate(params).ok()) {
        ok = true;
        break;
      }
    }
    if (!ok)
      throw std::runtime_error(
          "make_dataset: sampler failed to produce valid parameters");
    SimConfig cfg;
    cfg.params = params;
    cfg.stop = StopAtCount{length};
    cfg.seed = rng.next_u64();
    d.features[i] = features_from_events(simulate(cfg));
    d.targets[i] = params;
  };

  if (threads <= 1 || n_paths < 2) {
    for (std::size_t i = 0; i < n_paths; ++i) build_path(i);
  } else {
    // Per-path RNG streams make every slot independent of scheduling.
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    const int n_threads = std::min<std::size_t>(threads, n_paths);
    for (int w = 0; w < n_threads; ++w) {
      pool.emplace_back([&]() {
        for (std::size_t i = next.fetch_add(1); i < n_paths;
             i = next.fetch_add(1))
          build_path(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  return d;
}

}  // namespace hawkes
