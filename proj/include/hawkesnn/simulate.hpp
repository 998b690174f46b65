#pragma once

#include <cstdint>
#include <functional>
#include <variant>

#include "hawkesnn/core.hpp"
#include "hawkesnn/dataset.hpp"
#include "hawkesnn/rng.hpp"

namespace hawkes {

// Jump-size law, drawn i.i.d. per event independent of history. Marks never
// feed back into the intensity; they only matter for volatility.
struct MarkLaw {
  enum class Kind { Constant, Geometric };
  Kind kind = Kind::Constant;
  std::uint32_t constant = 1;  // Constant: every mark equals this
  double p = 0.5;              // Geometric on {1,2,...}: P(k) = p(1-p)^(k-1)

  std::uint32_t draw(Rng& rng) const;

  static MarkLaw unit() { return MarkLaw{}; }
  static MarkLaw geometric(double p) {
    return MarkLaw{Kind::Geometric, 1, p};
  }
};

struct StopAtHorizon {
  double horizon = 0.0;
};
struct StopAtCount {
  std::size_t count = 0;
};

struct SimConfig {
  HawkesParams params;
  std::variant<StopAtHorizon, StopAtCount> stop = StopAtHorizon{1.0};
  MarkLaw mark_law_up = MarkLaw::unit();
  MarkLaw mark_law_down = MarkLaw::unit();
  std::uint64_t seed = 0;
};

// Exact simulation by Ogata's modified thinning. The proposal bound is the
// current total intensity, valid because the exponential kernel only decays
// between events. Left-limit convention throughout.
// Throws std::invalid_argument on non-stationary or otherwise invalid params.
EventSequence simulate(const SimConfig& config);

// Draws one admissible parameter set per call.
using ParamSampler = std::function<HawkesParams(Rng&)>;

struct SamplerRanges {
  double mu_lo = 0.05, mu_hi = 1.0;
  double beta_lo = 0.5, beta_hi = 3.0;
  double branching_lo = 0.05, branching_hi = 0.95;
  double alpha_floor = 1e-4;
};

// mu ~ U[0.05,1], beta ~ U[0.5,3], branching n ~ U[0.05,0.95], split
// c ~ U[0,1]; alpha1 = c*n*beta, alpha2 = (1-c)*n*beta, floored away from
// the zero boundary. Every draw is stationary by construction.
ParamSampler default_param_sampler();
ParamSampler param_sampler(const SamplerRanges& ranges);

// n_paths independent paths of exactly L events each, fresh parameter draw
// per path, per-path RNG streams split from `seed`. Features hold
// (inter-arrival, direction) with the first inter-arrival measured from
// window start. Stable path order regardless of thread count.
LabeledDataset make_dataset(std::size_t n_paths, std::size_t length,
                            const ParamSampler& sampler, std::uint64_t seed,
                            int threads = 1);

}  // namespace hawkes
