#pragma once

#include <array>
#include <vector>

#include "hawkesnn/core.hpp"

namespace hawkes {

// 252 trading days of 6.5 hours.
inline constexpr double kSecondsPerTradingYear = 252.0 * 6.5 * 3600.0;

struct VolConfig {
  double tick_size = 0.01;       // currency units per tick
  double horizon_t = 1.0;        // seconds over which variance accrues
  double annualization = kSecondsPerTradingYear;
};

using Vec2 = std::array<double, 2>;
using Mat2 = std::array<std::array<double, 2>, 2>;

// Stationary mean intensity (beta - alpha)^{-1} beta mu; entries equal by
// symmetry. Requires a stationary parameter set.
Vec2 mean_intensity(const HawkesParams& params);

// Stationary second moment
//   E[ll^T] = (beta - alpha)^{-1} (alpha Dg(E[l]) alpha / 2 + beta mu E[l]^T);
// symmetric to fp accuracy under the symmetric kernel (asserted).
Mat2 second_moment(const HawkesParams& params);

struct MomentSet {
  Vec2 e_lambda;
  Mat2 e_lambda_outer;
  Mat2 b;
};

// The covariance block
//   B = { Zbar^T o E[ll^T] + Dg(E[l]) (alpha o Zbar)^T
//         - Dg(Zbar) E[l] E[l]^T } (beta - alpha)^{-1}
// with Zbar the row-constant mark-mean matrix and Dg(Zbar) the diagonal of
// per-direction mark means. Vanishes identically in the Poisson case.
Mat2 b_matrix(const HawkesParams& params, const MarkMoments& moments);

MomentSet moment_set(const HawkesParams& params, const MarkMoments& moments);

// Variance growth rate per second of the net movement N1 - N2 in ticks:
//   u^T [ T{Zbar o B} + Zbar2 o Dg(E[l]) ] u,  u = (1, -1).
// Throws std::runtime_error if the radicand turns negative.
double net_variance_rate(const HawkesParams& params,
                         const MarkMoments& moments);

// SD of net price movement over cfg.horizon_t seconds, in currency units
// (tick counts scaled by tick size).
double hawkes_volatility(const HawkesParams& params, const MarkMoments& moments,
                         const VolConfig& cfg);

// Same variance rate accrued over one trading year instead of horizon_t.
double hawkes_volatility_annualized(const HawkesParams& params,
                                    const MarkMoments& moments,
                                    const VolConfig& cfg);

// Sample mean of mark and mark^2 per direction. Errors if a direction has
// no events.
MarkMoments estimate_mark_moments(const EventSequence& seq);

// sqrt of summed squared log returns on an already-sampled price grid,
// annualized by scaling the window to one year. window_seconds is the span
// the samples cover. Errors on non-positive prices or < 2 samples.
double realized_volatility(const std::vector<double>& prices,
                           double window_seconds, const VolConfig& cfg);

}  // namespace hawkes
