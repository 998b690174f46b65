#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hawkes {

// Numerical breakdown (diverging loss, impossible moment values) as opposed
// to malformed input; callers may map the two to different exit codes.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Stability margin on the branching condition. Keeps the (beta - alpha)
// inverses in the moment formulas well-conditioned.
inline constexpr double kStabilityMargin = 1e-6;

// Parameters of the symmetric bivariate Hawkes model: base intensity mu,
// self-excitation jump alpha1, cross-excitation jump alpha2, decay beta.
// All rates are per second.
struct HawkesParams {
  double mu = 0.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double beta = 0.0;

  bool operator==(const HawkesParams&) const = default;
};

// Expected direct offspring per event: (alpha1 + alpha2) / beta, the
// spectral radius of the kernel integral for the symmetric 2x2 kernel.
double branching_ratio(const HawkesParams& params);

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// mu and beta must be strictly positive; alphas may sit at the Poisson
// boundary 0; branching ratio must stay below 1 - kStabilityMargin.
ValidationReport validate(const HawkesParams& params);

enum class Direction : std::uint8_t { Up = 1, Down = 2 };

inline Direction other(Direction d) {
  return d == Direction::Up ? Direction::Down : Direction::Up;
}

// One filtered price move: seconds from window start, up/down, size in ticks.
struct MarkedEvent {
  double time = 0.0;
  Direction direction = Direction::Up;
  std::uint32_t mark = 1;

  bool operator==(const MarkedEvent&) const = default;
};

// Ordered marked events on [0, horizon]. Times are strictly increasing;
// producers perturb ties before construction.
struct EventSequence {
  std::vector<MarkedEvent> events;
  double horizon = 0.0;

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }

  // Throws std::invalid_argument on ordering/horizon/mark violations.
  void check() const;

  std::size_t count(Direction d) const;
};

// First and second moments of the mark distribution per direction.
struct MarkMoments {
  double z1_mean = 1.0;
  double z2_mean = 1.0;
  double z1_sq = 1.0;
  double z2_sq = 1.0;

  bool valid() const {
    return z1_mean >= 1.0 && z2_mean >= 1.0 &&
           z1_sq >= z1_mean * z1_mean && z2_sq >= z2_mean * z2_mean;
  }
};

inline MarkMoments unit_marks() { return MarkMoments{}; }

// Running state of the two intensities. excitation_i is the decayed
// exponential-kernel sum of component i's past events, so
//   lambda1 = mu + alpha1*excitation1 + alpha2*excitation2
//   lambda2 = mu + alpha2*excitation1 + alpha1*excitation2.
struct IntensityState {
  double excitation1 = 0.0;
  double excitation2 = 0.0;
  double t = 0.0;

  // Decays both kernel sums forward to time `to` (>= t).
  void advance(double beta, double to);

  // Registers an event at the current time (call advance first).
  void add_event(Direction d) {
    (d == Direction::Up ? excitation1 : excitation2) += 1.0;
  }

  double lambda1(const HawkesParams& p) const {
    return p.mu + p.alpha1 * excitation1 + p.alpha2 * excitation2;
  }
  double lambda2(const HawkesParams& p) const {
    return p.mu + p.alpha2 * excitation1 + p.alpha1 * excitation2;
  }
};

// Intensities (lambda1, lambda2) at time t under the left-limit convention:
// events at exactly t are excluded. Marks never enter. O(#events before t).
std::pair<double, double> intensity_at(const HawkesParams& params,
                                       const EventSequence& seq, double t);

// Event CSV: header "time,direction,mark", time printed with 9 decimals.
void write_events_csv(const EventSequence& seq, const std::string& path);
EventSequence read_events_csv(const std::string& path);

}  // namespace hawkes
