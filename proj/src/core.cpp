#include "hawkesnn/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hawkes {

double branching_ratio(const HawkesParams& params) {
  return (params.alpha1 + params.alpha2) / params.beta;
}

ValidationReport validate(const HawkesParams& p) {
  ValidationReport report;
  auto fail = [&report](const std::string& msg) {
    report.violations.push_back(msg);
  };
  if (!(p.mu > 0.0) || !std::isfinite(p.mu)) fail("mu <= 0");
  if (!(p.beta > 0.0) || !std::isfinite(p.beta)) fail("beta <= 0");
  if (p.alpha1 < 0.0 || !std::isfinite(p.alpha1)) fail("alpha1 < 0");
  if (p.alpha2 < 0.0 || !std::isfinite(p.alpha2)) fail("alpha2 < 0");
  if (report.ok() && branching_ratio(p) >= 1.0 - kStabilityMargin)
    fail("branching ratio >= 1");
  return report;
}

void EventSequence::check() const {
  double prev = -1.0;
  for (const auto& e : events) {
    if (!(e.time >= 0.0) || !std::isfinite(e.time))
      throw std::invalid_argument("event time negative or non-finite");
    if (e.time <= prev)
      throw std::invalid_argument("event times not strictly increasing");
    if (e.direction != Direction::Up && e.direction != Direction::Down)
      throw std::invalid_argument("direction outside {1,2}");
    if (e.mark < 1) throw std::invalid_argument("mark < 1");
    prev = e.time;
  }
  if (!events.empty() && horizon < events.back().time)
    throw std::invalid_argument("horizon shorter than last event");
}

std::size_t EventSequence::count(Direction d) const {
  return static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(),
                    [d](const MarkedEvent& e) { return e.direction == d; }));
}

void IntensityState::advance(double beta, double to) {
  const double decay = std::exp(-beta * (to - t));
  excitation1 *= decay;
  excitation2 *= decay;
  t = to;
}

std::pair<double, double> intensity_at(const HawkesParams& params,
                                       const EventSequence& seq, double t) {
  IntensityState state;
  for (const auto& e : seq.events) {
    if (e.time >= t) break;  // left limit: event at exactly t excluded
    state.advance(params.beta, e.time);
    state.add_event(e.direction);
  }
  state.advance(params.beta, t);
  return {state.lambda1(params), state.lambda2(params)};
}

void write_events_csv(const EventSequence& seq, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "time,direction,mark\n";
  char buf[64];
  for (const auto& e : seq.events) {
    std::snprintf(buf, sizeof(buf), "%.9f", e.time);
    out << buf << ',' << static_cast<int>(e.direction) << ',' << e.mark
        << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

EventSequence read_events_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty event file: " + path);
  if (line.rfind("time", 0) != 0)
    throw std::runtime_error("missing 'time,direction,mark' header: " + path);

  EventSequence seq;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string t_str, d_str, m_str;
    if (!std::getline(ss, t_str, ',') || !std::getline(ss, d_str, ',') ||
        !std::getline(ss, m_str, ','))
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected time,direction,mark");
    MarkedEvent e;
    e.time = std::stod(t_str);
    const int d = std::stoi(d_str);
    if (d != 1 && d != 2)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": direction must be 1 or 2");
    e.direction = static_cast<Direction>(d);
    const long mark = std::stol(m_str);
    if (mark < 1)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": mark must be >= 1");
    e.mark = static_cast<std::uint32_t>(mark);
    seq.events.push_back(e);
  }
  seq.horizon = seq.events.empty() ? 0.0 : seq.events.back().time;
  seq.check();
  return seq;
}

}  // namespace hawkes
