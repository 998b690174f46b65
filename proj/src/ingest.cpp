#include "hawkesnn/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hawkes {

void TickSeries::check() const {
  double prev = -1.0;
  for (const auto& r : records) {
    if (!(r.timestamp >= 0.0) || !std::isfinite(r.timestamp))
      throw std::invalid_argument("quote timestamp negative or non-finite");
    if (r.timestamp < prev)
      throw std::invalid_argument("quote timestamps decrease");
    if (!(r.bid > 0.0) || !(r.ask >= r.bid))
      throw std::invalid_argument("quote requires 0 < bid <= ask");
    prev = r.timestamp;
  }
}

void MidPriceFilter::observe(double grid_t, std::vector<MarkedEvent>& out,
                             std::vector<std::string>& warnings) {
  grid_time_ = grid_t;
  if (current_mid_ == observed_mid_) return;

  const double delta = current_mid_ - observed_mid_;
  const double ticks = std::abs(delta) / cfg_.tick_size;
  long mark = std::lround(ticks);
  if (std::abs(ticks - static_cast<double>(mark)) > 0.25) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "mid change of %.6g at t=%.9f is %.3f ticks away from an "
                  "integer multiple; check --tick-size",
                  delta, mid_change_time_, ticks - static_cast<double>(mark));
    warnings.emplace_back(buf);
  }
  if (mark < 1) mark = 1;

  double t_evt = mid_change_time_;
  if (t_evt <= last_event_time_) t_evt = last_event_time_ + 1e-9;

  out.push_back(MarkedEvent{t_evt,
                            delta > 0.0 ? Direction::Up : Direction::Down,
                            static_cast<std::uint32_t>(mark)});
  observed_mid_ = current_mid_;
  last_event_time_ = t_evt;
}

void MidPriceFilter::push(const TickRecord& rec, std::vector<MarkedEvent>& out,
                          std::vector<std::string>& warnings) {
  if (!(rec.bid > 0.0) || !(rec.ask >= rec.bid))
    throw std::invalid_argument("quote requires 0 < bid <= ask");
  const double mid = 0.5 * (rec.bid + rec.ask);

  if (!started_) {
    started_ = true;
    start_time_ = rec.timestamp;
    prev_record_time_ = rec.timestamp;
    current_mid_ = mid;
    mid_change_time_ = rec.timestamp;
    observed_mid_ = mid;  // baseline observation at the first grid point
    grid_index_ = 1;
    grid_time_ = rec.timestamp;
    mid_history_.emplace_back(rec.timestamp, mid);
    return;
  }
  if (rec.timestamp < prev_record_time_)
    throw std::invalid_argument("quote timestamps decrease");
  prev_record_time_ = rec.timestamp;

  // Grid points strictly before this record see the pre-record state.
  double g = start_time_ + static_cast<double>(grid_index_) * cfg_.dt;
  while (g < rec.timestamp) {
    observe(g, out, warnings);
    ++grid_index_;
    g = start_time_ + static_cast<double>(grid_index_) * cfg_.dt;
  }

  if (mid != current_mid_) {
    current_mid_ = mid;
    mid_change_time_ = rec.timestamp;
    mid_history_.emplace_back(rec.timestamp, mid);
  }

  // A grid point landing exactly on the record includes it.
  while (g <= rec.timestamp) {
    observe(g, out, warnings);
    ++grid_index_;
    g = start_time_ + static_cast<double>(grid_index_) * cfg_.dt;
  }
}

double MidPriceFilter::mid_at(double t) const {
  if (mid_history_.empty() || t < mid_history_.front().first) return 0.0;
  auto it = std::upper_bound(
      mid_history_.begin(), mid_history_.end(), t,
      [](double v, const std::pair<double, double>& e) { return v < e.first; });
  return std::prev(it)->second;
}

IngestResult filter_events(const TickSeries& ticks, const IngestConfig& cfg) {
  if (!(cfg.dt > 0.0) || !(cfg.tick_size > 0.0))
    throw std::invalid_argument("filter_events: dt and tick_size must be > 0");
  if (ticks.records.empty())
    throw std::invalid_argument("filter_events: need at least one record");
  ticks.check();

  MidPriceFilter filter(cfg);
  IngestResult result;
  for (const auto& rec : ticks.records)
    filter.push(rec, result.events.events, result.warnings);
  result.events.horizon = std::max(
      filter.last_grid_time(),
      result.events.empty() ? 0.0 : result.events.events.back().time);
  result.events.check();
  return result;
}

std::vector<Window> window_segments(const EventSequence& seq, std::size_t L,
                                    std::size_t stride) {
  if (L < 2) throw std::invalid_argument("window_segments: L >= 2");
  if (stride < 1) throw std::invalid_argument("window_segments: stride >= 1");
  std::vector<Window> windows;
  const std::size_t n = seq.size();
  if (n < L) return windows;
  for (std::size_t s = 0; s + L <= n; s += stride) {
    const double base = s > 0 ? seq.events[s - 1].time : 0.0;
    Window w;
    w.events.events.reserve(L);
    for (std::size_t i = s; i < s + L; ++i) {
      MarkedEvent e = seq.events[i];
      e.time -= base;
      w.events.events.push_back(e);
    }
    w.events.horizon = w.events.events.back().time;
    w.end_wall_time = seq.events[s + L - 1].time;
    windows.push_back(std::move(w));
  }
  return windows;
}

TickSeries synthesize_quotes(const EventSequence& seq, double p0,
                             double tick_size) {
  if (!(p0 > 0.0) || !(tick_size > 0.0))
    throw std::invalid_argument("synthesize_quotes: p0, tick_size > 0");
  TickSeries ticks;
  ticks.records.reserve(seq.size() + 2);
  double price = p0;
  ticks.records.push_back(TickRecord{0.0, price - tick_size, price + tick_size});
  for (const auto& e : seq.events) {
    if (e.time <= 0.0)
      throw std::invalid_argument("synthesize_quotes: events must start > 0");
    const double move = static_cast<double>(e.mark) * tick_size;
    price += e.direction == Direction::Up ? move : -move;
    if (!(price > tick_size))
      throw std::runtime_error("synthesize_quotes: price crossed zero");
    ticks.records.push_back(
        TickRecord{e.time, price - tick_size, price + tick_size});
  }
  const double t_end =
      std::max(seq.horizon, seq.empty() ? 0.0 : seq.events.back().time) + 1.0;
  ticks.records.push_back(TickRecord{t_end, price - tick_size, price + tick_size});
  return ticks;
}

void write_quotes_csv(const TickSeries& ticks, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "timestamp,bid,ask\n";
  char buf[128];
  for (const auto& r : ticks.records) {
    std::snprintf(buf, sizeof(buf), "%.9f,%.9f,%.9f", r.timestamp, r.bid,
                  r.ask);
    out << buf << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

TickSeries read_quotes_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty quote file: " + path);
  if (line.rfind("timestamp", 0) != 0)
    throw std::runtime_error("missing 'timestamp,bid,ask' header: " + path);
  TickSeries ticks;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string t, b, a;
    if (!std::getline(ss, t, ',') || !std::getline(ss, b, ',') ||
        !std::getline(ss, a, ','))
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected timestamp,bid,ask");
    ticks.records.push_back(
        TickRecord{std::stod(t), std::stod(b), std::stod(a)});
  }
  ticks.check();
  return ticks;
}

}  // namespace hawkes
