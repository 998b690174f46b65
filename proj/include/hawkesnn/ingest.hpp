#pragma once

#include <string>
#include <vector>

#include "hawkesnn/core.hpp"

namespace hawkes {

// Raw quote record: seconds since session open, best bid/ask.
struct TickRecord {
  double timestamp = 0.0;
  double bid = 0.0;
  double ask = 0.0;
};

struct TickSeries {
  std::vector<TickRecord> records;

  // Throws std::invalid_argument on ordering or bid/ask violations.
  void check() const;
};

struct IngestConfig {
  double dt = 0.1;         // mid-price sampling interval, seconds
  double tick_size = 0.01; // price units per tick
};

struct IngestResult {
  EventSequence events;
  std::vector<std::string> warnings;
};

// Grid-samples the mid-price every cfg.dt seconds starting at the first
// record and emits one event per observed change. The event carries the
// exact time of the quote change that set the new mid (the last one inside
// the interval), the direction of the move, and |dmid| / tick_size rounded
// to the nearest integer with a floor of one. Sub-interval round trips are
// filtered out. Equal consecutive event times are perturbed by +1 ns.
IngestResult filter_events(const TickSeries& ticks, const IngestConfig& cfg);

// Incremental version of filter_events for streaming consumption.
class MidPriceFilter {
 public:
  explicit MidPriceFilter(const IngestConfig& cfg) : cfg_(cfg) {}

  // Feeds one record; appends any newly completed events to `out` and
  // warning messages to `warnings`. Records must arrive in time order.
  void push(const TickRecord& rec, std::vector<MarkedEvent>& out,
            std::vector<std::string>& warnings);

  // Mid prevailing at time t (last change at or before t); 0 before data.
  double mid_at(double t) const;

  double last_grid_time() const { return grid_time_; }

 private:
  void observe(double grid_t, std::vector<MarkedEvent>& out,
               std::vector<std::string>& warnings);

  IngestConfig cfg_;
  bool started_ = false;
  double start_time_ = 0.0;
  long grid_index_ = 0;
  double grid_time_ = 0.0;
  double current_mid_ = 0.0;
  double mid_change_time_ = 0.0;
  double observed_mid_ = 0.0;
  double last_event_time_ = -1.0;
  double prev_record_time_ = 0.0;
  std::vector<std::pair<double, double>> mid_history_;  // (change time, mid)
};

struct Window {
  EventSequence events;   // re-based so the previous event sits at time 0
  double end_wall_time;   // original time of the window's last event
};

// Overlapping windows of exactly L events advancing by `stride` events.
// Returns an empty list when the sequence is shorter than L.
std::vector<Window> window_segments(const EventSequence& seq, std::size_t L,
                                    std::size_t stride);

// Builds the quote series a given event sequence would produce: one quote
// per event (price moving by mark * tick per event around p0) plus opening
// and closing quotes, spread fixed at one tick each side.
TickSeries synthesize_quotes(const EventSequence& seq, double p0,
                             double tick_size);

// Quote CSV: header "timestamp,bid,ask", 9-decimal timestamps.
void write_quotes_csv(const TickSeries& ticks, const std::string& path);
TickSeries read_quotes_csv(const std::string& path);

}  // namespace hawkes
