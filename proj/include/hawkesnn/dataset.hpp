#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hawkesnn/core.hpp"

namespace hawkes {

// One training example: a length-L path as (inter-arrival, direction) pairs.
struct FeatureSequence {
  std::vector<double> inter_arrivals;
  std::vector<Direction> directions;

  std::size_t size() const { return inter_arrivals.size(); }
};

// Paths paired with the parameters that generated them (or, for empirical
// training, their maximum likelihood estimates).
struct LabeledDataset {
  std::vector<FeatureSequence> features;
  std::vector<HawkesParams> targets;
  std::size_t length = 0;  // L, shared by every sequence

  std::size_t size() const { return features.size(); }

  // Throws std::invalid_argument on shape or target violations.
  void check() const;
};

// Extracts (inter-arrival, direction) features from an event sequence; the
// first inter-arrival is measured from window start.
FeatureSequence features_from_events(const EventSequence& seq);

// Binary container, little-endian:
//   magic "HWKD", version u32, n_paths u64, L u64,
//   then per path: L f64 inter-arrivals, L u8 directions,
//   4 f64 targets (mu, alpha1, alpha2, beta).
void write_dataset(const LabeledDataset& dataset, const std::string& path);
LabeledDataset read_dataset(const std::string& path);

// Debug CSV export: <stem>.features.csv (path,step,inter_arrival,direction)
// and <stem>.targets.csv (path,mu,alpha1,alpha2,beta).
void export_dataset_csv(const LabeledDataset& dataset,
                        const std::string& stem);

}  // namespace hawkes
