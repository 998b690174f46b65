#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hawkesnn/core.hpp"
#include "hawkesnn/dataset.hpp"
#include "hawkesnn/simulate.hpp"

namespace hawkes {

// Two stacked LSTM layers (first returns the full sequence, second only its
// last hidden vector) followed by a dense head of four units. The head is
// read through softplus as (mu, alpha1, alpha2, beta - alpha1 - alpha2),
// which keeps every prediction strictly positive and sub-critical.
struct ModelDims {
  int input = 2;
  int hidden1 = 12;
  int hidden2 = 12;
  int output = 4;

  bool operator==(const ModelDims&) const = default;
};

struct LstmEstimator {
  ModelDims dims;
  std::vector<double> weights;  // flat, layout owned by the kernels
  // Standardization of the inter-arrival channel: log1p(ia) centered and
  // scaled by constants measured on the training set. Directions pass
  // through as 1/2 verbatim.
  double ia_mean = 0.0;
  double ia_sd = 1.0;

  static std::size_t weight_count(const ModelDims& dims);

  // Orthogonal recurrent blocks, scaled-uniform input blocks, zero biases
  // with the forget gate at 1.
  static LstmEstimator init(const ModelDims& dims, std::uint64_t seed);
};

// Maps the four raw head outputs to parameters. Tiny floors keep the result
// valid even for adversarial weights where softplus underflows to zero.
HawkesParams head_to_params(const std::array<double, 4>& raw);

// Loss coordinates: (mu, alpha1, alpha2, beta - alpha1 - alpha2).
std::array<double, 4> head_targets(const HawkesParams& params);

HawkesParams forward(const LstmEstimator& model, const FeatureSequence& seq);

// Head output in loss coordinates (softplus applied) along the
// double-precision training path; this is what the MSE loss compares
// against targets. forward()/predict_batch() run a faster single-precision
// evaluation of the same network.
std::array<double, 4> predict_head(const LstmEstimator& model,
                                   const FeatureSequence& seq);

struct BatchPrediction {
  std::vector<HawkesParams> params;
  double wall_time = 0.0;       // seconds, whole batch
  double per_path_seconds = 0.0;
};

// Lane-vectorized forward passes; identical per-path arithmetic to
// forward(), so a batch of one reproduces it bit-exactly.
BatchPrediction predict_batch(const LstmEstimator& model,
                              const std::vector<FeatureSequence>& seqs,
                              int threads = 1);

// Mean over the batch of the per-sample MSE in head coordinates, plus its
// exact gradient with respect to every weight (full-length BPTT).
// Targets are in head coordinates (see head_targets).
double loss_and_gradient(const LstmEstimator& model,
                         const std::vector<const FeatureSequence*>& batch,
                         const std::vector<std::array<double, 4>>& targets,
                         std::vector<double>& grad_out);

struct TrainConfig {
  int epochs = 300;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  int threads = 1;
  bool verbose = false;  // one line per epoch on stderr
};

struct EpochStats {
  double train_mse = 0.0;  // running mean of minibatch losses
  double val_mse = 0.0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
};

struct TrainResult {
  LstmEstimator model;
  TrainLog log;
};

// Adam optimizer state; moments sized on first step.
struct AdamState {
  std::vector<double> m, v;
  double beta1_t = 1.0;
  double beta2_t = 1.0;
};

// One Adam update in place. A zero gradient on fresh state is a no-op.
void adam_step(std::vector<double>& weights, const std::vector<double>& grad,
               AdamState& state, const TrainConfig& cfg);

// Adam over shuffled minibatches. Deterministic for a fixed seed (the
// gradient is reduced in fixed-size chunks in index order, so the result
// is also independent of the thread count). Throws on NaN loss.
TrainResult train(const LabeledDataset& dataset, const TrainConfig& cfg,
                  ModelDims dims = ModelDims{});

struct EmpiricalTrainOptions {
  // Fraction of the final training set that comes from the MLE-labeled
  // segments; the remainder is simulated from `sampler`. Zero reduces to
  // train() on a purely simulated dataset of `sim_paths` paths.
  double empirical_fraction = 1.0;
  std::size_t sim_paths = 0;
  ParamSampler sampler;  // defaults to default_param_sampler()
  std::uint64_t sim_seed = 1;
  std::size_t min_segments = 10;
};

struct EmpiricalTrainResult {
  LstmEstimator model;
  TrainLog log;
  std::size_t segments_used = 0;
  std::size_t segments_skipped = 0;  // non-converged MLE fits
};

// Fits every segment by MLE, keeps the converged ones as targets, optionally
// mixes in simulated paths, then trains as usual.
EmpiricalTrainResult train_on_empirical(const std::vector<EventSequence>& segments,
                                        const TrainConfig& cfg,
                                        const EmpiricalTrainOptions& options,
                                        ModelDims dims = ModelDims{});

// Binary container, little-endian: magic "HWKN", version u32, the four
// layer dims as u32, standardization constants, u64 weight count, weights.
void save_model(const LstmEstimator& model, const std::string& path);
LstmEstimator load_model(const std::string& path);

}  // namespace hawkes
