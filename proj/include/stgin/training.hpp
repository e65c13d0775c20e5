#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "stgin/autodiff.hpp"
#include "stgin/data.hpp"
#include "stgin/model.hpp"

namespace stgin::train {

/// How the Gaussian NLL is aggregated over the k observed entries.
enum class NllAggregation { mean, sum };

/// Which observed entries are hidden from the network input during a training
/// step (they become the loss targets).
enum class HideMode {
  entries,  // independent entries, like the random regime
  sensors,  // whole sensor rows of a window, like the non-random regime
};

const char* to_string(NllAggregation a);
NllAggregation parse_aggregation(const std::string& s);
const char* to_string(HideMode m);
HideMode parse_hide_mode(const std::string& s);

struct TrainingConfig {
  double lambda = 0.5;
  double learning_rate = 1e-3;
  std::size_t max_epochs = 200;
  std::size_t window = 48;
  std::uint64_t seed = 0;
  std::size_t patience = 20;
  std::optional<double> clip_norm = 5.0;
  NllAggregation nll = NllAggregation::mean;
  // Fraction of observed entries (or sensors) hidden per step. 0 trains on
  // every observed entry with nothing hidden.
  double hide_rate = 0.2;
  HideMode hide_mode = HideMode::entries;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double reconstruction = 0.0;
  double regularization = 0.0;
  double combined = 0.0;
};

struct TrainReport {
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
  double wall_seconds = 0.0;
};

// Losses on plain fields -------------------------------------------------------

/// Mean squared error of μ̂ over the observed entries of `mask`.
double reconstruction_loss(const model::GaussianField& field, const Tensor2D& x, const Mask& mask);

/// Σ ½ ln(2π σ̂²) + (x − μ̂)² / (2σ̂²) over observed entries, or its mean.
double nll_loss(const model::GaussianField& field, const Tensor2D& x, const Mask& mask,
                NllAggregation aggregation = NllAggregation::mean);

/// λ · recon + (1 − λ) · reg
double combined_loss(double reconstruction, double regularization, double lambda);

// Losses on a tape -------------------------------------------------------------

struct LossVars {
  ad::Var reconstruction;
  ad::Var regularization;
  ad::Var combined;
};

LossVars record_losses(ad::Tape& tape, const model::FieldVars& field, const Tensor2D& x,
                       const Mask& mask, double lambda, NllAggregation aggregation);

struct LossValues {
  double reconstruction = 0.0;
  double regularization = 0.0;
  double combined = 0.0;
};

/// One forward pass of the model on `input`, scored against `target` on
/// `target_mask`. With `with_gradients` the gradients are accumulated into the
/// parameters.
LossValues evaluate_losses(model::ModelParams& params, const Tensor2D& input, const Tensor2D& target,
                           const Mask& target_mask, const model::GraphTensors& graph, double lambda,
                           NllAggregation aggregation, bool with_gradients);

// Optimization -----------------------------------------------------------------

/// Adam on the combined loss. `data.values` holds (normalized) readings and
/// `data.observed` marks entries available for training; everything else is
/// zeroed before it reaches the network. Parameters are updated in place and
/// end at the best epoch seen.
TrainReport train(model::ModelParams& params, const TrafficTensor& data, const SensorGraph& graph,
                  const TrainingConfig& config);

// Gradient check ---------------------------------------------------------------

struct GradCheckSpec {
  std::size_t nodes = 5;
  std::size_t steps = 8;
  std::uint64_t seed = 0;
  double missing_rate = 0.3;
  double lambda = 0.5;
  NllAggregation nll = NllAggregation::mean;
  double h = 1e-5;
};

/// Random instance (graph from random planar positions, readings in [0,1],
/// random mask), parameters from `config` and the seed; compares the analytic
/// gradient of the combined loss with central differences.
ad::GradCheckResult model_gradient_check(const model::ModelConfig& config, const GradCheckSpec& spec);

/// "epoch,reconstruction,regularization,combined" rows.
void write_report_csv(const std::filesystem::path& path, const TrainReport& report);

}  // namespace stgin::train
