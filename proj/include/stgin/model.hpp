#pragma once

// The imputation network: one graph-attention layer per time step, one
// bidirectional GRU running along time for every sensor (weights shared
// across sensors), and two affine heads giving a Gaussian mean and variance
// per sensor per step.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stgin/autodiff.hpp"
#include "stgin/data.hpp"
#include "stgin/graph.hpp"
#include "stgin/tensor.hpp"

namespace stgin::model {

/// Full network, or one of the two ablations.
enum class Variant {
  full,           // GAT -> BiGRU -> heads
  spatial_only,   // per-step graph convolution -> heads
  temporal_only,  // raw features -> BiGRU -> heads
};

enum class Activation { elu, tanh, identity };

const char* to_string(Variant v);
Variant parse_variant(const std::string& s);
const char* to_string(Activation a);
Activation parse_activation(const std::string& s);

struct ModelConfig {
  std::size_t input_dim = 1;   // d: features per sensor per step
  std::size_t gat_width = 16;  // f
  std::size_t hidden = 32;     // H, per direction
  double leaky_slope = 0.2;
  Activation activation = Activation::elu;
  double variance_floor = 1e-6;
  Variant variant = Variant::full;
  // Full variant: the recurrent layer also receives the node's own reading
  // next to its attention embedding.
  bool input_skip = true;
};

struct GruCell {
  ad::Parameter w_z, u_z, b_z;
  ad::Parameter w_r, u_r, b_r;
  ad::Parameter w_h, u_h, b_h;
};

struct ModelParams {
  ModelConfig config;
  std::uint64_t seed = 0;

  ad::Parameter gat_w;  // d×f; the graph-convolution weight in the spatial-only variant
  ad::Parameter gat_a;  // 1×2f; unused by the ablations
  GruCell forward;      // unused by spatial-only
  GruCell backward;
  ad::Parameter mu_w, mu_b;
  ad::Parameter sigma_w, sigma_b;

  /// Parameters the configured variant actually uses, in a fixed order.
  std::vector<ad::Parameter*> trainable();
  std::vector<const ad::Parameter*> trainable() const;
  std::size_t parameter_count() const;
  void zero_grad();
};

/// Glorot-uniform weights, zero biases; fully determined by (config, seed).
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Per-entry Gaussian output.
struct GaussianField {
  Tensor2D mu;
  Tensor2D sigma2;
};

/// Graph-derived constants shared by every forward pass.
struct GraphTensors {
  Tensor2D attention_mask;        // N(i) ∪ {i}
  Tensor2D normalized_adjacency;  // D^{-1/2} A D^{-1/2}

  explicit GraphTensors(const SensorGraph& g)
      : attention_mask(g.attention_mask()), normalized_adjacency(g.normalized_adjacency()) {}
};

// Tape-level building blocks -------------------------------------------------

ad::Var activate(ad::Var x, Activation a);
/// Attention coefficients for one step's node features (N×d).
ad::Var gat_attention(ad::Tape& tape, ModelParams& p, ad::Var x, const GraphTensors& g);
/// γ(α · X W) for one step.
ad::Var gat_layer(ad::Tape& tape, ModelParams& p, ad::Var x, const GraphTensors& g);
ad::Var gru_step(ad::Tape& tape, GruCell& cell, ad::Var input, ad::Var h_prev);
/// Output step t is [h_t ‖ h'_t], each N×H.
std::vector<ad::Var> bigru(ad::Tape& tape, ModelParams& p, const std::vector<ad::Var>& sequence);

struct FieldVars {
  ad::Var mu;      // N×T
  ad::Var sigma2;  // N×T
};

/// Records the configured variant's forward pass on `tape`. `input` is N×T
/// with missing entries already zero.
FieldVars forward(ad::Tape& tape, ModelParams& p, const Tensor2D& input, const GraphTensors& g);

// Plain-tensor entry points --------------------------------------------------

Tensor2D gat_attention(const ModelParams& p, const Tensor2D& x, const SensorGraph& graph);
Tensor2D gat_forward(const ModelParams& p, const Tensor2D& x, const SensorGraph& graph);
Tensor2D gru_step(const GruCell& cell, const Tensor2D& input, const Tensor2D& h_prev);
/// `sequence[t]` is N×f (or N×d for temporal-only); returns N×2H per step.
std::vector<Tensor2D> bigru_forward(const ModelParams& p, const std::vector<Tensor2D>& sequence);

/// Runs the configured variant.
GaussianField model_forward(const ModelParams& p, const Tensor2D& input, const SensorGraph& graph);

/// Runs `variant` regardless of the one in `p.config`; parameters must have
/// been initialized for that variant.
GaussianField ablation_forward(Variant variant, const ModelParams& p, const Tensor2D& input,
                               const SensorGraph& graph);

/// Splits a long series into consecutive windows of `window` steps (the last
/// one may be shorter), runs the model on each and stitches the outputs.
GaussianField predict(const ModelParams& p, const Tensor2D& input, const SensorGraph& graph,
                      std::size_t window);

/// Column ranges [begin, begin+len) covering [0, steps).
std::vector<std::pair<std::size_t, std::size_t>> windows(std::size_t steps, std::size_t window);

// Checkpoints ----------------------------------------------------------------

struct Checkpoint {
  ModelParams params;
  NormalizationParams normalization;
  UnitTag unit = UnitTag::synthetic;
  std::size_t window = 0;
};

/// Directory bundle: manifest.json plus one header-less CSV per parameter.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace stgin::model
