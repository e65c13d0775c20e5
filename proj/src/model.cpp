#include "stgin/model.hpp"

#include <cmath>

#include <json.hpp>

#include "stgin/csv.hpp"
#include "stgin/error.hpp"
#include "stgin/rng.hpp"

namespace stgin::model {

using ad::Parameter;
using ad::Tape;
using ad::Var;

const char* to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::spatial_only: return "spatial-only";
    case Variant::temporal_only: return "temporal-only";
  }
  return "full";
}

Variant parse_variant(const std::string& s) {
  if (s == "full" || s == "stgin") return Variant::full;
  if (s == "spatial-only" || s == "gcn") return Variant::spatial_only;
  if (s == "temporal-only" || s == "bigru") return Variant::temporal_only;
  throw Error(ErrorKind::invalid_argument, "unknown model variant '" + s + "'");
}

const char* to_string(Activation a) {
  switch (a) {
    case Activation::elu: return "elu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "elu";
}

Activation parse_activation(const std::string& s) {
  if (s == "elu") return Activation::elu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw Error(ErrorKind::invalid_argument, "unknown activation '" + s + "'");
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

bool uses_gru(Variant v) { return v != Variant::spatial_only; }
bool uses_attention(Variant v) { return v == Variant::full; }
bool uses_gat_weight(Variant v) { return v != Variant::temporal_only; }

std::vector<Parameter*> cell_params(GruCell& c) {
  return {&c.w_z, &c.u_z, &c.b_z, &c.w_r, &c.u_r, &c.b_r, &c.w_h, &c.u_h, &c.b_h};
}

Parameter glorot(Rng& rng, std::string name, std::size_t rows, std::size_t cols) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor2D t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = bound * (2.0 * uniform_unit(rng) - 1.0);
  return Parameter(std::move(name), std::move(t));
}

Parameter zeros(std::string name, std::size_t rows, std::size_t cols) {
  return Parameter(std::move(name), Tensor2D(rows, cols));
}

GruCell init_cell(Rng& rng, const std::string& prefix, std::size_t in, std::size_t h) {
  GruCell c;
  c.w_z = glorot(rng, prefix + ".W_z", in, h);
  c.u_z = glorot(rng, prefix + ".U_z", h, h);
  c.b_z = zeros(prefix + ".b_z", 1, h);
  c.w_r = glorot(rng, prefix + ".W_r", in, h);
  c.u_r = glorot(rng, prefix + ".U_r", h, h);
  c.b_r = zeros(prefix + ".b_r", 1, h);
  c.w_h = glorot(rng, prefix + ".W_h", in, h);
  c.u_h = glorot(rng, prefix + ".U_h", h, h);
  c.b_h = zeros(prefix + ".b_h", 1, h);
  return c;
}

}  // namespace

std::vector<Parameter*> ModelParams::trainable() {
  std::vector<Parameter*> out;
  const Variant v = config.variant;
  if (uses_gat_weight(v)) out.push_back(&gat_w);
  if (uses_attention(v)) out.push_back(&gat_a);
  if (uses_gru(v)) {
    for (Parameter* q : cell_params(forward)) out.push_back(q);
    for (Parameter* q : cell_params(backward)) out.push_back(q);
  }
  out.insert(out.end(), {&mu_w, &mu_b, &sigma_w, &sigma_b});
  return out;
}

std::vector<const Parameter*> ModelParams::trainable() const {
  auto mut = const_cast<ModelParams*>(this)->trainable();
  return {mut.begin(), mut.end()};
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* q : trainable()) n += q->value.size();
  return n;
}

void ModelParams::zero_grad() {
  for (Parameter* q : trainable()) q->zero_grad();
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  if (config.input_dim == 0 || config.gat_width == 0 || config.hidden == 0) {
    throw Error(ErrorKind::invalid_argument, "init_params: widths must be positive");
  }
  if (!(config.variance_floor > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "init_params: variance floor must be > 0");
  }
  const std::size_t d = config.input_dim, f = config.gat_width, h = config.hidden;
  const Variant v = config.variant;
  Rng rng(seed);
  ModelParams p;
  p.config = config;
  p.seed = seed;
  if (uses_gat_weight(v)) p.gat_w = glorot(rng, v == Variant::full ? "gat.W" : "gcn.W", d, f);
  if (uses_attention(v)) p.gat_a = glorot(rng, "gat.a", 1, 2 * f);
  if (uses_gru(v)) {
    const std::size_t in = v == Variant::full ? f + (config.input_skip ? d : 0) : d;
    p.forward = init_cell(rng, "gru.fwd", in, h);
    p.backward = init_cell(rng, "gru.bwd", in, h);
  }
  const std::size_t head_in = v == Variant::spatial_only ? f : 2 * h;
  p.mu_w = glorot(rng, "head.mu.w", head_in, 1);
  p.mu_b = zeros("head.mu.b", 1, 1);
  p.sigma_w = glorot(rng, "head.sigma.w", head_in, 1);
  p.sigma_b = zeros("head.sigma.b", 1, 1);
  return p;
}

// ---------------------------------------------------------------------------
// Tape-level layers

Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::elu: return ad::elu(x);
    case Activation::tanh: return ad::tanh(x);
    case Activation::identity: return x;
  }
  return x;
}

namespace {

struct AttentionVars {
  Var wx;     // N×f
  Var alpha;  // N×N
};

AttentionVars attention(Tape& tape, ModelParams& p, Var x, const GraphTensors& g) {
  const std::size_t f = p.config.gat_width;
  if (x.rows() != g.attention_mask.rows()) {
    throw Error(ErrorKind::shape, "gat: " + std::to_string(x.rows()) + " node rows for a " +
                                      std::to_string(g.attention_mask.rows()) + "-node graph");
  }
  Var w = tape.parameter(p.gat_w);
  Var a = tape.parameter(p.gat_a);
  Var wx = ad::matmul(x, w);
  Var src = ad::matmul(wx, ad::transpose(ad::slice_cols(a, 0, f)));
  Var dst = ad::matmul(wx, ad::transpose(ad::slice_cols(a, f, f)));
  // e_ij = LeakyReLU(a_srcᵀ W x_i + a_dstᵀ W x_j)
  Var e = ad::leaky_relu(ad::add(src, ad::transpose(dst)), p.config.leaky_slope);
  return {wx, ad::row_softmax_masked(e, g.attention_mask)};
}

void check_input(const ModelParams& p, const Tensor2D& input, const GraphTensors& g) {
  if (p.config.input_dim != 1) {
    throw Error(ErrorKind::invalid_argument, "model: only univariate input (d = 1) is supported");
  }
  if (input.cols() == 0) throw Error(ErrorKind::invalid_argument, "model: empty time axis");
  if (input.rows() != g.attention_mask.rows()) {
    throw Error(ErrorKind::shape, "model: input " + input.shape_string() + " does not match a " +
                                      std::to_string(g.attention_mask.rows()) + "-node graph");
  }
}

Tensor2D column(const Tensor2D& m, std::size_t c) {
  Tensor2D out(m.rows(), 1);
  for (std::size_t r = 0; r < m.rows(); ++r) out(r, 0) = m(r, c);
  return out;
}

}  // namespace

Var gat_attention(Tape& tape, ModelParams& p, Var x, const GraphTensors& g) {
  return attention(tape, p, x, g).alpha;
}

Var gat_layer(Tape& tape, ModelParams& p, Var x, const GraphTensors& g) {
  auto [wx, alpha] = attention(tape, p, x, g);
  return activate(ad::matmul(alpha, wx), p.config.activation);
}

Var gru_step(Tape& tape, GruCell& c, Var input, Var h_prev) {
  auto gate = [&](Parameter& w, Parameter& u, Parameter& b, Var state) {
    return ad::add(ad::add(ad::matmul(input, tape.parameter(w)), ad::matmul(state, tape.parameter(u))),
                   tape.parameter(b));
  };
  Var z = ad::sigmoid(gate(c.w_z, c.u_z, c.b_z, h_prev));
  Var r = ad::sigmoid(gate(c.w_r, c.u_r, c.b_r, h_prev));
  Var candidate = ad::tanh(gate(c.w_h, c.u_h, c.b_h, ad::mul(r, h_prev)));
  // (1 - z) ⊙ h_prev + z ⊙ candidate
  return ad::add(h_prev, ad::mul(z, ad::sub(candidate, h_prev)));
}

std::vector<Var> bigru(Tape& tape, ModelParams& p, const std::vector<Var>& sequence) {
  const std::size_t t_len = sequence.size();
  if (t_len == 0) throw Error(ErrorKind::invalid_argument, "bigru: empty sequence");
  const std::size_t n = sequence.front().rows();
  const Var zero = tape.constant(Tensor2D(n, p.config.hidden));
  std::vector<Var> fwd(t_len), bwd(t_len);
  Var h = zero;
  for (std::size_t t = 0; t < t_len; ++t) fwd[t] = h = gru_step(tape, p.forward, sequence[t], h);
  h = zero;
  for (std::size_t t = t_len; t-- > 0;) bwd[t] = h = gru_step(tape, p.backward, sequence[t], h);
  std::vector<Var> out(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    const Var halves[] = {fwd[t], bwd[t]};
    out[t] = ad::concat_cols(halves);
  }
  return out;
}

FieldVars forward(Tape& tape, ModelParams& p, const Tensor2D& input, const GraphTensors& g) {
  check_input(p, input, g);
  const std::size_t t_len = input.cols();
  std::vector<Var> xs(t_len);
  for (std::size_t t = 0; t < t_len; ++t) xs[t] = tape.constant(column(input, t));

  std::vector<Var> hidden(t_len);
  switch (p.config.variant) {
    case Variant::full: {
      std::vector<Var> seq(t_len);
      for (std::size_t t = 0; t < t_len; ++t) {
        seq[t] = gat_layer(tape, p, xs[t], g);
        if (p.config.input_skip) {
          const Var parts[] = {seq[t], xs[t]};
          seq[t] = ad::concat_cols(parts);
        }
      }
      hidden = bigru(tape, p, seq);
      break;
    }
    case Variant::temporal_only:
      hidden = bigru(tape, p, xs);
      break;
    case Variant::spatial_only: {
      const Var a_hat = tape.constant(g.normalized_adjacency);
      const Var w = tape.parameter(p.gat_w);
      for (std::size_t t = 0; t < t_len; ++t)
        hidden[t] = activate(ad::matmul(a_hat, ad::matmul(xs[t], w)), p.config.activation);
      break;
    }
  }

  const Var mu_w = tape.parameter(p.mu_w), mu_b = tape.parameter(p.mu_b);
  const Var s_w = tape.parameter(p.sigma_w), s_b = tape.parameter(p.sigma_b);
  std::vector<Var> mus(t_len), vars(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    mus[t] = ad::add(ad::matmul(hidden[t], mu_w), mu_b);
    vars[t] = ad::add_scalar(ad::softplus(ad::add(ad::matmul(hidden[t], s_w), s_b)),
                             p.config.variance_floor);
  }
  return {ad::concat_cols(mus), ad::concat_cols(vars)};
}

// ---------------------------------------------------------------------------
// Plain-tensor entry points

Tensor2D gat_attention(const ModelParams& p, const Tensor2D& x, const SensorGraph& graph) {
  ModelParams copy = p;
  Tape tape(false);
  const GraphTensors g(graph);
  return gat_attention(tape, copy, tape.constant(x), g).value();
}

Tensor2D gat_forward(const ModelParams& p, const Tensor2D& x, const SensorGraph& graph) {
  ModelParams copy = p;
  Tape tape(false);
  const GraphTensors g(graph);
  return gat_layer(tape, copy, tape.constant(x), g).value();
}

Tensor2D gru_step(const GruCell& cell, const Tensor2D& input, const Tensor2D& h_prev) {
  GruCell copy = cell;
  Tape tape(false);
  return gru_step(tape, copy, tape.constant(input), tape.constant(h_prev)).value();
}

std::vector<Tensor2D> bigru_forward(const ModelParams& p, const std::vector<Tensor2D>& sequence) {
  ModelParams copy = p;
  Tape tape(false);
  std::vector<Var> seq;
  for (const Tensor2D& s : sequence) seq.push_back(tape.constant(s));
  std::vector<Tensor2D> out;
  for (Var v : bigru(tape, copy, seq)) out.push_back(v.value());
  return out;
}

GaussianField model_forward(const ModelParams& p, const Tensor2D& input, const SensorGraph& graph) {
  ModelParams copy = p;
  Tape tape(false);
  const GraphTensors g(graph);
  FieldVars f = forward(tape, copy, input, g);
  return {f.mu.value(), f.sigma2.value()};
}

GaussianField ablation_forward(Variant variant, const ModelParams& p, const Tensor2D& input,
                               const SensorGraph& graph) {
  if (variant == Variant::full) {
    throw Error(ErrorKind::invalid_argument, "ablation_forward: variant must be an ablation");
  }
  if (p.config.variant != variant) {
    throw Error(ErrorKind::invalid_argument, std::string("ablation_forward: parameters were initialized for ") +
                                                 to_string(p.config.variant) + ", not " + to_string(variant));
  }
  return model_forward(p, input, graph);
}

std::vector<std::pair<std::size_t, std::size_t>> windows(std::size_t steps, std::size_t window) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (window == 0) window = steps;
  for (std::size_t b = 0; b < steps; b += window) out.emplace_back(b, std::min(window, steps - b));
  return out;
}

GaussianField predict(const ModelParams& p, const Tensor2D& input, const SensorGraph& graph,
                      std::size_t window) {
  const std::size_t n = input.rows();
  GaussianField out{Tensor2D(n, input.cols()), Tensor2D(n, input.cols())};
  ModelParams copy = p;
  const GraphTensors g(graph);
  for (auto [begin, len] : windows(input.cols(), window)) {
    Tensor2D part(n, len);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < len; ++c) part(r, c) = input(r, begin + c);
    Tape tape(false);
    FieldVars f = forward(tape, copy, part, g);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < len; ++c) {
        out.mu(r, begin + c) = f.mu.value()(r, c);
        out.sigma2(r, begin + c) = f.sigma2.value()(r, c);
      }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

using Json = nlohmann::ordered_json;

constexpr const char* kFormat = "stgin-checkpoint";
constexpr int kVersion = 1;

Json config_json(const ModelConfig& c) {
  return Json{{"variant", to_string(c.variant)},     {"input_dim", c.input_dim},
              {"gat_width", c.gat_width},            {"hidden", c.hidden},
              {"leaky_slope", c.leaky_slope},        {"activation", to_string(c.activation)},
              {"variance_floor", c.variance_floor}, {"input_skip", c.input_skip}};
}

ModelConfig config_from_json(const Json& j) {
  ModelConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.gat_width = j.at("gat_width").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.activation = parse_activation(j.at("activation").get<std::string>());
  c.variance_floor = j.at("variance_floor").get<double>();
  c.input_skip = j.at("input_skip").get<bool>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  Json params = Json::array();
  for (const Parameter* q : ckpt.params.trainable()) {
    const std::string file = q->name + ".csv";
    csv::write_matrix(dir / file, q->value);
    params.push_back(Json{{"name", q->name}, {"rows", q->value.rows()}, {"cols", q->value.cols()}, {"file", file}});
  }
  const Json manifest{
      {"format", kFormat},
      {"version", kVersion},
      {"seed", ckpt.params.seed},
      {"config", config_json(ckpt.params.config)},
      {"normalization",
       Json{{"scheme", to_string(ckpt.normalization.scheme)},
            {"offset", csv::format_double(ckpt.normalization.offset)},
            {"scale", csv::format_double(ckpt.normalization.scale)}}},
      {"unit", to_string(ckpt.unit)},
      {"window", ckpt.window},
      {"parameters", params},
  };
  csv::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  Json m;
  try {
    m = Json::parse(csv::read_file(dir / "manifest.json"));
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::parse, "checkpoint manifest: " + std::string(e.what()));
  }
  try {
    if (m.at("format") != kFormat) throw Error(ErrorKind::parse, "checkpoint: unknown format");
    if (m.at("version").get<int>() != kVersion) {
      throw Error(ErrorKind::parse, "checkpoint: unsupported version " + m.at("version").dump());
    }
    Checkpoint ckpt;
    ckpt.params = init_params(config_from_json(m.at("config")), m.at("seed").get<std::uint64_t>());
    const Json& norm = m.at("normalization");
    ckpt.normalization.scheme = parse_scheme(norm.at("scheme").get<std::string>());
    ckpt.normalization.offset = csv::parse_double(norm.at("offset").get<std::string>());
    ckpt.normalization.scale = csv::parse_double(norm.at("scale").get<std::string>());
    ckpt.unit = parse_unit(m.at("unit").get<std::string>());
    ckpt.window = m.at("window").get<std::size_t>();

    auto slots = ckpt.params.trainable();
    const Json& entries = m.at("parameters");
    if (entries.size() != slots.size()) throw Error(ErrorKind::parse, "checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const Json& e = entries[i];
      Parameter& slot = *slots[i];
      if (e.at("name").get<std::string>() != slot.name) {
        throw Error(ErrorKind::parse, "checkpoint: expected parameter " + slot.name);
      }
      Tensor2D value = csv::read_matrix(dir / e.at("file").get<std::string>());
      if (value.rows() != e.at("rows").get<std::size_t>() || value.cols() != e.at("cols").get<std::size_t>() ||
          !value.same_shape(slot.value)) {
        throw Error(ErrorKind::shape, "checkpoint: " + slot.name + " has shape " + value.shape_string() +
                                          ", expected " + slot.value.shape_string());
      }
      slot.value = std::move(value);
    }
    return ckpt;
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::parse, "checkpoint manifest: " + std::string(e.what()));
  }
}

}  // namespace stgin::model
