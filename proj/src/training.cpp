#include "stgin/training.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include "stgin/csv.hpp"
#include "stgin/error.hpp"
#include "stgin/rng.hpp"

namespace stgin::train {

using model::FieldVars;
using model::GaussianField;
using model::ModelParams;

const char* to_string(NllAggregation a) { return a == NllAggregation::mean ? "mean" : "sum"; }

NllAggregation parse_aggregation(const std::string& s) {
  if (s == "mean") return NllAggregation::mean;
  if (s == "sum") return NllAggregation::sum;
  throw Error(ErrorKind::invalid_argument, "unknown NLL aggregation '" + s + "'");
}

const char* to_string(HideMode m) { return m == HideMode::entries ? "entries" : "sensors"; }

HideMode parse_hide_mode(const std::string& s) {
  if (s == "entries") return HideMode::entries;
  if (s == "sensors") return HideMode::sensors;
  throw Error(ErrorKind::invalid_argument, "unknown hide mode '" + s + "'");
}

void TrainingConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::invalid_argument, "training config: " + what); };
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail("lambda must be in [0,1]");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning rate must be >= 0");
  if (!(hide_rate >= 0.0 && hide_rate < 1.0)) fail("hide rate must be in [0,1)");
  if (clip_norm && !(*clip_norm > 0.0)) fail("clip norm must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must be in [0,1)");
  if (!(epsilon > 0.0)) fail("epsilon must be > 0");
}

// ---------------------------------------------------------------------------
// Plain losses

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void check_shapes(const char* what, const GaussianField& f, const Tensor2D& x, const Mask& m) {
  if (!f.mu.same_shape(x) || !f.sigma2.same_shape(x) || m.rows() != x.rows() || m.cols() != x.cols()) {
    throw Error(ErrorKind::shape, std::string(what) + ": field, data and mask shapes differ");
  }
}

std::size_t observed_or_throw(const char* what, const Mask& m) {
  const std::size_t k = m.count_observed();
  if (k == 0) throw Error(ErrorKind::invalid_argument, std::string(what) + ": no observed entries");
  return k;
}

}  // namespace

double reconstruction_loss(const GaussianField& field, const Tensor2D& x, const Mask& mask) {
  check_shapes("reconstruction_loss", field, x, mask);
  const std::size_t k = observed_or_throw("reconstruction_loss", mask);
  double s = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (!mask.observed(r, c)) continue;
      const double e = x(r, c) - field.mu(r, c);
      s += e * e;
    }
  return s / static_cast<double>(k);
}

double nll_loss(const GaussianField& field, const Tensor2D& x, const Mask& mask, NllAggregation aggregation) {
  check_shapes("nll_loss", field, x, mask);
  const std::size_t k = observed_or_throw("nll_loss", mask);
  double s = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (!mask.observed(r, c)) continue;
      const double v = field.sigma2(r, c);
      if (!(v > 0.0)) throw Error(ErrorKind::numeric, "nll_loss: non-positive variance");
      const double e = x(r, c) - field.mu(r, c);
      s += 0.5 * std::log(v) + kHalfLog2Pi + e * e / (2.0 * v);
    }
  return aggregation == NllAggregation::mean ? s / static_cast<double>(k) : s;
}

double combined_loss(double reconstruction, double regularization, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorKind::invalid_argument, "combined_loss: lambda must be in [0,1]");
  return lambda * reconstruction + (1.0 - lambda) * regularization;
}

// ---------------------------------------------------------------------------
// Tape losses

LossVars record_losses(ad::Tape& tape, const FieldVars& field, const Tensor2D& x, const Mask& mask,
                       double lambda, NllAggregation aggregation) {
  (void)tape;
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorKind::invalid_argument, "loss: lambda must be in [0,1]");
  if (!field.mu.value().same_shape(x) || mask.rows() != x.rows() || mask.cols() != x.cols()) {
    throw Error(ErrorKind::shape, "loss: field, data and mask shapes differ");
  }
  const std::size_t k = observed_or_throw("loss", mask);
  const Tensor2D w = mask.weights();
  const double inv_k = 1.0 / static_cast<double>(k);

  const ad::Var target = field.mu.tape->constant(x);
  const ad::Var sq = ad::square(ad::sub(target, field.mu));
  const ad::Var recon = ad::scale(ad::masked_sum(sq, w), inv_k);

  const ad::Var terms = ad::add(ad::add_scalar(ad::scale(ad::log(field.sigma2), 0.5), kHalfLog2Pi),
                                ad::scale(ad::div(sq, field.sigma2), 0.5));
  ad::Var reg = ad::masked_sum(terms, w);
  if (aggregation == NllAggregation::mean) reg = ad::scale(reg, inv_k);

  const ad::Var combined = ad::add(ad::scale(recon, lambda), ad::scale(reg, 1.0 - lambda));
  return {recon, reg, combined};
}

LossValues evaluate_losses(ModelParams& params, const Tensor2D& input, const Tensor2D& target,
                           const Mask& target_mask, const model::GraphTensors& graph, double lambda,
                           NllAggregation aggregation, bool with_gradients) {
  ad::Tape tape(with_gradients);
  const FieldVars f = model::forward(tape, params, input, graph);
  const LossVars l = record_losses(tape, f, target, target_mask, lambda, aggregation);
  const LossValues out{l.reconstruction.value()[0], l.regularization.value()[0], l.combined.value()[0]};
  if (with_gradients) tape.backward(l.combined);
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

struct AdamState {
  std::vector<Tensor2D> m, v;
  std::size_t step = 0;
};

void adam_step(std::vector<ad::Parameter*>& params, AdamState& st, const TrainingConfig& cfg) {
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t q = 0; q < params.size(); ++q) {
    ad::Parameter& p = *params[q];
    Tensor2D& m = st.m[q];
    Tensor2D& v = st.v[q];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      p.value[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
    }
  }
}

void clip_gradients(std::vector<ad::Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (const ad::Parameter* p : params)
    for (double g : p->grad.values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (ad::Parameter* p : params)
    for (double& g : p->grad.values()) g *= s;
}

// Hidden entries of one window, drawn among the observed ones.
Mask draw_hidden(Rng& rng, const Mask& observed, double rate, HideMode mode) {
  Mask hidden(observed.rows(), observed.cols(), false);
  if (rate <= 0.0) return hidden;
  if (mode == HideMode::entries) {
    for (std::size_t r = 0; r < observed.rows(); ++r)
      for (std::size_t c = 0; c < observed.cols(); ++c)
        if (uniform_unit(rng) < rate && observed.observed(r, c)) hidden.set(r, c, true);
  } else {
    bool any = false;
    for (std::size_t r = 0; r < observed.rows(); ++r) {
      if (uniform_unit(rng) >= rate) continue;
      any = true;
      for (std::size_t c = 0; c < observed.cols(); ++c) hidden.set(r, c, observed.observed(r, c));
    }
    if (!any) {
      const auto r = static_cast<std::size_t>(uniform_below(rng, observed.rows()));
      for (std::size_t c = 0; c < observed.cols(); ++c) hidden.set(r, c, observed.observed(r, c));
    }
  }
  return hidden;
}

struct Window {
  Tensor2D values;  // zero where unobserved
  Mask observed;
};

}  // namespace

TrainReport train(ModelParams& params, const TrafficTensor& data, const SensorGraph& graph,
                  const TrainingConfig& config) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const std::size_t n = data.sensors();
  if (graph.size() != n) throw Error(ErrorKind::shape, "train: graph size differs from sensor count");

  std::vector<Window> windows;
  for (auto [begin, len] : model::windows(data.steps(), config.window)) {
    Window w{Tensor2D(n, len), data.observed.slice_cols(begin, len)};
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < len; ++c)
        w.values(r, c) = w.observed.observed(r, c) ? data.values(r, begin + c) : 0.0;
    if (w.observed.count_observed() == 0) {
      throw Error(ErrorKind::invalid_argument, "train: window at step " + std::to_string(begin) +
                                                   " has no observed entries");
    }
    windows.push_back(std::move(w));
  }

  const model::GraphTensors g(graph);
  auto trainable = params.trainable();
  AdamState adam;
  for (const ad::Parameter* p : trainable) {
    adam.m.push_back(Tensor2D::zeros_like(p->value));
    adam.v.push_back(Tensor2D::zeros_like(p->value));
  }
  params.zero_grad();

  Rng rng(config.seed);
  TrainReport report;
  double best = HUGE_VAL;
  std::vector<Tensor2D> best_values;
  std::size_t since_best = 0;
  EpochLog last_finite;

  std::vector<std::size_t> order(windows.size());
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    order = sample_without_replacement(rng, windows.size(), windows.size());
    double recon_sum = 0.0, reg_sum = 0.0;
    for (std::size_t wi : order) {
      const Window& w = windows[wi];
      Mask hidden = draw_hidden(rng, w.observed, config.hide_rate, config.hide_mode);
      Mask targets = hidden;
      Tensor2D input = w.values;
      if (hidden.count_observed() == 0) {
        targets = w.observed;
      } else {
        for (std::size_t i = 0; i < input.rows(); ++i)
          for (std::size_t c = 0; c < input.cols(); ++c)
            if (hidden.observed(i, c)) input(i, c) = 0.0;
      }
      const LossValues l = evaluate_losses(params, input, w.values, targets, g, config.lambda, config.nll, true);
      if (!std::isfinite(l.combined)) {
        throw Error(ErrorKind::diverged,
                    "train: non-finite loss at epoch " + std::to_string(epoch) + "; last finite recon=" +
                        csv::format_double(last_finite.reconstruction) + " reg=" +
                        csv::format_double(last_finite.regularization) + " combined=" +
                        csv::format_double(last_finite.combined));
      }
      if (config.clip_norm) clip_gradients(trainable, *config.clip_norm);
      adam_step(trainable, adam, config);
      params.zero_grad();
      recon_sum += l.reconstruction;
      reg_sum += l.regularization;
    }
    EpochLog log;
    log.epoch = epoch;
    log.reconstruction = recon_sum / static_cast<double>(windows.size());
    log.regularization = reg_sum / static_cast<double>(windows.size());
    log.combined = combined_loss(log.reconstruction, log.regularization, config.lambda);
    report.epochs.push_back(log);
    last_finite = log;

    if (log.combined < best) {
      best = log.combined;
      report.best_epoch = epoch;
      since_best = 0;
      best_values.clear();
      for (const ad::Parameter* p : trainable) best_values.push_back(p->value);
    } else if (++since_best >= config.patience && config.patience > 0) {
      report.early_stopped = true;
      break;
    }
  }
  if (!best_values.empty()) {
    for (std::size_t q = 0; q < trainable.size(); ++q) trainable[q]->value = best_values[q];
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

ad::GradCheckResult model_gradient_check(const model::ModelConfig& config, const GradCheckSpec& spec) {
  if (spec.nodes < 2 || spec.steps < 1) throw Error(ErrorKind::invalid_argument, "gradcheck: instance too small");
  Rng rng(spec.seed);
  Tensor2D pos(spec.nodes, 2);
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = uniform_unit(rng);
  Tensor2D dist(spec.nodes, spec.nodes);
  for (std::size_t i = 0; i < spec.nodes; ++i)
    for (std::size_t j = 0; j < spec.nodes; ++j)
      dist(i, j) = std::hypot(pos(i, 0) - pos(j, 0), pos(i, 1) - pos(j, 1));
  const SensorGraph graph = build_gaussian_adjacency(dist, default_bandwidth(dist), 0.1);

  Tensor2D x(spec.nodes, spec.steps);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = uniform_unit(rng);
  Mask observed = random_missing_mask(spec.nodes, spec.steps, spec.missing_rate, rng());
  if (observed.count_observed() == 0) observed.set(0, 0, true);
  Tensor2D input = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c)
      if (!observed.observed(r, c)) input(r, c) = 0.0;

  model::ModelParams params = model::init_params(config, rng());
  const model::GraphTensors g(graph);
  auto trainable = params.trainable();
  params.zero_grad();
  evaluate_losses(params, input, x, observed, g, spec.lambda, spec.nll, true);
  const auto numeric = ad::finite_diff_grad(
      [&] { return evaluate_losses(params, input, x, observed, g, spec.lambda, spec.nll, false).combined; },
      trainable, spec.h);
  return ad::compare_gradients(trainable, numeric);
}

void write_report_csv(const std::filesystem::path& path, const TrainReport& report) {
  std::string text = "epoch,reconstruction,regularization,combined\n";
  for (const EpochLog& e : report.epochs) {
    text += std::to_string(e.epoch) + ',' + csv::format_double(e.reconstruction) + ',' +
            csv::format_double(e.regularization) + ',' + csv::format_double(e.combined) + '\n';
  }
  csv::write_file(path, text);
}

}  // namespace stgin::train
