#include "stgin/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <tuple>

#include "stgin/csv.hpp"
#include "stgin/error.hpp"

namespace stgin::eval {

using model::GaussianField;

// ---------------------------------------------------------------------------
// Fitting

FitResult fit_model(const TrafficTensor& data, const SensorGraph& graph, const ExperimentConfig& config,
                    model::Variant variant, std::uint64_t seed) {
  data.validate();
  const NormalizationParams norm = fit_normalization(data, config.scheme);
  const TrafficTensor working = normalize(data, norm);

  model::ModelConfig mc = config.model;
  mc.variant = variant;
  train::TrainingConfig tc = config.training;
  tc.seed = seed;

  FitResult out;
  out.checkpoint.params = model::init_params(mc, seed);
  out.checkpoint.normalization = norm;
  out.checkpoint.unit = data.unit;
  out.checkpoint.window = tc.window;
  out.report = train::train(out.checkpoint.params, working, graph, tc);
  return out;
}

GaussianField denormalize_field(const GaussianField& field, const NormalizationParams& p) {
  GaussianField out{denormalize(field.mu, p), field.sigma2};
  const double s2 = p.scale * p.scale;
  for (std::size_t i = 0; i < out.sigma2.size(); ++i) out.sigma2[i] *= s2;
  return out;
}

GaussianField impute_field(const model::Checkpoint& ckpt, const TrafficTensor& data, const SensorGraph& graph) {
  data.validate();
  const TrafficTensor working = normalize(data, ckpt.normalization);
  const GaussianField f = model::predict(ckpt.params, working.values, graph, ckpt.window);
  return clip_negative(denormalize_field(f, ckpt.normalization), data.unit);
}

// ---------------------------------------------------------------------------
// Names

namespace {

struct MethodInfo {
  Method method;
  const char* key;
  const char* label;
};

constexpr MethodInfo kMethods[] = {
    {Method::average, "average", "Average"}, {Method::mean, "mean", "Mean"},
    {Method::svd, "svd", "SVD"},             {Method::bigru, "bigru", "BiGRU"},
    {Method::gcn, "gcn", "GCN"},             {Method::stgin, "stgin", "ST-GIN"},
};

const MethodInfo& info(Method m) { return kMethods[static_cast<int>(m)]; }

}  // namespace

const char* to_string(Method m) { return info(m).key; }
const char* display_name(Method m) { return info(m).label; }

Method parse_method(const std::string& s) {
  for (const MethodInfo& i : kMethods)
    if (s == i.key) return i.method;
  throw Error(ErrorKind::invalid_argument, "unknown method '" + s + "'");
}

bool random_only(Method m) { return m == Method::average || m == Method::mean || m == Method::svd; }

const char* to_string(MetricSpace s) { return s == MetricSpace::normalized ? "normalized" : "physical"; }

MetricSpace parse_space(const std::string& s) {
  if (s == "normalized") return MetricSpace::normalized;
  if (s == "physical") return MetricSpace::physical;
  throw Error(ErrorKind::invalid_argument, "unknown metric space '" + s + "'");
}

// ---------------------------------------------------------------------------
// Grid

EvalCell score_cell(const Tensor2D& truth, const Tensor2D& imputed, const Mask& scored) {
  EvalCell c;
  c.mse = mse(truth, imputed, scored);
  c.mae = mae(truth, imputed, scored);
  c.scored = scored.count_observed();
  return c;
}

namespace {

model::Variant variant_of(Method m) {
  switch (m) {
    case Method::bigru: return model::Variant::temporal_only;
    case Method::gcn: return model::Variant::spatial_only;
    default: return model::Variant::full;
  }
}

Tensor2D to_space(const Tensor2D& v, const NormalizationParams& p, MetricSpace space) {
  if (space == MetricSpace::physical) return v;
  Tensor2D out(v.rows(), v.cols());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = p.apply(v[i]);
  return out;
}

}  // namespace

EvalReport run_benchmark(const TrafficTensor& data, const SensorGraph& graph, const BenchmarkSpec& spec,
                         const std::function<void(const std::string&)>& log) {
  data.validate();
  if (graph.size() != data.sensors()) throw Error(ErrorKind::shape, "benchmark: graph size differs from sensor count");
  if (!(spec.level > 0.0 && spec.level < 1.0)) throw Error(ErrorKind::invalid_argument, "benchmark: level must be in (0,1)");
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };

  EvalReport report;
  for (MissingRegime regime : spec.regimes) {
    for (Method method : spec.methods) {
      if (regime == MissingRegime::nonrandom && random_only(method)) {
        report.notices.push_back(std::string("skipped ") + display_name(method) +
                                 " under the non-random regime: it needs observed entries in every sensor");
        continue;
      }
      for (double rate : spec.rates) {
        for (std::uint64_t seed : spec.seeds) {
          const auto started = std::chrono::steady_clock::now();
          const Mask mask = generate_mask(MaskSpec{regime, rate, seed}, data.sensors(), data.steps());
          const TrafficTensor masked = apply_mask(data, mask);
          const Mask scored = evaluation_mask(data, mask);
          if (scored.count_observed() == 0) {
            report.notices.push_back("skipped " + std::string(to_string(method)) + " at rate " +
                                     csv::format_double(rate) + ": nothing to score");
            continue;
          }
          const NormalizationParams norm = fit_normalization(masked, spec.config.scheme);
          const Tensor2D truth = to_space(data.values, norm, spec.space);

          EvalCell cell;
          switch (method) {
            case Method::average:
              cell = score_cell(truth, to_space(impute_average(masked.values, masked.observed), norm, spec.space), scored);
              break;
            case Method::mean:
              cell = score_cell(
                  truth, to_space(impute_mean(masked.values, masked.observed, spec.config.steps_per_day), norm, spec.space),
                  scored);
              break;
            case Method::svd:
              cell = score_cell(truth, to_space(impute_svd(masked.values, masked.observed, spec.svd).imputed, norm, spec.space),
                                scored);
              break;
            default: {
              ExperimentConfig cfg = spec.config;
              if (regime == MissingRegime::nonrandom) cfg.training.hide_mode = train::HideMode::sensors;
              const FitResult fit = fit_model(masked, graph, cfg, variant_of(method), seed);
              GaussianField f = impute_field(fit.checkpoint, masked, graph);
              if (spec.space == MetricSpace::normalized) {
                const double s2 = norm.scale * norm.scale;
                f.mu = to_space(f.mu, norm, spec.space);
                for (std::size_t i = 0; i < f.sigma2.size(); ++i) f.sigma2[i] /= s2;
              }
              cell = score_cell(truth, f.mu, scored);
              cell.coverage = interval_coverage(f, truth, scored, spec.level);
              break;
            }
          }
          cell.method = method;
          cell.regime = regime;
          cell.rate = rate;
          cell.seed = seed;
          cell.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
          say(std::string(to_string(regime)) + ' ' + to_string(method) + " rate=" + csv::format_double(rate) +
              " seed=" + std::to_string(seed) + " mse=" + csv::format_double(cell.mse) +
              " mae=" + csv::format_double(cell.mae));
          report.cells.push_back(cell);
        }
      }
    }
  }
  std::sort(report.cells.begin(), report.cells.end(), [](const EvalCell& a, const EvalCell& b) {
    return std::tie(a.regime, a.method, a.rate, a.seed) < std::tie(b.regime, b.method, b.rate, b.seed);
  });
  return report;
}

// ---------------------------------------------------------------------------
// Files and tables

namespace {

constexpr const char* kReportHeader = "method,regime,rate,seed,mse,mae,scored,coverage,runtime_seconds";

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string render(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], r[c].size());
    }
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) line += (c ? "  " : "") + pad(r[c], width[c]);
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  }
  return out;
}

struct Averaged {
  double mse = 0.0, mae = 0.0;
  std::size_t n = 0;
};

}  // namespace

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::string text = std::string(kReportHeader) + '\n';
  for (const EvalCell& c : report.cells) {
    text += std::string(to_string(c.method)) + ',' + to_string(c.regime) + ',' + csv::format_double(c.rate) + ',' +
            std::to_string(c.seed) + ',' + csv::format_double(c.mse) + ',' + csv::format_double(c.mae) + ',' +
            std::to_string(c.scored) + ',' + (c.coverage ? csv::format_double(*c.coverage) : std::string()) + ',' +
            csv::format_double(c.runtime_seconds) + '\n';
  }
  csv::write_file(path, text);
}

EvalReport read_report_csv(const std::filesystem::path& path) {
  std::istringstream in(csv::read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) {
    throw Error(ErrorKind::parse, path.string() + ":1: expected header '" + kReportHeader + "'");
  }
  EvalReport report;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    try {
      const auto f = csv::split(line, ',');
      if (f.size() != 9) throw Error(ErrorKind::parse, "expected 9 fields");
      EvalCell c;
      c.method = parse_method(std::string(f[0]));
      c.regime = parse_regime(std::string(f[1]));
      c.rate = csv::parse_double(f[2]);
      c.seed = std::stoull(std::string(f[3]));
      c.mse = csv::parse_double(f[4]);
      c.mae = csv::parse_double(f[5]);
      c.scored = std::stoull(std::string(f[6]));
      if (!f[7].empty()) c.coverage = csv::parse_double(f[7]);
      c.runtime_seconds = csv::parse_double(f[8]);
      report.cells.push_back(c);
    } catch (const std::exception& e) {
      throw Error(ErrorKind::parse, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return report;
}

std::string format_tables(const EvalReport& report) {
  std::string out;
  for (MissingRegime regime : {MissingRegime::random, MissingRegime::nonrandom}) {
    std::map<std::pair<Method, double>, Averaged> cells;
    std::vector<double> rates;
    std::vector<Method> methods;
    for (const EvalCell& c : report.cells) {
      if (c.regime != regime) continue;
      Averaged& a = cells[{c.method, c.rate}];
      a.mse += c.mse;
      a.mae += c.mae;
      ++a.n;
      if (std::find(rates.begin(), rates.end(), c.rate) == rates.end()) rates.push_back(c.rate);
      if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
    }
    if (cells.empty()) continue;
    std::sort(rates.begin(), rates.end());
    std::sort(methods.begin(), methods.end());
    auto value = [&](Method m, double r, bool want_mse) -> std::string {
      auto it = cells.find({m, r});
      if (it == cells.end()) return "-";
      const double v = want_mse ? it->second.mse : it->second.mae;
      return fmt("%.4g", v / static_cast<double>(it->second.n));
    };

    std::vector<std::vector<std::string>> rows;
    if (regime == MissingRegime::random) {
      out += "Random missing (MSE / MAE)\n";
      std::vector<std::string> head{"Model"};
      for (double r : rates) head.push_back(fmt("%g", r) + " (MSE/MAE)");
      rows.push_back(head);
      for (Method m : methods) {
        std::vector<std::string> row{display_name(m)};
        for (double r : rates) row.push_back(value(m, r, true) + " / " + value(m, r, false));
        rows.push_back(row);
      }
    } else {
      out += "Non-random missing\n";
      std::vector<std::string> head{"Metrics", "Model"};
      for (double r : rates) head.push_back(fmt("%g", r));
      rows.push_back(head);
      for (bool want_mse : {true, false}) {
        bool first = true;
        for (Method m : methods) {
          std::vector<std::string> row{first ? (want_mse ? "MSE" : "MAE") : "", display_name(m)};
          for (double r : rates) row.push_back(value(m, r, want_mse));
          rows.push_back(row);
          first = false;
        }
      }
    }
    out += render(rows) + '\n';
  }
  for (const std::string& n : report.notices) out += "note: " + n + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Interval plot

std::string interval_svg(const TrafficTensor& truth, const GaussianField& field, const Mask& input_mask,
                         std::size_t sensor, std::size_t begin, std::size_t count, double level) {
  if (sensor >= truth.sensors()) throw Error(ErrorKind::invalid_argument, "interval_svg: sensor out of range");
  if (count == 0 || begin + count > truth.steps()) throw Error(ErrorKind::invalid_argument, "interval_svg: bad range");
  if (!field.mu.same_shape(truth.values) || !field.sigma2.same_shape(truth.values)) {
    throw Error(ErrorKind::shape, "interval_svg: field and truth shapes differ");
  }
  const double z = normal_quantile(level);
  std::vector<double> lo(count), hi(count);
  double ymin = HUGE_VAL, ymax = -HUGE_VAL;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t t = begin + k;
    const double half = z * std::sqrt(field.sigma2(sensor, t));
    lo[k] = field.mu(sensor, t) - half;
    hi[k] = field.mu(sensor, t) + half;
    ymin = std::min(ymin, lo[k]);
    ymax = std::max(ymax, hi[k]);
    if (truth.observed.observed(sensor, t)) {
      ymin = std::min(ymin, truth.values(sensor, t));
      ymax = std::max(ymax, truth.values(sensor, t));
    }
  }
  if (!(ymax > ymin)) ymax = ymin + 1.0;

  constexpr double W = 900, H = 360, L = 60, R = 20, T = 40, B = 40;
  auto px = [&](std::size_t k) { return L + (W - L - R) * (count == 1 ? 0.5 : double(k) / double(count - 1)); };
  auto py = [&](double v) { return T + (H - T - B) * (ymax - v) / (ymax - ymin); };
  auto pt = [&](double x, double y) { return fmt("%.2f", x) + ',' + fmt("%.2f", y); };

  std::string band, mu, obs, dots;
  for (std::size_t k = 0; k < count; ++k) band += pt(px(k), py(hi[k])) + ' ';
  for (std::size_t k = count; k-- > 0;) band += pt(px(k), py(lo[k])) + ' ';
  for (std::size_t k = 0; k < count; ++k) mu += pt(px(k), py(field.mu(sensor, begin + k))) + ' ';
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t t = begin + k;
    if (!truth.observed.observed(sensor, t)) continue;
    obs += pt(px(k), py(truth.values(sensor, t))) + ' ';
    if (!input_mask.observed(sensor, t)) {
      dots += "<circle cx=\"" + fmt("%.2f", px(k)) + "\" cy=\"" + fmt("%.2f", py(truth.values(sensor, t))) +
              "\" r=\"2.5\" fill=\"white\" stroke=\"black\"/>\n";
    }
  }

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%g", W) + "\" height=\"" + fmt("%g", H) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt("%g", L) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">sensor " +
       (sensor < truth.sensor_ids.size() ? truth.sensor_ids[sensor] : std::to_string(sensor)) + ", steps " +
       std::to_string(begin) + "-" + std::to_string(begin + count - 1) + ", " + fmt("%g", level * 100) +
       "% interval</text>\n";
  s += "<polygon points=\"" + band + "\" fill=\"#9ecae1\" fill-opacity=\"0.6\" stroke=\"none\"/>\n";
  s += "<polyline points=\"" + obs + "\" fill=\"none\" stroke=\"black\" stroke-width=\"1.2\"/>\n";
  s += "<polyline points=\"" + mu + "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.2\"/>\n";
  s += dots;
  s += "<line x1=\"" + fmt("%g", L) + "\" y1=\"" + fmt("%g", H - B) + "\" x2=\"" + fmt("%g", W - R) + "\" y2=\"" +
       fmt("%g", H - B) + "\" stroke=\"gray\"/>\n";
  s += "<line x1=\"" + fmt("%g", L) + "\" y1=\"" + fmt("%g", T) + "\" x2=\"" + fmt("%g", L) + "\" y2=\"" +
       fmt("%g", H - B) + "\" stroke=\"gray\"/>\n";
  s += "<text x=\"4\" y=\"" + fmt("%.2f", py(ymax) + 4) + "\" font-family=\"sans-serif\" font-size=\"11\">" +
       fmt("%.4g", ymax) + "</text>\n";
  s += "<text x=\"4\" y=\"" + fmt("%.2f", py(ymin)) + "\" font-family=\"sans-serif\" font-size=\"11\">" +
       fmt("%.4g", ymin) + "</text>\n";
  s += "<text x=\"" + fmt("%g", W - 260) + "\" y=\"" + fmt("%g", H - 12) +
       "\" font-family=\"sans-serif\" font-size=\"11\">black: truth, red: mean, blue: band</text>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace stgin::eval
