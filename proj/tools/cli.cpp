#include "cli.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "stgin/baselines.hpp"
#include "stgin/benchmark.hpp"
#include "stgin/config.hpp"
#include "stgin/csv.hpp"
#include "stgin/data.hpp"
#include "stgin/error.hpp"
#include "stgin/graph.hpp"
#include "stgin/model.hpp"
#include "stgin/simd/kernels.hpp"
#include "stgin/training.hpp"

namespace stgin::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::string sha256_file(const std::string& path) {
  const std::string bytes = csv::read_file(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::io, "sha256 failed for " + path);
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

namespace {

constexpr const char* kOutEnv = "STGIN_OUTPUT_DIR";

/// Collects what a run read and wrote, then writes <out>/run.json.
class RunManifest {
 public:
  RunManifest(std::string subcommand, std::vector<std::string> args)
      : subcommand_(std::move(subcommand)), args_(std::move(args)), started_(std::chrono::steady_clock::now()) {}

  Json config = Json::object();
  Json seeds = Json::object();

  void input(const std::string& role, const fs::path& p) { inputs_.push_back({role, p}); }
  void output(const std::string& role, const fs::path& p) { outputs_.push_back({role, p}); }

  void write(const fs::path& dir) const {
    Json j;
    j["subcommand"] = subcommand_;
    j["arguments"] = args_;
    j["config"] = config;
    j["seeds"] = seeds;
    j["simd"] = simd::kernels().name;
    j["inputs"] = files(inputs_);
    j["outputs"] = files(outputs_);
    j["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    csv::write_file(dir / "run.json", j.dump(2) + "\n");
  }

 private:
  static Json files(const std::vector<std::pair<std::string, fs::path>>& list) {
    Json arr = Json::array();
    for (const auto& [role, p] : list) {
      if (fs::is_directory(p)) {
        Json entries = Json::object();
        std::vector<fs::path> names;
        for (const auto& e : fs::directory_iterator(p))
          if (e.is_regular_file()) names.push_back(e.path());
        std::sort(names.begin(), names.end());
        for (const fs::path& f : names) entries[f.filename().string()] = sha256_file(f.string());
        arr.push_back(Json{{"role", role}, {"path", p.string()}, {"sha256", entries}});
      } else {
        arr.push_back(Json{{"role", role}, {"path", p.string()}, {"sha256", sha256_file(p.string())}});
      }
    }
    return arr;
  }

  std::string subcommand_;
  std::vector<std::string> args_;
  std::chrono::steady_clock::time_point started_;
  std::vector<std::pair<std::string, fs::path>> inputs_, outputs_;
};

fs::path resolve_out(const std::string& flag, const std::string& subcommand) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutEnv); env && *env) return fs::path(env) / subcommand;
  throw Error(ErrorKind::invalid_argument, "--out is required (or set " + std::string(kOutEnv) + ")");
}

SensorGraph load_graph(const std::string& path) { return SensorGraph(csv::read_matrix(path)); }

TrafficTensor load_data(const std::string& path, const std::string& mask_path, UnitTag unit, RunManifest& m) {
  TrafficTensor data = load_csv_dataset(path, unit);
  m.input("data", path);
  if (!mask_path.empty()) {
    const Mask mask = load_mask(mask_path);
    if (mask.rows() != data.sensors() || mask.cols() != data.steps()) {
      throw Error(ErrorKind::shape, "mask is " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
                                        " but data is " + std::to_string(data.sensors()) + "x" +
                                        std::to_string(data.steps()));
    }
    data = apply_mask(data, mask);
    m.input("mask", mask_path);
  }
  return data;
}

/// Flags that override the config file.
struct ConfigFlags {
  std::string path;
  std::optional<std::size_t> epochs, window, patience;
  std::optional<double> lr, lambda, hide_rate;

  void add(CLI::App* app) {
    app->add_option("--config", path, "JSON config file (see README)")->check(CLI::ExistingFile);
    app->add_option("--epochs", epochs, "Override training.max_epochs");
    app->add_option("--lr", lr, "Override training.learning_rate");
    app->add_option("--window", window, "Override training.window");
    app->add_option("--patience", patience, "Override training.patience");
    app->add_option("--lambda", lambda, "Override training.lambda");
    app->add_option("--hide-rate", hide_rate, "Override training.hide_rate");
  }

  ExperimentConfig resolve(RunManifest& m) const {
    ExperimentConfig c = path.empty() ? ExperimentConfig{} : load_config(path);
    if (!path.empty()) m.input("config", path);
    if (epochs) c.training.max_epochs = *epochs;
    if (window) c.training.window = *window;
    if (patience) c.training.patience = *patience;
    if (lr) c.training.learning_rate = *lr;
    if (lambda) c.training.lambda = *lambda;
    if (hide_rate) c.training.hide_rate = *hide_rate;
    c.training.validate();
    m.config = to_json(c);
    return c;
  }
};

template <class T>
std::vector<T> parse_list(const std::vector<std::string>& items, const std::function<T(const std::string&)>& parse) {
  std::vector<T> out;
  for (const std::string& s : items) out.push_back(parse(s));
  return out;
}

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::vector<std::string> args;
};

// ---------------------------------------------------------------------------
// Subcommands

struct SynthCmd {
  SynthSpec spec;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--nodes", spec.nodes, "Number of sensors")->capture_default_str();
    app->add_option("--steps", spec.steps, "Number of 5-minute steps")->capture_default_str();
    app->add_option("--noise-std", spec.noise_std, "Gaussian noise standard deviation")->capture_default_str();
    app->add_option("--seed", spec.seed, "Random seed")->capture_default_str();
    app->add_option("--threshold", spec.threshold, "Adjacency weight threshold")->capture_default_str();
    app->add_option("--out", out, "Output directory");
  }

  void run(Context& ctx) {
    RunManifest m("synth", ctx.args);
    const fs::path dir = resolve_out(out, "synth");
    const SynthDataset ds = synth_generate(spec);
    save_csv_dataset(dir / "data.csv", ds.data);
    csv::write_matrix(dir / "clean.csv", ds.clean);
    csv::write_matrix(dir / "distances.csv", ds.distances);
    csv::write_matrix(dir / "adjacency.csv", ds.graph.adjacency());
    const Json meta{{"nodes", spec.nodes},
                    {"steps", spec.steps},
                    {"seed", spec.seed},
                    {"noise_std", csv::format_double(spec.noise_std)},
                    {"threshold", csv::format_double(spec.threshold)},
                    {"bandwidth", csv::format_double(ds.graph.bandwidth())},
                    {"unit", to_string(ds.data.unit)}};
    csv::write_file(dir / "synth.json", meta.dump(2) + "\n");
    m.config = meta;
    m.seeds["data"] = spec.seed;
    for (const char* f : {"data.csv", "clean.csv", "distances.csv", "adjacency.csv", "synth.json"}) m.output(f, dir / f);
    m.write(dir);
    ctx.out << "wrote " << spec.nodes << "x" << spec.steps << " dataset to " << dir.string() << "\n";
  }
};

struct MaskCmd {
  std::string data, regime = "random", out;
  std::size_t nodes = 0, steps = 0;
  double rate = 0.3;
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    app->add_option("--data", data, "Dataset CSV giving the shape")->check(CLI::ExistingFile);
    app->add_option("--nodes", nodes, "Sensors (without --data)");
    app->add_option("--steps", steps, "Steps (without --data)");
    app->add_option("--regime", regime, "random or nonrandom")->capture_default_str();
    app->add_option("--rate", rate, "Missing fraction (entries or sensors)")->capture_default_str();
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
    app->add_option("--out", out, "Output directory");
  }

  void run(Context& ctx) {
    RunManifest m("mask", ctx.args);
    const fs::path dir = resolve_out(out, "mask");
    std::size_t n = nodes, t = steps;
    if (!data.empty()) {
      const TrafficTensor d = load_csv_dataset(data, UnitTag::synthetic);
      n = d.sensors();
      t = d.steps();
      m.input("data", data);
    }
    if (n == 0 || t == 0) throw Error(ErrorKind::invalid_argument, "mask: give --data or both --nodes and --steps");
    const MaskSpec spec{parse_regime(regime), rate, seed};
    const Mask mask = generate_mask(spec, n, t);
    save_mask(dir / "mask.csv", mask);
    m.config = Json{{"regime", regime}, {"rate", rate}, {"nodes", n}, {"steps", t}};
    m.seeds["mask"] = seed;
    m.output("mask", dir / "mask.csv");
    m.write(dir);
    ctx.out << "missing=" << mask.count_missing() << " of " << n * t << "\n";
  }
};

struct TrainCmd {
  std::string data, mask, graph, variant = "stgin", unit = "synthetic", out;
  std::uint64_t seed = 0;
  ConfigFlags config;

  void add(CLI::App* app) {
    app->add_option("--data", data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    app->add_option("--mask", mask, "Mask CSV (1 = keep); hidden entries are never seen")->check(CLI::ExistingFile);
    app->add_option("--graph", graph, "Adjacency CSV")->required()->check(CLI::ExistingFile);
    app->add_option("--variant", variant, "stgin, bigru (temporal-only) or gcn (spatial-only)")->capture_default_str();
    app->add_option("--unit", unit, "speed, flow or synthetic")->capture_default_str();
    app->add_option("--seed", seed, "Initialization and training seed")->capture_default_str();
    app->add_option("--out", out, "Output directory");
    config.add(app);
  }

  void run(Context& ctx) {
    RunManifest m("train", ctx.args);
    const fs::path dir = resolve_out(out, "train");
    const ExperimentConfig cfg = config.resolve(m);
    const TrafficTensor d = load_data(data, mask, parse_unit(unit), m);
    const SensorGraph g = load_graph(graph);
    m.input("graph", graph);
    const auto fit = eval::fit_model(d, g, cfg, model::parse_variant(variant), seed);
    model::save_checkpoint(dir / "checkpoint", fit.checkpoint);
    train::write_report_csv(dir / "train_report.csv", fit.report);
    m.seeds["model"] = seed;
    m.output("checkpoint", dir / "checkpoint");
    m.output("train_report", dir / "train_report.csv");
    m.write(dir);
    const auto& best = fit.report.epochs.at(fit.report.best_epoch - 1);
    ctx.out << "epochs=" << fit.report.epochs.size() << " best_epoch=" << fit.report.best_epoch
            << " combined=" << csv::format_double(best.combined) << (fit.report.early_stopped ? " early_stopped" : "")
            << "\n";
  }
};

struct ImputeCmd {
  std::string checkpoint, data, mask, graph, out;

  void add(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
    app->add_option("--data", data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    app->add_option("--mask", mask, "Mask CSV (1 = keep)")->check(CLI::ExistingFile);
    app->add_option("--graph", graph, "Adjacency CSV")->required()->check(CLI::ExistingFile);
    app->add_option("--out", out, "Output directory");
  }

  void run(Context& ctx) {
    RunManifest m("impute", ctx.args);
    const fs::path dir = resolve_out(out, "impute");
    const model::Checkpoint ckpt = model::load_checkpoint(checkpoint);
    m.input("checkpoint", checkpoint);
    const TrafficTensor d = load_data(data, mask, ckpt.unit, m);
    const SensorGraph g = load_graph(graph);
    m.input("graph", graph);
    const model::GaussianField f = eval::impute_field(ckpt, d, g);
    csv::write_matrix(dir / "mu.csv", f.mu);
    csv::write_matrix(dir / "sigma2.csv", f.sigma2);
    TrafficTensor filled = d;
    for (std::size_t r = 0; r < d.sensors(); ++r)
      for (std::size_t c = 0; c < d.steps(); ++c)
        if (!d.observed.observed(r, c)) {
          filled.values(r, c) = f.mu(r, c);
          filled.observed.set(r, c, true);
        }
    save_csv_dataset(dir / "imputed.csv", filled);
    m.config = Json{{"unit", to_string(ckpt.unit)}, {"window", ckpt.window}};
    for (const char* name : {"mu.csv", "sigma2.csv", "imputed.csv"}) m.output(name, dir / name);
    m.write(dir);
    ctx.out << "imputed " << d.observed.count_missing() << " entries\n";
  }
};

struct EvaluateCmd {
  std::string data, graph, unit = "synthetic", space = "normalized", out;
  std::vector<std::string> methods{"average", "mean", "svd", "bigru", "gcn", "stgin"};
  std::vector<std::string> regimes{"random"};
  std::vector<double> rates{0.3};
  std::vector<std::uint64_t> seeds{0};
  double level = 0.95;
  std::size_t svd_rank = 0;
  ConfigFlags config;
  // Scoring an existing imputation instead of running the grid.
  std::string mask, mu, sigma2;

  void add(CLI::App* app) {
    app->add_option("--data", data, "Dataset CSV (ground truth)")->required()->check(CLI::ExistingFile);
    app->add_option("--graph", graph, "Adjacency CSV (needed by bigru, gcn, stgin)")->check(CLI::ExistingFile);
    app->add_option("--unit", unit, "speed, flow or synthetic")->capture_default_str();
    app->add_option("--methods", methods, "Comma list of average,mean,svd,bigru,gcn,stgin")->delimiter(',');
    app->add_option("--regimes", regimes, "Comma list of random,nonrandom")->delimiter(',');
    app->add_option("--rates", rates, "Comma list of missing rates")->delimiter(',');
    app->add_option("--seeds", seeds, "Comma list of seeds")->delimiter(',');
    app->add_option("--level", level, "Interval level for coverage")->capture_default_str();
    app->add_option("--space", space, "normalized or physical metrics")->capture_default_str();
    app->add_option("--svd-rank", svd_rank, "SVD rank (0 = automatic)")->capture_default_str();
    app->add_option("--mask", mask, "Score files instead: mask used for imputation")->check(CLI::ExistingFile);
    app->add_option("--mu", mu, "Score files instead: imputed means")->check(CLI::ExistingFile);
    app->add_option("--sigma2", sigma2, "Score files instead: imputed variances")->check(CLI::ExistingFile);
    app->add_option("--out", out, "Output directory");
    config.add(app);
  }

  void run(Context& ctx) {
    RunManifest m("evaluate", ctx.args);
    const fs::path dir = resolve_out(out, "evaluate");
    const TrafficTensor truth = load_csv_dataset(data, parse_unit(unit));
    m.input("data", data);
    eval::EvalReport report = mu.empty() ? grid(truth, m, ctx) : score_files(truth, m);
    eval::write_report_csv(dir / "eval.csv", report);
    const std::string table = eval::format_tables(report);
    csv::write_file(dir / "table.txt", table);
    m.output("eval", dir / "eval.csv");
    m.output("table", dir / "table.txt");
    m.write(dir);
    ctx.out << table;
  }

  eval::EvalReport grid(const TrafficTensor& truth, RunManifest& m, Context& ctx) {
    if (!mask.empty() || !sigma2.empty()) throw Error(ErrorKind::invalid_argument, "evaluate: --mask/--sigma2 need --mu");
    eval::BenchmarkSpec spec;
    spec.methods = parse_list<eval::Method>(methods, eval::parse_method);
    spec.regimes = parse_list<MissingRegime>(regimes, parse_regime);
    spec.rates = rates;
    spec.seeds = seeds;
    spec.level = level;
    spec.space = eval::parse_space(space);
    spec.svd.rank = svd_rank;
    spec.config = config.resolve(m);
    SensorGraph g;
    bool deep = false;
    for (eval::Method meth : spec.methods) deep = deep || !eval::random_only(meth);
    if (deep && graph.empty()) throw Error(ErrorKind::invalid_argument, "evaluate: --graph is required for model methods");
    if (!graph.empty()) {
      g = load_graph(graph);
      m.input("graph", graph);
    } else {
      g = SensorGraph(Tensor2D::identity(truth.sensors()));
    }
    m.config["grid"] = Json{{"methods", methods}, {"regimes", regimes}, {"rates", rates},
                            {"level", level},     {"space", space},     {"svd_rank", svd_rank}};
    m.seeds["cells"] = seeds;
    return eval::run_benchmark(truth, g, spec, [&](const std::string& s) { ctx.err << s << "\n"; });
  }

  eval::EvalReport score_files(const TrafficTensor& truth, RunManifest& m) {
    if (mask.empty()) throw Error(ErrorKind::invalid_argument, "evaluate: --mu needs --mask");
    if (methods.size() != 1 || regimes.size() != 1) {
      throw Error(ErrorKind::invalid_argument, "evaluate: scoring files takes one --methods and one --regimes label");
    }
    const Mask used = load_mask(mask);
    m.input("mask", mask);
    model::GaussianField f{csv::read_matrix(mu), Tensor2D()};
    m.input("mu", mu);
    if (used.rows() != truth.sensors() || used.cols() != truth.steps() || !f.mu.same_shape(truth.values)) {
      throw Error(ErrorKind::shape, "evaluate: data, mask and mu shapes differ");
    }
    const Mask scored = evaluation_mask(truth, used);
    if (scored.count_observed() == 0) throw Error(ErrorKind::invalid_argument, "evaluate: nothing to score");
    // Metrics in the normalization the model would have fitted on the masked data.
    const NormalizationParams norm = eval::parse_space(space) == eval::MetricSpace::normalized
                                         ? fit_normalization(apply_mask(truth, used), config.resolve(m).scheme)
                                         : NormalizationParams{};
    auto to_space = [&](const Tensor2D& v) {
      Tensor2D o(v.rows(), v.cols());
      for (std::size_t i = 0; i < v.size(); ++i) o[i] = norm.apply(v[i]);
      return o;
    };
    const Tensor2D y = to_space(truth.values);
    f.mu = to_space(f.mu);
    eval::EvalCell cell = eval::score_cell(y, f.mu, scored);
    if (!sigma2.empty()) {
      f.sigma2 = csv::read_matrix(sigma2);
      m.input("sigma2", sigma2);
      if (!f.sigma2.same_shape(truth.values)) throw Error(ErrorKind::shape, "evaluate: sigma2 shape differs");
      for (std::size_t i = 0; i < f.sigma2.size(); ++i) f.sigma2[i] /= norm.scale * norm.scale;
      cell.coverage = eval::interval_coverage(f, y, scored, level);
    }
    cell.method = eval::parse_method(methods.front());
    cell.regime = parse_regime(regimes.front());
    cell.rate = static_cast<double>(used.count_missing()) / static_cast<double>(used.rows() * used.cols());
    m.config = Json{{"mode", "score-files"}, {"space", space}, {"level", level}};
    return eval::EvalReport{{cell}, {}};
  }
};

struct GradcheckCmd {
  train::GradCheckSpec spec;
  std::string variant = "stgin", config_path;
  double tol = 1e-4;

  void add(CLI::App* app) {
    app->add_option("--nodes", spec.nodes, "Sensors in the random instance")->capture_default_str();
    app->add_option("--steps", spec.steps, "Steps in the random instance")->capture_default_str();
    app->add_option("--seed", spec.seed, "Instance and parameter seed")->capture_default_str();
    app->add_option("--variant", variant, "stgin, bigru or gcn")->capture_default_str();
    app->add_option("--fd-step", spec.h, "Finite-difference step")->capture_default_str();
    app->add_option("--tol", tol, "Pass threshold on the relative error")->capture_default_str();
    app->add_option("--config", config_path, "JSON config file for the model section")->check(CLI::ExistingFile);
  }

  int run(Context& ctx) {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    cfg.model.variant = model::parse_variant(variant);
    spec.lambda = cfg.training.lambda;
    spec.nll = cfg.training.nll;
    const ad::GradCheckResult r = train::model_gradient_check(cfg.model, spec);
    const bool pass = r.worst_relative_error < tol;
    ctx.out << (pass ? "pass" : "fail") << " worst_relative_error=" << csv::format_double(r.worst_relative_error)
            << " at=" << r.worst_coordinate << " coordinates=" << r.coordinates << "\n";
    if (!pass) {
      throw Error(ErrorKind::numeric, "gradient check failed: worst relative error " +
                                          csv::format_double(r.worst_relative_error) + " at " + r.worst_coordinate);
    }
    return 0;
  }
};

struct ReportCmd {
  std::string eval_csv, data, mu, sigma2, mask, unit = "synthetic", out;
  std::vector<std::size_t> sensors{0};
  std::size_t day = 0, steps_per_day = 288;
  double level = 0.95;

  void add(CLI::App* app) {
    app->add_option("--eval", eval_csv, "eval.csv from evaluate")->check(CLI::ExistingFile);
    app->add_option("--data", data, "Ground-truth dataset CSV for plots")->check(CLI::ExistingFile);
    app->add_option("--mu", mu, "Imputed means for plots")->check(CLI::ExistingFile);
    app->add_option("--sigma2", sigma2, "Imputed variances for plots")->check(CLI::ExistingFile);
    app->add_option("--mask", mask, "Mask used for imputation (hidden points drawn hollow)")->check(CLI::ExistingFile);
    app->add_option("--unit", unit, "speed, flow or synthetic")->capture_default_str();
    app->add_option("--sensors", sensors, "Comma list of sensor rows to plot")->delimiter(',');
    app->add_option("--day", day, "Day index to plot")->capture_default_str();
    app->add_option("--steps-per-day", steps_per_day, "Steps per day")->capture_default_str();
    app->add_option("--level", level, "Interval level")->capture_default_str();
    app->add_option("--out", out, "Output directory");
  }

  void run(Context& ctx) {
    RunManifest m("report", ctx.args);
    const fs::path dir = resolve_out(out, "report");
    const bool plot = !data.empty() || !mu.empty() || !sigma2.empty();
    if (eval_csv.empty() && !plot) throw Error(ErrorKind::invalid_argument, "report: give --eval and/or --data --mu --sigma2");
    if (!eval_csv.empty()) {
      const std::string table = eval::format_tables(eval::read_report_csv(eval_csv));
      m.input("eval", eval_csv);
      csv::write_file(dir / "table.txt", table);
      m.output("table", dir / "table.txt");
      ctx.out << table;
    }
    if (plot) {
      if (data.empty() || mu.empty() || sigma2.empty()) {
        throw Error(ErrorKind::invalid_argument, "report: plots need --data, --mu and --sigma2");
      }
      const TrafficTensor truth = load_csv_dataset(data, parse_unit(unit));
      const model::GaussianField f{csv::read_matrix(mu), csv::read_matrix(sigma2)};
      const Mask used = mask.empty() ? truth.observed : load_mask(mask);
      for (const auto& [role, p] : {std::pair{"data", data}, {"mu", mu}, {"sigma2", sigma2}}) m.input(role, p);
      if (!mask.empty()) m.input("mask", mask);
      if (used.rows() != truth.sensors() || used.cols() != truth.steps()) {
        throw Error(ErrorKind::shape, "report: mask shape differs from data");
      }
      const std::size_t begin = day * steps_per_day;
      if (begin >= truth.steps()) throw Error(ErrorKind::invalid_argument, "report: day out of range");
      const std::size_t count = std::min(steps_per_day, truth.steps() - begin);
      for (std::size_t s : sensors) {
        const std::string name = "interval_sensor" + std::to_string(s) + "_day" + std::to_string(day) + ".svg";
        csv::write_file(dir / name, eval::interval_svg(truth, f, used, s, begin, count, level));
        m.output(name, dir / name);
        ctx.out << "wrote " << (dir / name).string() << "\n";
      }
    }
    m.write(dir);
  }
};

std::string error_line(const std::string& kind, const std::string& message) {
  return Json{{"error", Json{{"kind", kind}, {"message", message}}}}.dump();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatio-temporal graph imputation with uncertainty", "stgin"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  SynthCmd synth;
  MaskCmd mask;
  TrainCmd trainer;
  ImputeCmd impute;
  EvaluateCmd evaluate;
  GradcheckCmd gradcheck;
  ReportCmd report;
  CLI::App* c_synth = app.add_subcommand("synth", "Generate the synthetic ring dataset");
  CLI::App* c_mask = app.add_subcommand("mask", "Generate a missing-data mask");
  CLI::App* c_train = app.add_subcommand("train", "Train a model and write a checkpoint");
  CLI::App* c_impute = app.add_subcommand("impute", "Write mu.csv and sigma2.csv from a checkpoint");
  CLI::App* c_eval = app.add_subcommand("evaluate", "Run the benchmark grid or score imputation files");
  CLI::App* c_grad = app.add_subcommand("gradcheck", "Finite-difference check of the model gradients");
  CLI::App* c_report = app.add_subcommand("report", "Render tables and interval plots");
  synth.add(c_synth);
  mask.add(c_mask);
  trainer.add(c_train);
  impute.add(c_impute);
  evaluate.add(c_eval);
  gradcheck.add(c_grad);
  report.add(c_report);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << error_line("usage", e.what()) << "\n";
    return 2;
  }

  Context ctx{out, err, args};
  try {
    if (c_synth->parsed()) synth.run(ctx);
    else if (c_mask->parsed()) mask.run(ctx);
    else if (c_train->parsed()) trainer.run(ctx);
    else if (c_impute->parsed()) impute.run(ctx);
    else if (c_eval->parsed()) evaluate.run(ctx);
    else if (c_grad->parsed()) gradcheck.run(ctx);
    else if (c_report->parsed()) report.run(ctx);
    return 0;
  } catch (const Error& e) {
    err << error_line(to_string(e.kind()), e.what()) << "\n";
  } catch (const fs::filesystem_error& e) {
    err << error_line("io", e.what()) << "\n";
  } catch (const std::exception& e) {
    err << error_line("internal", e.what()) << "\n";
  }
  return 1;
}

}  // namespace stgin::cli
