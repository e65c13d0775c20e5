// One PASS/FAIL line per acceptance criterion; exits nonzero on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "stgin/baselines.hpp"
#include "stgin/config.hpp"
#include "stgin/benchmark.hpp"
#include "stgin/csv.hpp"
#include "stgin/data.hpp"
#include "stgin/graph.hpp"
#include "stgin/model.hpp"
#include "stgin/rng.hpp"
#include "stgin/training.hpp"

using namespace stgin;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::printf("%s %d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), seconds_since(t0));
  std::fflush(stdout);
  failures += !o.pass;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Tensor2D random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo, double hi) {
  Tensor2D t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * uniform_unit(rng);
  return t;
}

SensorGraph random_planar_graph(Rng& rng, std::size_t n) {
  const Tensor2D pos = random_matrix(rng, n, 2, 0.0, 1.0);
  Tensor2D dist(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) dist(i, j) = std::hypot(pos(i, 0) - pos(j, 0), pos(i, 1) - pos(j, 1));
  return build_gaussian_adjacency(dist, n > 1 ? default_bandwidth(dist) : 1.0, 0.1);
}

Mask random_mask(Rng& rng, std::size_t r, std::size_t c, std::uint64_t one_in) {
  Mask m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m.set(i, j, uniform_below(rng, one_in) != 0);
  return m;
}

// Brute-force oracles for the two simple imputers.
double observed_mean(const Tensor2D& x, const Mask& m, std::size_t r0, std::size_t r1, std::size_t c0,
                     std::size_t c1, bool& any) {
  double s = 0.0;
  std::size_t k = 0;
  for (std::size_t r = r0; r < r1; ++r)
    for (std::size_t c = c0; c < c1; ++c)
      if (m.observed(r, c)) s += x(r, c), ++k;
  any = k > 0;
  return k ? s / k : 0.0;
}

Tensor2D oracle_average(const Tensor2D& x, const Mask& m) {
  bool any = false;
  const double global = observed_mean(x, m, 0, x.rows(), 0, x.cols(), any);
  Tensor2D out = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c)
      if (!m.observed(r, c)) {
        const double v = observed_mean(x, m, 0, x.rows(), c, c + 1, any);
        out(r, c) = any ? v : global;
      }
  return out;
}

Tensor2D oracle_mean(const Tensor2D& x, const Mask& m, std::size_t day) {
  bool any = false;
  const double global = observed_mean(x, m, 0, x.rows(), 0, x.cols(), any);
  Tensor2D out = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c)
      if (!m.observed(r, c)) {
        const std::size_t d0 = c / day * day;
        const double v = observed_mean(x, m, r, r + 1, d0, std::min(x.cols(), d0 + day), any);
        out(r, c) = any ? v : global;
      }
  return out;
}

bool same_file(const fs::path& a, const fs::path& b) { return csv::read_file(a) == csv::read_file(b); }

ExperimentConfig acceptance_config() {
  ExperimentConfig c;
  c.training.learning_rate = 1e-2;
  c.training.max_epochs = 200;
  c.training.window = 48;
  c.training.patience = 20;
  return c;
}

const eval::EvalCell* find_cell(const eval::EvalReport& r, eval::Method m) {
  for (const eval::EvalCell& c : r.cells)
    if (c.method == m) return &c;
  throw std::runtime_error(std::string("missing cell for ") + eval::display_name(m));
}

}  // namespace

int main() {
  criterion(1, "gradient check N=5 T=8", [] {
    const auto t0 = Clock::now();
    const ad::GradCheckResult r = train::model_gradient_check(model::ModelConfig{}, train::GradCheckSpec{});
    const double secs = seconds_since(t0);
    return Outcome{r.worst_relative_error < 1e-4 && secs < 60.0,
                   "worst relative error " + fmt("%.3g", r.worst_relative_error) + " at " + r.worst_coordinate +
                       " over " + std::to_string(r.coordinates) + " coordinates in " + fmt("%.1f", secs) + " s"};
  });

  criterion(2, "attention rows on 100 random graphs", [] {
    Rng rng(2);
    double worst_sum = 0.0;
    std::size_t off_support = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 1 + uniform_below(rng, 20);
      const SensorGraph g = random_planar_graph(rng, n);
      const model::ModelParams p = model::init_params(model::ModelConfig{}, trial);
      const Tensor2D alpha = model::gat_attention(p, random_matrix(rng, n, 1, -2.0, 2.0), g);
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          s += alpha(i, j);
          if (i != j && g.adjacency()(i, j) == 0.0 && alpha(i, j) != 0.0) ++off_support;
        }
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      }
    }
    return Outcome{worst_sum < 1e-9 && off_support == 0,
                   "max |row sum - 1| " + fmt("%.3g", worst_sum) + ", " + std::to_string(off_support) +
                       " weights outside N(i)+{i}"};
  });

  criterion(3, "masked-loss exclusivity", [] {
    Rng rng(3);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 1 + uniform_below(rng, 8), t = 1 + uniform_below(rng, 16);
      const model::GaussianField f{random_matrix(rng, n, t, -1, 1), random_matrix(rng, n, t, 0.1, 2)};
      const Tensor2D x = random_matrix(rng, n, t, -1, 1);
      Mask m = random_mask(rng, n, t, 3);
      m.set(0, 0, true);
      Tensor2D y = x;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < t; ++j)
          if (!m.observed(i, j)) y(i, j) += 1e3 * (uniform_unit(rng) - 0.5);
      worst = std::max({worst, std::abs(train::reconstruction_loss(f, x, m) - train::reconstruction_loss(f, y, m)),
                        std::abs(train::nll_loss(f, x, m) - train::nll_loss(f, y, m)),
                        std::abs(train::nll_loss(f, x, m, train::NllAggregation::sum) -
                                 train::nll_loss(f, y, m, train::NllAggregation::sum))});
    }
    return Outcome{worst == 0.0, "max loss change " + fmt("%.3g", worst) + " over 100 instances"};
  });

  criterion(4, "NLL anchors", [] {
    const Mask one(1, 1);
    const double a = train::nll_loss({Tensor2D{{0.4}}, Tensor2D{{1.0 / (2.0 * std::numbers::pi)}}}, Tensor2D{{0.4}}, one);
    const double b = train::nll_loss({Tensor2D{{0.4}}, Tensor2D{{1.0}}}, Tensor2D{{0.4}}, one);
    const double b_ref = 0.5 * std::log(2.0 * std::numbers::pi);
    return Outcome{std::abs(a) <= 1e-12 && std::abs(b - b_ref) <= 1e-12,
                   "NLL(sigma2=1/2pi) " + fmt("%.3g", a) + ", NLL(sigma2=1) - ln(2pi)/2 " + fmt("%.3g", b - b_ref)};
  });

  const SynthDataset synth = synth_generate(SynthSpec{});  // n=20, t=576, noise 2, seed 1
  eval::EvalReport random_run;
  criterion(5, "synthetic imputation quality at 30% random missing", [&] {
    const auto t0 = Clock::now();
    eval::BenchmarkSpec spec;
    spec.methods = {eval::Method::average, eval::Method::mean, eval::Method::gcn, eval::Method::bigru,
                    eval::Method::stgin};
    spec.regimes = {MissingRegime::random};
    spec.rates = {0.3};
    spec.seeds = {0};
    spec.config = acceptance_config();
    random_run = eval::run_benchmark(synth.data, synth.graph, spec);
    const double secs = seconds_since(t0);
    const double st = find_cell(random_run, eval::Method::stgin)->mse;
    const double avg = find_cell(random_run, eval::Method::average)->mse;
    const double mean = find_cell(random_run, eval::Method::mean)->mse;
    const double gcn = find_cell(random_run, eval::Method::gcn)->mse;
    const double gru = find_cell(random_run, eval::Method::bigru)->mse;
    std::string d = "MSE ST-GIN " + fmt("%.5g", st) + ", Mean " + fmt("%.5g", mean) + ", Average " + fmt("%.5g", avg) +
                    ", spatial-only " + fmt("%.5g", gcn) + ", temporal-only " + fmt("%.5g", gru) + " in " +
                    fmt("%.0f", secs) + " s";
    return Outcome{st < mean && st < avg && st <= gcn && st <= gru && secs < 600.0, d};
  });

  criterion(6, "non-random regime at 20% sensors missing", [&] {
    const auto t0 = Clock::now();
    eval::BenchmarkSpec spec;
    spec.methods = {eval::Method::bigru, eval::Method::stgin};
    spec.regimes = {MissingRegime::nonrandom};
    spec.rates = {0.2};
    spec.seeds = {0};
    spec.config = acceptance_config();
    const eval::EvalReport r = eval::run_benchmark(synth.data, synth.graph, spec);
    const double secs = seconds_since(t0);
    const double st = find_cell(r, eval::Method::stgin)->mse, gru = find_cell(r, eval::Method::bigru)->mse;
    return Outcome{st < gru && secs < 600.0, "MSE ST-GIN " + fmt("%.5g", st) + ", temporal-only " + fmt("%.5g", gru) +
                                                 " in " + fmt("%.0f", secs) + " s"};
  });

  criterion(7, "95% interval coverage on the criterion 5 run", [&] {
    const eval::EvalCell* c = find_cell(random_run, eval::Method::stgin);
    if (!c->coverage) return Outcome{false, "no coverage recorded"};
    return Outcome{*c->coverage >= 0.90 && *c->coverage <= 0.99,
                   "coverage " + fmt("%.4f", *c->coverage) + " over " + std::to_string(c->scored) + " held-out entries"};
  });

  criterion(8, "baseline oracles", [] {
    Rng rng(8);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 1 + uniform_below(rng, 6), t = 1 + uniform_below(rng, 20);
      const std::size_t day = 1 + uniform_below(rng, 8);
      const Mask m = random_mask(rng, n, t, 3);
      Tensor2D x = random_matrix(rng, n, t, 0, 100);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < t; ++j)
          if (!m.observed(i, j)) x(i, j) = 0.0;
      if (m.count_observed() == 0) continue;
      mismatches += !(eval::impute_average(x, m) == oracle_average(x, m));
      mismatches += !(eval::impute_mean(x, m, day) == oracle_mean(x, m, day));
    }
    Tensor2D rank1(12, 15);
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t j = 0; j < 15; ++j) rank1(i, j) = (1.0 + 0.1 * i) * (0.5 + std::sin(0.3 * j));
    const Mask m = random_missing_mask(12, 15, 0.2, 8);
    Tensor2D x = rank1;
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t j = 0; j < 15; ++j)
        if (!m.observed(i, j)) x(i, j) = 0.0;
    eval::SvdOptions o;
    o.rank = 1;
    o.max_iterations = 5000;
    o.tolerance = 1e-14;
    const eval::SvdResult s = eval::impute_svd(x, m, o);
    double worst = 0.0;
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t j = 0; j < 15; ++j)
        if (!m.observed(i, j)) worst = std::max(worst, std::abs(s.imputed(i, j) - rank1(i, j)));
    return Outcome{mismatches == 0 && worst < 1e-6,
                   std::to_string(mismatches) + " oracle mismatches over 100 instances, SVD rank-1 max error " +
                       fmt("%.3g", worst) + " after " + std::to_string(s.iterations) + " iterations"};
  });

  criterion(9, "pipeline determinism", [] {
    const fs::path root = fs::temp_directory_path() / "stgin_acceptance_determinism";
    fs::remove_all(root);
    auto run = [](const std::vector<std::string>& args) {
      std::ostringstream out, err;
      if (cli::run_cli(args, out, err) != 0) throw std::runtime_error(err.str());
    };
    for (const char* sub : {"a", "b"}) {
      const fs::path d = root / sub;
      run({"synth", "--seed", "1", "--out", (d / "synth").string()});
      run({"mask", "--data", (d / "synth/data.csv").string(), "--rate", "0.3", "--seed", "7", "--out",
           (d / "mask").string()});
      run({"train", "--data", (d / "synth/data.csv").string(), "--mask", (d / "mask/mask.csv").string(), "--graph",
           (d / "synth/adjacency.csv").string(), "--epochs", "50", "--lr", "0.01", "--seed", "3", "--out",
           (d / "train").string()});
      run({"impute", "--checkpoint", (d / "train/checkpoint").string(), "--data", (d / "synth/data.csv").string(),
           "--mask", (d / "mask/mask.csv").string(), "--graph", (d / "synth/adjacency.csv").string(), "--out",
           (d / "impute").string()});
    }
    std::size_t compared = 0, differing = 0;
    for (const auto& e : fs::directory_iterator(root / "a/train/checkpoint")) {
      ++compared;
      differing += !same_file(e.path(), root / "b/train/checkpoint" / e.path().filename());
    }
    for (const char* f : {"impute/mu.csv", "impute/sigma2.csv"}) {
      ++compared;
      differing += !same_file(root / "a" / f, root / "b" / f);
    }
    return Outcome{differing == 0 && compared > 2,
                   std::to_string(differing) + " of " + std::to_string(compared) + " files differ between two runs"};
  });

  criterion(10, "mask arithmetic", [] {
    const std::size_t missing = random_missing_mask(207, 288, 0.3, 10).count_missing();
    const Mask nr = nonrandom_missing_mask(207, 288, 0.1, 10);
    std::size_t blank_rows = 0;
    for (std::size_t i = 0; i < 207; ++i) {
      std::size_t k = 0;
      for (std::size_t t = 0; t < 288; ++t) k += !nr.observed(i, t);
      blank_rows += k == 288;
    }
    const bool rows_ok = blank_rows == 21 && nr.count_missing() == 21 * 288;
    return Outcome{missing == 17883 && rows_ok,
                   "random 0.3 on 207x288 leaves " + std::to_string(missing) +
                       " missing (expected 17883; round(0.3*59616) is 17885), non-random 0.1 blanks " +
                       std::to_string(blank_rows) + " full rows"};
  });

  criterion(11, "flow clipping", [] {
    Rng rng(11);
    const model::GaussianField f{random_matrix(rng, 20, 50, -5, 5), random_matrix(rng, 20, 50, 0.1, 1)};
    const model::GaussianField c = eval::clip_negative(f, UnitTag::flow);
    double lo = HUGE_VAL;
    for (std::size_t i = 0; i < c.mu.size(); ++i) lo = std::min(lo, c.mu[i]);
    return Outcome{lo >= 0.0, "min mu after clipping " + fmt("%.3g", lo)};
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
