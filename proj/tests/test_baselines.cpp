#include <doctest.h>

#include <cmath>

#include "stgin/baselines.hpp"
#include "stgin/benchmark.hpp"
#include "stgin/error.hpp"
#include "support.hpp"

using namespace stgin;
using namespace stgin::eval;
using stgin::testing::random_tensor;

namespace {

struct Instance {
  Tensor2D x;
  Mask observed;
};

Instance random_instance(Rng& rng) {
  const std::size_t n = 1 + uniform_below(rng, 6), t = 1 + uniform_below(rng, 12);
  Instance in{random_tensor(rng, n, t, 0, 100), Mask(n, t)};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < t; ++c)
      if (uniform_below(rng, 3) == 0) {
        in.observed.set(r, c, false);
        in.x(r, c) = 0.0;
      }
  if (in.observed.count_observed() == 0) in.observed.set(0, 0, true);
  return in;
}

double global_mean(const Instance& in) {
  double s = 0.0;
  std::size_t k = 0;
  for (std::size_t r = 0; r < in.x.rows(); ++r)
    for (std::size_t c = 0; c < in.x.cols(); ++c)
      if (in.observed.observed(r, c)) s += in.x(r, c), ++k;
  return s / k;
}

/// Recomputes every missing entry from its own subset, one entry at a time.
Tensor2D brute_average(const Instance& in) {
  Tensor2D out = in.x;
  for (std::size_t r = 0; r < in.x.rows(); ++r)
    for (std::size_t c = 0; c < in.x.cols(); ++c) {
      if (in.observed.observed(r, c)) continue;
      double s = 0.0;
      std::size_t k = 0;
      for (std::size_t q = 0; q < in.x.rows(); ++q)
        if (in.observed.observed(q, c)) s += in.x(q, c), ++k;
      out(r, c) = k ? s / k : global_mean(in);
    }
  return out;
}

Tensor2D brute_mean(const Instance& in, std::size_t day) {
  Tensor2D out = in.x;
  for (std::size_t r = 0; r < in.x.rows(); ++r)
    for (std::size_t c = 0; c < in.x.cols(); ++c) {
      if (in.observed.observed(r, c)) continue;
      double s = 0.0;
      std::size_t k = 0;
      for (std::size_t q = (c / day) * day; q < std::min(in.x.cols(), (c / day + 1) * day); ++q)
        if (in.observed.observed(r, q)) s += in.x(r, q), ++k;
      out(r, c) = k ? s / k : global_mean(in);
    }
  return out;
}

void check_observed_untouched(const Instance& in, const Tensor2D& out) {
  for (std::size_t r = 0; r < in.x.rows(); ++r)
    for (std::size_t c = 0; c < in.x.cols(); ++c)
      if (in.observed.observed(r, c)) CHECK(out(r, c) == in.x(r, c));
}

}  // namespace

TEST_CASE("average baseline") {
  Mask m(3, 1);
  m.set(2, 0, false);
  CHECK(impute_average(Tensor2D{{10}, {20}, {0}}, m)(2, 0) == 15.0);
  const Tensor2D full{{1, 2}, {3, 4}};
  CHECK(impute_average(full, Mask(2, 2)) == full);
  CHECK_THROWS_AS(impute_average(full, Mask(2, 2, false)), Error);

  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance in = random_instance(rng);
    const Tensor2D out = impute_average(in.x, in.observed);
    CHECK(out == brute_average(in));
    check_observed_untouched(in, out);
  }
}

TEST_CASE("mean baseline") {
  Mask m(1, 3);
  m.set(0, 1, false);
  CHECK(impute_mean(Tensor2D{{30, 0, 50}}, m)(0, 1) == 40.0);
  const Tensor2D full{{1, 2, 3}};
  CHECK(impute_mean(full, Mask(1, 3)) == full);

  // Two days with different levels get different fills.
  Tensor2D two{{10, 10, 0, 90, 90, 0}};
  Mask gaps(1, 6);
  gaps.set(0, 2, false);
  gaps.set(0, 5, false);
  const Tensor2D filled = impute_mean(two, gaps, 3);
  CHECK(filled(0, 2) == 10.0);
  CHECK(filled(0, 5) == 90.0);

  Rng rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance in = random_instance(rng);
    const std::size_t day = 1 + uniform_below(rng, 5);
    const Tensor2D out = impute_mean(in.x, in.observed, day);
    CHECK(out == brute_mean(in, day));
    check_observed_untouched(in, out);
  }
}

TEST_CASE("svd baseline recovers a rank-1 matrix") {
  Rng rng(33);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor2D u = random_tensor(rng, 12, 1, 1, 2), v = random_tensor(rng, 1, 30, 1, 2);
    Tensor2D x(12, 30);
    for (std::size_t r = 0; r < 12; ++r)
      for (std::size_t c = 0; c < 30; ++c) x(r, c) = u(r, 0) * v(0, c);
    const Mask m = random_missing_mask(12, 30, 0.2, trial);
    Tensor2D input = x;
    for (std::size_t i = 0; i < input.size(); ++i)
      if (!m.observed(i / 30, i % 30)) input[i] = 0.0;
    SvdOptions opt;
    opt.rank = 1;
    opt.max_iterations = 5000;
    opt.tolerance = 1e-12;
    const SvdResult res = impute_svd(input, m, opt);
    CHECK(res.converged);
    CHECK(res.last_change < opt.tolerance);
    CHECK(max_abs_diff(res.imputed, x) < 1e-6);
    check_observed_untouched({input, m}, res.imputed);
  }
  Rng r2(34);
  const Tensor2D full = random_tensor(r2, 4, 5);
  CHECK(impute_svd(full, Mask(4, 5)).imputed == full);
  SvdOptions bad;
  bad.rank = 4;
  CHECK_THROWS_AS(impute_svd(full, Mask(4, 5), bad), Error);
}

TEST_CASE("svd stops at the iteration cap") {
  Rng rng(35);
  const Tensor2D x = random_tensor(rng, 6, 8);
  const Mask m = random_missing_mask(6, 8, 0.5, 1);
  SvdOptions opt;
  opt.rank = 1;
  opt.max_iterations = 2;
  opt.tolerance = 1e-300;
  const SvdResult res = impute_svd(x, m, opt);
  CHECK_FALSE(res.converged);
  CHECK(res.iterations == 2);
}

TEST_CASE("error metrics") {
  const Tensor2D y{{1, 2, 3}};
  CHECK(mae(y, y, Mask(1, 3)) == 0.0);
  CHECK(mse(y, y, Mask(1, 3)) == 0.0);
  Mask two(1, 3);
  two.set(0, 2, false);
  CHECK(mae(y, Tensor2D{{0, 3, 0}}, two) == 1.0);
  CHECK(mse(y, Tensor2D{{0, 3, 0}}, two) == 1.0);
  CHECK(mae(y, Tensor2D{{-1, 2, 4}}, Mask(1, 3)) == 1.0);
  CHECK(mse(y, Tensor2D{{-1, 2, 4}}, Mask(1, 3)) == doctest::Approx(5.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(mse(y, y, Mask(1, 3, false)), Error);

  Rng rng(36);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance in = random_instance(rng);
    const Tensor2D guess = random_tensor(rng, in.x.rows(), in.x.cols(), 0, 100);
    const double a = mae(in.x, guess, in.observed), s = mse(in.x, guess, in.observed);
    CHECK(s >= 0.0);
    CHECK(a * a <= s + 1e-12);
  }
}

TEST_CASE("flow clipping") {
  model::GaussianField f{Tensor2D{{-3, 5}}, Tensor2D{{1, 2}}};
  const model::GaussianField flow = clip_negative(f, UnitTag::flow);
  CHECK(flow.mu == Tensor2D{{0, 5}});
  CHECK(flow.sigma2 == f.sigma2);
  CHECK(clip_negative(f, UnitTag::speed).mu == f.mu);
  CHECK(clip_negative(f, UnitTag::synthetic).mu == f.mu);
}

TEST_CASE("interval coverage") {
  CHECK(normal_quantile(0.95) == doctest::Approx(1.959964).epsilon(1e-7));
  Rng rng(37);
  const Tensor2D mu = random_tensor(rng, 4, 9), s2 = random_tensor(rng, 4, 9, 0.1, 2);
  const model::GaussianField f{mu, s2};
  CHECK(interval_coverage(f, mu, Mask(4, 9), 0.95) == 1.0);
  Tensor2D far = mu;
  for (std::size_t i = 0; i < far.size(); ++i) far[i] += 10.0 * std::sqrt(s2[i]);
  CHECK(interval_coverage(f, far, Mask(4, 9), 0.95) == 0.0);
  CHECK_THROWS_AS(interval_coverage(f, mu, Mask(4, 9, false), 0.95), Error);
  CHECK_THROWS_AS(interval_coverage(f, mu, Mask(4, 9), 1.0), Error);

  const Tensor2D truth = random_tensor(rng, 4, 9, -3, 3);
  double prev = 0.0;
  for (double level = 0.05; level < 1.0; level += 0.05) {
    const double c = interval_coverage(f, truth, Mask(4, 9), level);
    CHECK(c >= prev);
    prev = c;
  }
}

TEST_CASE("benchmark grid") {
  SynthSpec s;
  s.nodes = 6;
  s.steps = 96;
  const SynthDataset ds = synth_generate(s);
  BenchmarkSpec spec;
  spec.methods = {Method::mean, Method::average};
  spec.regimes = {MissingRegime::random, MissingRegime::nonrandom};
  spec.rates = {0.2, 0.4};
  spec.seeds = {1};
  spec.space = MetricSpace::physical;
  const EvalReport r = run_benchmark(ds.data, ds.graph, spec);
  CHECK(r.cells.size() == 4);
  CHECK(r.notices.size() == 2);
  CHECK(r.cells.front().method == Method::average);

  // Mean at rate 0.2 against the brute-force oracle.
  const Mask m = random_missing_mask(6, 96, 0.2, 1);
  const TrafficTensor masked = apply_mask(ds.data, m);
  const Tensor2D oracle = brute_mean({masked.values, masked.observed}, 288);
  const Mask scored = evaluation_mask(ds.data, m);
  const EvalCell& cell = r.cells[2];
  REQUIRE(cell.method == Method::mean);
  REQUIRE(cell.rate == 0.2);
  CHECK(cell.mse == mse(ds.data.values, oracle, scored));
  CHECK(cell.mae == mae(ds.data.values, oracle, scored));
  CHECK(cell.scored == scored.count_observed());

  const std::string table = format_tables(r);
  CHECK(table.find("0.2 (MSE/MAE)") != std::string::npos);
  CHECK(table.find("Average") != std::string::npos);
  CHECK(table.find("skipped") != std::string::npos);

  const auto dir = stgin::testing::scratch_dir("bench");
  write_report_csv(dir / "e.csv", r);
  const EvalReport back = read_report_csv(dir / "e.csv");
  REQUIRE(back.cells.size() == r.cells.size());
  CHECK(back.cells[2].mse == cell.mse);
  CHECK(format_tables(back).find("Mean") != std::string::npos);
}

TEST_CASE("benchmark with a model and the non-random table") {
  SynthSpec s;
  s.nodes = 5;
  s.steps = 48;
  const SynthDataset ds = synth_generate(s);
  BenchmarkSpec spec;
  spec.methods = {Method::bigru, Method::stgin};
  spec.regimes = {MissingRegime::nonrandom};
  spec.rates = {0.2};
  spec.seeds = {0};
  spec.config.model.gat_width = 4;
  spec.config.model.hidden = 4;
  spec.config.training.max_epochs = 3;
  spec.config.training.window = 24;
  const EvalReport r = run_benchmark(ds.data, ds.graph, spec);
  REQUIRE(r.cells.size() == 2);
  for (const EvalCell& c : r.cells) {
    CHECK(c.coverage.has_value());
    CHECK(c.scored == 48);
  }
  const std::string table = format_tables(r);
  const auto mse_row = table.find("\nMSE ");
  REQUIRE(mse_row != std::string::npos);
  CHECK(table.find("BiGRU", mse_row) < table.find('\n', mse_row + 1));
  CHECK(table.find("\nMAE ") != std::string::npos);
  CHECK(table.find("ST-GIN") != std::string::npos);
}

TEST_CASE("interval plot") {
  SynthSpec s;
  s.nodes = 3;
  s.steps = 20;
  const SynthDataset ds = synth_generate(s);
  const model::GaussianField f{ds.clean, Tensor2D(3, 20, 4.0)};
  Mask m(3, 20);
  m.set(1, 3, false);
  const std::string svg = interval_svg(ds.data, f, m, 1, 0, 20, 0.95);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("<polygon") != std::string::npos);
  CHECK(svg.find("<circle") != std::string::npos);
  CHECK_THROWS_AS(interval_svg(ds.data, f, m, 3, 0, 20, 0.95), Error);
}
