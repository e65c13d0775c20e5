#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <numbers>

#include "stgin/config.hpp"
#include "stgin/csv.hpp"
#include "stgin/data.hpp"
#include "stgin/error.hpp"
#include "support.hpp"

using namespace stgin;
using stgin::testing::scratch_dir;

namespace {

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

TrafficTensor tensor_from(const Tensor2D& v) {
  TrafficTensor x;
  x.values = v;
  x.observed = Mask(v.rows(), v.cols());
  x.timestamps = default_timestamps(v.cols());
  for (std::size_t i = 0; i < v.rows(); ++i) x.sensor_ids.push_back("s" + std::to_string(i));
  return x;
}

}  // namespace

TEST_CASE("random mask counts") {
  CHECK(random_missing_mask(2, 2, 0.5, 1).count_missing() == 2);
  CHECK(random_missing_mask(3, 5, 0.3, 9) == random_missing_mask(3, 5, 0.3, 9));
  CHECK_FALSE(random_missing_mask(20, 20, 0.3, 1) == random_missing_mask(20, 20, 0.3, 2));
  // round(0.3 * 207 * 288) = round(17884.8)
  CHECK(random_missing_mask(207, 288, 0.3, 0).count_missing() == 17885);
  CHECK_THROWS_AS(random_missing_mask(2, 2, 0.0, 1), Error);
  CHECK_THROWS_AS(random_missing_mask(2, 2, 1.0, 1), Error);
}

TEST_CASE("non-random mask blanks whole rows") {
  const Mask m = nonrandom_missing_mask(4, 10, 0.5, 3);
  std::size_t blank = 0;
  for (std::size_t r = 0; r < 4; ++r) {
    std::size_t miss = 0;
    for (std::size_t c = 0; c < 10; ++c) miss += !m.observed(r, c);
    CHECK((miss == 0 || miss == 10));
    blank += miss == 10;
  }
  CHECK(blank == 2);
  const Mask big = nonrandom_missing_mask(207, 288, 0.1, 0);
  CHECK(big.count_missing() == 21 * 288);
  CHECK_THROWS_AS(nonrandom_missing_mask(4, 10, 0.1, 0), Error);
  CHECK(generate_mask({MissingRegime::nonrandom, 0.5, 3}, 4, 10) == m);
}

TEST_CASE("random masks show no per-row bias") {
  const std::size_t n = 40, t = 150;
  boost::math::chi_squared chi(static_cast<double>(n - 1));
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Mask m = random_missing_mask(n, t, 0.3, seed);
    const double expected = static_cast<double>(m.count_missing()) / n;
    double stat = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      double miss = 0;
      for (std::size_t c = 0; c < t; ++c) miss += !m.observed(r, c);
      stat += (miss - expected) * (miss - expected) / expected;
    }
    CHECK(boost::math::cdf(boost::math::complement(chi, stat)) > 0.001);
  }
}

TEST_CASE("apply mask") {
  Rng rng(1);
  const TrafficTensor x = tensor_from(stgin::testing::random_tensor(rng, 3, 4, 1, 2));
  CHECK(apply_mask(x, Mask(3, 4)).values == x.values);
  Mask row(3, 4);
  for (std::size_t c = 0; c < 4; ++c) row.set(1, c, false);
  const TrafficTensor once = apply_mask(x, row);
  for (std::size_t c = 0; c < 4; ++c) CHECK(once.values(1, c) == 0.0);
  const TrafficTensor twice = apply_mask(once, row);
  CHECK(twice.values == once.values);
  CHECK(twice.observed == once.observed);

  TrafficTensor gappy = x;
  gappy.observed.set(0, 0, false);
  const TrafficTensor both = apply_mask(gappy, row);
  CHECK_FALSE(both.observed.observed(0, 0));
  const Mask scored = evaluation_mask(gappy, row);
  CHECK(scored.count_observed() == 4);
  CHECK_FALSE(scored.observed(0, 0));
  CHECK_THROWS_AS(apply_mask(x, Mask(2, 4)), Error);
}

TEST_CASE("synthetic generator") {
  SynthSpec s;
  s.noise_std = 0.0;
  s.nodes = 6;
  s.steps = 300;
  const SynthDataset clean = synth_generate(s);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t t = 0; t < 300; ++t) {
      const double phase = 2.0 * std::numbers::pi * static_cast<double>(i) / 6.0;
      const double v = 50.0 + 15.0 * std::sin(2.0 * std::numbers::pi * t / 288.0 + phase) +
                       5.0 * std::sin(2.0 * std::numbers::pi * t / 36.0 + 2.0 * phase);
      CHECK(std::abs(clean.data.values(i, t) - v) < 1e-12);
    }
  CHECK(clean.data.values == clean.clean);

  const SynthDataset noisy = synth_generate(SynthSpec{});
  double sum = 0.0, sq = 0.0;
  const std::size_t k = noisy.clean.size();
  REQUIRE(k >= 10000);
  for (std::size_t i = 0; i < k; ++i) {
    const double e = noisy.data.values[i] - noisy.clean[i];
    sum += e;
    sq += e * e;
  }
  const double sd = std::sqrt(sq / k - (sum / k) * (sum / k));
  CHECK(std::abs(sd - 2.0) < 0.1);
  CHECK(synth_generate(SynthSpec{}).data.values == noisy.data.values);
  CHECK(noisy.graph.size() == 20);
  CHECK(noisy.graph.neighbors(0).size() == noisy.graph.neighbors(7).size());

  SynthSpec bad;
  bad.nodes = 1;
  CHECK_THROWS_AS(synth_generate(bad), Error);
  bad = {};
  bad.steps = 7;
  CHECK_THROWS_AS(synth_generate(bad), Error);
}

TEST_CASE("normalization") {
  Tensor2D v(1, 11);
  for (std::size_t i = 0; i <= 10; ++i) v[i] = static_cast<double>(i);
  const TrafficTensor x = tensor_from(v);
  const NormalizationParams p = fit_normalization(x, NormScheme::minmax);
  const TrafficTensor n = normalize(x, p);
  for (std::size_t i = 0; i <= 10; ++i) CHECK(n.values[i] == doctest::Approx(i / 10.0).epsilon(1e-15));
  const Tensor2D back = denormalize(n.values, p);
  CHECK(max_abs_diff(back, v) <= 1e-12);

  // Missing zeros do not enter the fitted range.
  TrafficTensor masked = tensor_from(Tensor2D{{20, 45, 999}, {70, 30, 999}});
  masked.observed.set(0, 2, false);
  masked.observed.set(1, 2, false);
  masked = apply_mask(masked, masked.observed);
  const NormalizationParams q = fit_normalization(masked, NormScheme::minmax);
  CHECK(q.apply(20) == 0.0);
  CHECK(q.apply(70) == 1.0);
  CHECK(normalize(masked, q).values(0, 2) == 0.0);

  const NormalizationParams z = fit_normalization(x, NormScheme::zscore);
  CHECK(z.offset == doctest::Approx(5.0));
  CHECK(z.scale == doctest::Approx(std::sqrt(10.0)));
  CHECK(fit_normalization(x, NormScheme::none).apply(3.5) == 3.5);

  CHECK_THROWS_AS(fit_normalization(tensor_from(Tensor2D(2, 2, 4.0)), NormScheme::minmax), Error);
}

TEST_CASE("dataset CSV") {
  const auto dir = scratch_dir("data");
  csv::write_file(dir / "ok.csv",
                  "timestamp,a,b,c\n"
                  "2012-03-01 00:00:00,1,2,3\n"
                  "2012-03-01 00:05:00,4,,6\n"
                  "2012-03-01 00:10:00,7,8,NaN\n"
                  "2012-03-01 00:15:00,10,11,12\n");
  const TrafficTensor x = load_csv_dataset(dir / "ok.csv", UnitTag::speed);
  CHECK(x.sensors() == 3);
  CHECK(x.steps() == 4);
  CHECK(x.sensor_ids == std::vector<std::string>{"a", "b", "c"});
  CHECK(x.observed.count_missing() == 2);
  CHECK_FALSE(x.observed.observed(1, 1));
  CHECK_FALSE(x.observed.observed(2, 2));
  CHECK(x.values(0, 3) == 10.0);
  CHECK(x.timestamps[1] - x.timestamps[0] == 300);

  save_csv_dataset(dir / "back.csv", x);
  const TrafficTensor y = load_csv_dataset(dir / "back.csv", UnitTag::speed);
  CHECK(y.values == x.values);
  CHECK(y.observed == x.observed);
  CHECK(y.timestamps == x.timestamps);

  SynthSpec s;
  s.nodes = 4;
  s.steps = 10;
  const SynthDataset ds = synth_generate(s);
  save_csv_dataset(dir / "synth.csv", ds.data);
  CHECK(load_csv_dataset(dir / "synth.csv", UnitTag::synthetic).values == ds.data.values);

  csv::write_file(dir / "ragged.csv", "timestamp,a,b\n0,1,2\n300,1\n");
  CHECK(message_of([&] { load_csv_dataset(dir / "ragged.csv", UnitTag::speed); }).find(":3:") != std::string::npos);
  csv::write_file(dir / "bad.csv", "timestamp,a\n0,1\n300,x1\n");
  CHECK(message_of([&] { load_csv_dataset(dir / "bad.csv", UnitTag::speed); }).find(":3:") != std::string::npos);
  csv::write_file(dir / "order.csv", "timestamp,a\n0,1\n600,2\n300,3\n");
  CHECK(message_of([&] { load_csv_dataset(dir / "order.csv", UnitTag::speed); }).find(":4:") != std::string::npos);
  csv::write_file(dir / "neg.csv", "timestamp,a\n0,-1\n");
  CHECK_THROWS_AS(load_csv_dataset(dir / "neg.csv", UnitTag::flow), Error);
  CHECK_THROWS_AS(load_csv_dataset(dir / "missing.csv", UnitTag::flow), Error);
}

TEST_CASE("mask file round trip") {
  const auto dir = scratch_dir("mask");
  const Mask m = random_missing_mask(5, 7, 0.4, 2);
  save_mask(dir / "m.csv", m);
  CHECK(load_mask(dir / "m.csv") == m);
  csv::write_file(dir / "bad.csv", "1,0\n2,1\n");
  CHECK_THROWS_AS(load_mask(dir / "bad.csv"), Error);
}

TEST_CASE("number and timestamp text") {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::ldexp(uniform_unit(rng) - 0.5, static_cast<int>(uniform_below(rng, 80)) - 40);
    CHECK(csv::parse_double(csv::format_double(v)) == v);
  }
  CHECK_THROWS_AS(csv::parse_double("1.0x"), Error);
  CHECK_THROWS_AS(csv::parse_double(""), Error);
  CHECK(format_timestamp(1330560000) == "2012-03-01 00:00:00");
  CHECK(parse_timestamp("2012-03-01T00:05:00") == 1330560300);
  CHECK(parse_timestamp("1330560000") == 1330560000);
  CHECK(parse_timestamp(format_timestamp(-86399)) == -86399);
}

TEST_CASE("config file") {
  const auto dir = scratch_dir("config");
  csv::write_file(dir / "c.json", R"({"model": {"hidden": 8, "activation": "tanh"},
    "training": {"learning_rate": 0.01, "clip_norm": null, "nll": "sum", "hide_mode": "sensors"},
    "data": {"scheme": "zscore"}})");
  const ExperimentConfig c = load_config(dir / "c.json");
  CHECK(c.model.hidden == 8);
  CHECK(c.model.gat_width == 16);
  CHECK(c.model.activation == model::Activation::tanh);
  CHECK(c.training.learning_rate == 0.01);
  CHECK_FALSE(c.training.clip_norm.has_value());
  CHECK(c.training.nll == train::NllAggregation::sum);
  CHECK(c.training.hide_mode == train::HideMode::sensors);
  CHECK(c.scheme == NormScheme::zscore);
  CHECK(parse_config(nlohmann::json::parse(to_json(c).dump())).model.hidden == 8);

  csv::write_file(dir / "typo.json", R"({"training": {"learnig_rate": 0.01}})");
  CHECK(message_of([&] { load_config(dir / "typo.json"); }).find("training.learnig_rate") != std::string::npos);
  csv::write_file(dir / "range.json", R"({"training": {"lambda": 2}})");
  CHECK_THROWS_AS(load_config(dir / "range.json"), Error);
  csv::write_file(dir / "broken.json", "{");
  CHECK_THROWS_AS(load_config(dir / "broken.json"), Error);
}
