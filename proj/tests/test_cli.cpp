#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "stgin/baselines.hpp"
#include "stgin/benchmark.hpp"
#include "stgin/csv.hpp"
#include "stgin/data.hpp"
#include "support.hpp"

using namespace stgin;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string s(const fs::path& p) { return p.string(); }

void check_error_line(const Result& r, const std::string& kind) {
  CHECK(r.code != 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  const auto j = nlohmann::json::parse(r.err);
  CHECK(j.at("error").at("kind") == kind);
  CHECK(!j.at("error").at("message").get<std::string>().empty());
}

}  // namespace

TEST_CASE("synth is byte-deterministic") {
  const auto dir = stgin::testing::scratch_dir("cli_synth");
  for (const char* sub : {"a", "b"}) {
    const Result r = run({"synth", "--nodes", "20", "--steps", "288", "--seed", "1", "--out", s(dir / sub)});
    REQUIRE(r.code == 0);
  }
  for (const char* f : {"data.csv", "clean.csv", "distances.csv", "adjacency.csv", "synth.json"})
    CHECK(csv::read_file(dir / "a" / f) == csv::read_file(dir / "b" / f));
  const auto manifest = nlohmann::json::parse(csv::read_file(dir / "a" / "run.json"));
  CHECK(manifest.at("subcommand") == "synth");
  CHECK(manifest.at("outputs").size() == 5);
  CHECK(manifest.at("outputs")[0].at("sha256").get<std::string>().size() == 64);
}

TEST_CASE("usage errors are single JSON lines") {
  check_error_line(run({"synth", "--nodes", "5", "--bogus", "1"}), "usage");
  check_error_line(run({"train", "--data", "nope.csv"}), "usage");
  check_error_line(run({}), "usage");
  check_error_line(run({"frobnicate"}), "usage");
  const Result help = run({"synth", "--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("--noise-std") != std::string::npos);
}

TEST_CASE("runtime errors are single JSON lines") {
  const auto dir = stgin::testing::scratch_dir("cli_err");
  csv::write_file(dir / "bad.csv", "timestamp,a\n0,1\n300,zz\n");
  check_error_line(run({"mask", "--data", s(dir / "bad.csv"), "--out", s(dir / "m")}), "parse");
  check_error_line(run({"mask", "--nodes", "4", "--steps", "4", "--rate", "1.5", "--out", s(dir / "m")}),
                   "invalid_argument");
  check_error_line(run({"mask", "--nodes", "4", "--steps", "4"}), "invalid_argument");
}

TEST_CASE("output directory from the environment") {
  const auto dir = stgin::testing::scratch_dir("cli_env");
  ::setenv("STGIN_OUTPUT_DIR", s(dir).c_str(), 1);
  const Result r = run({"mask", "--nodes", "4", "--steps", "5", "--rate", "0.5"});
  ::unsetenv("STGIN_OUTPUT_DIR");
  REQUIRE(r.code == 0);
  CHECK(load_mask(dir / "mask" / "mask.csv").count_missing() == 10);
}

TEST_CASE("evaluate mean on a fixture matches the oracle") {
  const auto dir = stgin::testing::scratch_dir("cli_eval");
  REQUIRE(run({"synth", "--nodes", "6", "--steps", "300", "--seed", "4", "--out", s(dir / "synth")}).code == 0);
  const Result r = run({"evaluate", "--data", s(dir / "synth" / "data.csv"), "--methods", "mean", "--rates", "0.3",
                        "--seeds", "2", "--space", "physical", "--out", s(dir / "eval")});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("Mean") != std::string::npos);

  const TrafficTensor truth = load_csv_dataset(dir / "synth" / "data.csv", UnitTag::synthetic);
  const Mask m = random_missing_mask(6, 300, 0.3, 2);
  const Mask scored = evaluation_mask(truth, m);
  // Per sensor-day observed means, computed directly.
  Tensor2D oracle = truth.values;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t t = 0; t < 300; ++t) {
      if (m.observed(i, t)) continue;
      const std::size_t d0 = t / 288 * 288, d1 = std::min<std::size_t>(300, d0 + 288);
      double sum = 0.0;
      std::size_t k = 0;
      for (std::size_t q = d0; q < d1; ++q)
        if (m.observed(i, q)) sum += truth.values(i, q), ++k;
      oracle(i, t) = sum / k;
    }
  const eval::EvalReport rep = eval::read_report_csv(dir / "eval" / "eval.csv");
  REQUIRE(rep.cells.size() == 1);
  CHECK(rep.cells[0].mse == doctest::Approx(eval::mse(truth.values, oracle, scored)).epsilon(1e-14));
  CHECK(rep.cells[0].mae == doctest::Approx(eval::mae(truth.values, oracle, scored)).epsilon(1e-14));
}

TEST_CASE("gradcheck subcommand") {
  const auto dir = stgin::testing::scratch_dir("cli_grad");
  csv::write_file(dir / "small.json", R"({"model": {"gat_width": 4, "hidden": 5}})");
  const Result r = run({"gradcheck", "--config", s(dir / "small.json"), "--seed", "2"});
  CHECK(r.code == 0);
  CHECK(r.out.rfind("pass", 0) == 0);
  const Result strict = run({"gradcheck", "--config", s(dir / "small.json"), "--tol", "0"});
  check_error_line(strict, "numeric");
  CHECK(strict.out.rfind("fail", 0) == 0);
}

TEST_CASE("pipeline through files") {
  const auto dir = stgin::testing::scratch_dir("cli_pipe");
  auto p = [&](const char* rel) { return s(dir / rel); };
  csv::write_file(dir / "cfg.json", R"({"model": {"gat_width": 4, "hidden": 6}, "training": {"window": 24}})");
  REQUIRE(run({"synth", "--nodes", "6", "--steps", "96", "--seed", "3", "--out", p("synth")}).code == 0);
  REQUIRE(run({"mask", "--data", p("synth/data.csv"), "--rate", "0.3", "--seed", "5", "--out", p("mask")}).code == 0);
  const Result tr = run({"train", "--data", p("synth/data.csv"), "--mask", p("mask/mask.csv"), "--graph",
                         p("synth/adjacency.csv"), "--config", p("cfg.json"), "--epochs", "4", "--lr", "0.01",
                         "--out", p("train")});
  REQUIRE(tr.code == 0);
  CHECK(fs::exists(dir / "train" / "checkpoint" / "manifest.json"));
  CHECK(fs::exists(dir / "train" / "train_report.csv"));
  REQUIRE(run({"impute", "--checkpoint", p("train/checkpoint"), "--data", p("synth/data.csv"), "--mask",
               p("mask/mask.csv"), "--graph", p("synth/adjacency.csv"), "--out", p("imp")})
              .code == 0);
  const Tensor2D mu = csv::read_matrix(dir / "imp" / "mu.csv");
  CHECK(mu.shape_string() == "6x96");
  const TrafficTensor filled = load_csv_dataset(dir / "imp" / "imputed.csv", UnitTag::synthetic);
  CHECK(filled.observed.count_missing() == 0);

  const Result ev = run({"evaluate", "--data", p("synth/data.csv"), "--mask", p("mask/mask.csv"), "--mu",
                         p("imp/mu.csv"), "--sigma2", p("imp/sigma2.csv"), "--methods", "stgin", "--out", p("ev")});
  REQUIRE(ev.code == 0);
  const eval::EvalReport rep = eval::read_report_csv(dir / "ev" / "eval.csv");
  REQUIRE(rep.cells.size() == 1);
  CHECK(rep.cells[0].coverage.has_value());
  CHECK(rep.cells[0].scored == random_missing_mask(6, 96, 0.3, 5).count_missing());

  const Result rp = run({"report", "--eval", p("ev/eval.csv"), "--data", p("synth/data.csv"), "--mu", p("imp/mu.csv"),
                         "--sigma2", p("imp/sigma2.csv"), "--mask", p("mask/mask.csv"), "--sensors", "0,2",
                         "--out", p("rep")});
  REQUIRE(rp.code == 0);
  CHECK(fs::exists(dir / "rep" / "table.txt"));
  CHECK(fs::exists(dir / "rep" / "interval_sensor2_day0.svg"));

  // A graph of the wrong size is rejected.
  csv::write_matrix(dir / "small_adj.csv", Tensor2D::identity(3));
  check_error_line(run({"train", "--data", p("synth/data.csv"), "--graph", p("small_adj.csv"), "--epochs", "1",
                        "--out", p("bad")}),
                   "shape");
}
