#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stgin/baselines.hpp"
#include "stgin/config.hpp"
#include "stgin/data.hpp"
#include "stgin/model.hpp"
#include "stgin/training.hpp"

namespace stgin::eval {

// Model fitting shared by the benchmark and the CLI ---------------------------

struct FitResult {
  model::Checkpoint checkpoint;
  train::TrainReport report;
};

/// Normalizes on the observed entries of `data`, initializes the chosen
/// variant from `seed` and trains it.
FitResult fit_model(const TrafficTensor& data, const SensorGraph& graph, const ExperimentConfig& config,
                    model::Variant variant, std::uint64_t seed);

/// μ̂ and σ̂² in physical units for every entry, with flow means clipped.
model::GaussianField impute_field(const model::Checkpoint& ckpt, const TrafficTensor& data,
                                  const SensorGraph& graph);

/// Maps a field from normalized to physical units (σ̂² scales by scale²).
model::GaussianField denormalize_field(const model::GaussianField& field, const NormalizationParams& p);

// Benchmark grid ---------------------------------------------------------------

enum class Method { average, mean, svd, bigru, gcn, stgin };

const char* to_string(Method m);
/// Table label: Average, Mean, SVD, BiGRU, GCN, ST-GIN.
const char* display_name(Method m);
Method parse_method(const std::string& s);
/// True for the baselines that only handle the random regime.
bool random_only(Method m);

/// Space in which errors are measured.
enum class MetricSpace { normalized, physical };

const char* to_string(MetricSpace s);
MetricSpace parse_space(const std::string& s);

struct EvalCell {
  Method method = Method::average;
  MissingRegime regime = MissingRegime::random;
  double rate = 0.0;
  std::uint64_t seed = 0;
  double mse = 0.0;
  double mae = 0.0;
  std::size_t scored = 0;
  std::optional<double> coverage;  // probabilistic methods only
  double runtime_seconds = 0.0;
};

struct BenchmarkSpec {
  std::vector<Method> methods;
  std::vector<MissingRegime> regimes;
  std::vector<double> rates;
  std::vector<std::uint64_t> seeds;
  double level = 0.95;
  MetricSpace space = MetricSpace::normalized;
  ExperimentConfig config;
  SvdOptions svd;
};

struct EvalReport {
  std::vector<EvalCell> cells;
  std::vector<std::string> notices;
};

/// Every (method, regime, rate, seed) cell on `data`. The mask seed and the
/// model seed of a cell are both its seed. Cells come out sorted by regime,
/// method, rate and seed.
EvalReport run_benchmark(const TrafficTensor& data, const SensorGraph& graph, const BenchmarkSpec& spec,
                         const std::function<void(const std::string&)>& log = {});

/// Scores one imputation against the held-out entries.
EvalCell score_cell(const Tensor2D& truth, const Tensor2D& imputed, const Mask& scored);

void write_report_csv(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report_csv(const std::filesystem::path& path);

/// Aligned plain-text tables: the random regime as rows of methods and
/// "MSE / MAE" columns per rate, the non-random regime as MSE and MAE blocks.
/// Cells averaged over seeds.
std::string format_tables(const EvalReport& report);

/// One sensor's slice [begin, begin+count): truth line, μ̂ line and the shaded
/// μ̂ ± z·σ̂ band. Missing truth points (mask false) are drawn hollow.
std::string interval_svg(const TrafficTensor& truth, const model::GaussianField& field, const Mask& input_mask,
                         std::size_t sensor, std::size_t begin, std::size_t count, double level);

}  // namespace stgin::eval
