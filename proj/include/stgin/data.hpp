#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stgin/graph.hpp"
#include "stgin/tensor.hpp"

namespace stgin {

enum class UnitTag { speed, flow, synthetic };

const char* to_string(UnitTag u);
UnitTag parse_unit(const std::string& s);

/// N×T observation mask, true = observed.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, bool observed = true)
      : rows_(rows), cols_(cols), bits_(rows * cols, observed ? 1 : 0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool observed(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool observed) { bits_[r * cols_ + c] = observed ? 1 : 0; }

  std::size_t count_observed() const;
  std::size_t count_missing() const { return rows_ * cols_ - count_observed(); }

  Mask operator&(const Mask& o) const;
  Mask operator~() const;

  /// Columns [begin, begin+count).
  Mask slice_cols(std::size_t begin, std::size_t count) const;

  /// 1.0 where observed, 0.0 elsewhere.
  Tensor2D weights() const;
  static Mask from_weights(const Tensor2D& w);

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Sensor readings: `values` is N sensors × T steps.
struct TrafficTensor {
  Tensor2D values;
  Mask observed;
  UnitTag unit = UnitTag::synthetic;
  std::vector<std::int64_t> timestamps;  // seconds since epoch, strictly increasing
  std::vector<std::string> sensor_ids;

  std::size_t sensors() const { return values.rows(); }
  std::size_t steps() const { return values.cols(); }

  /// Throws if shapes or timestamps are inconsistent.
  void validate() const;
};

enum class MissingRegime { random, nonrandom };

const char* to_string(MissingRegime r);
MissingRegime parse_regime(const std::string& s);

struct MaskSpec {
  MissingRegime regime = MissingRegime::random;
  double rate = 0.3;
  std::uint64_t seed = 0;
};

/// Exactly round(rate·n·t) entries missing, uniform without replacement.
Mask random_missing_mask(std::size_t n, std::size_t t, double rate, std::uint64_t seed);

/// round(sensor_rate·n) whole rows missing, uniform without replacement.
Mask nonrandom_missing_mask(std::size_t n, std::size_t t, double sensor_rate, std::uint64_t seed);

Mask generate_mask(const MaskSpec& spec, std::size_t n, std::size_t t);

/// Zeroes values outside `mask` and intersects the observation mask.
TrafficTensor apply_mask(const TrafficTensor& x, const Mask& mask);

/// Entries that are hidden by `mask` but have ground truth in `original`.
Mask evaluation_mask(const TrafficTensor& original, const Mask& mask);

// Normalization --------------------------------------------------------------

enum class NormScheme { minmax, zscore, none };

const char* to_string(NormScheme s);
NormScheme parse_scheme(const std::string& s);

struct NormalizationParams {
  NormScheme scheme = NormScheme::none;
  double offset = 0.0;  // min or mean
  double scale = 1.0;   // max-min or std

  double apply(double v) const { return (v - offset) / scale; }
  double invert(double v) const { return v * scale + offset; }
};

/// Fits on observed entries only; missing entries map to 0 regardless.
NormalizationParams fit_normalization(const TrafficTensor& x, NormScheme scheme);
TrafficTensor normalize(const TrafficTensor& x, const NormalizationParams& p);
Tensor2D denormalize(const Tensor2D& v, const NormalizationParams& p);

// Synthetic data -------------------------------------------------------------

struct SynthSpec {
  std::size_t nodes = 20;
  std::size_t steps = 576;
  std::uint64_t seed = 1;
  double noise_std = 2.0;
  double threshold = 0.1;
  NormScheme scheme = NormScheme::minmax;
};

struct SynthDataset {
  TrafficTensor data;
  Tensor2D clean;  // noiseless signal
  Tensor2D distances;
  SensorGraph graph;
  double noise_std = 0.0;
};

/// Ring of sensors with diurnal plus rush-hour harmonics and Gaussian noise.
SynthDataset synth_generate(const SynthSpec& spec);

/// 5-minute spacing from 2012-03-01 00:00:00 UTC.
std::vector<std::int64_t> default_timestamps(std::size_t t);

// File formats ---------------------------------------------------------------

/// Header "timestamp,<sensor ids...>", then one row per time step. Gaps are
/// empty cells or one of NaN/nan/NA.
TrafficTensor load_csv_dataset(const std::filesystem::path& path, UnitTag unit);
void save_csv_dataset(const std::filesystem::path& path, const TrafficTensor& x);

/// N×T header-less CSV of 0/1 (1 = observed).
void save_mask(const std::filesystem::path& path, const Mask& m);
Mask load_mask(const std::filesystem::path& path);

std::string format_timestamp(std::int64_t seconds);
std::int64_t parse_timestamp(std::string_view text);

}  // namespace stgin
