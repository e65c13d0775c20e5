#include "stgin/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "stgin/csv.hpp"
#include "stgin/error.hpp"
#include "stgin/rng.hpp"

namespace stgin {

const char* to_string(UnitTag u) {
  switch (u) {
    case UnitTag::speed: return "speed";
    case UnitTag::flow: return "flow";
    case UnitTag::synthetic: return "synthetic";
  }
  return "synthetic";
}

UnitTag parse_unit(const std::string& s) {
  if (s == "speed") return UnitTag::speed;
  if (s == "flow") return UnitTag::flow;
  if (s == "synthetic") return UnitTag::synthetic;
  throw Error(ErrorKind::invalid_argument, "unknown unit tag '" + s + "'");
}

const char* to_string(MissingRegime r) {
  return r == MissingRegime::random ? "random" : "nonrandom";
}

MissingRegime parse_regime(const std::string& s) {
  if (s == "random") return MissingRegime::random;
  if (s == "nonrandom" || s == "non-random") return MissingRegime::nonrandom;
  throw Error(ErrorKind::invalid_argument, "unknown missing regime '" + s + "'");
}

const char* to_string(NormScheme s) {
  switch (s) {
    case NormScheme::minmax: return "minmax";
    case NormScheme::zscore: return "zscore";
    case NormScheme::none: return "none";
  }
  return "none";
}

NormScheme parse_scheme(const std::string& s) {
  if (s == "minmax") return NormScheme::minmax;
  if (s == "zscore") return NormScheme::zscore;
  if (s == "none") return NormScheme::none;
  throw Error(ErrorKind::invalid_argument, "unknown normalization scheme '" + s + "'");
}

// ---------------------------------------------------------------------------
// Mask

std::size_t Mask::count_observed() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Mask Mask::operator&(const Mask& o) const {
  if (rows_ != o.rows_ || cols_ != o.cols_) throw Error(ErrorKind::shape, "mask: shape mismatch in intersection");
  Mask m(rows_, cols_);
  for (std::size_t i = 0; i < bits_.size(); ++i) m.bits_[i] = bits_[i] & o.bits_[i];
  return m;
}

Mask Mask::operator~() const {
  Mask m(rows_, cols_);
  for (std::size_t i = 0; i < bits_.size(); ++i) m.bits_[i] = bits_[i] ? 0 : 1;
  return m;
}

Mask Mask::slice_cols(std::size_t begin, std::size_t count) const {
  if (begin + count > cols_) throw Error(ErrorKind::shape, "mask: column slice out of range");
  Mask m(rows_, count);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < count; ++c) m.set(r, c, observed(r, begin + c));
  return m;
}

Tensor2D Mask::weights() const {
  Tensor2D w(rows_, cols_);
  for (std::size_t i = 0; i < bits_.size(); ++i) w[i] = bits_[i] ? 1.0 : 0.0;
  return w;
}

Mask Mask::from_weights(const Tensor2D& w) {
  Mask m(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] != 0.0 && w[i] != 1.0) throw Error(ErrorKind::parse, "mask: entries must be 0 or 1");
    m.bits_[i] = w[i] != 0.0 ? 1 : 0;
  }
  return m;
}

void TrafficTensor::validate() const {
  if (observed.rows() != values.rows() || observed.cols() != values.cols()) {
    throw Error(ErrorKind::shape, "traffic tensor: mask shape differs from values " + values.shape_string());
  }
  if (!timestamps.empty()) {
    if (timestamps.size() != values.cols()) throw Error(ErrorKind::shape, "traffic tensor: timestamp count mismatch");
    for (std::size_t i = 1; i < timestamps.size(); ++i)
      if (timestamps[i] <= timestamps[i - 1]) throw Error(ErrorKind::invalid_argument, "traffic tensor: timestamps not increasing");
  }
  if (unit == UnitTag::flow) {
    for (std::size_t r = 0; r < values.rows(); ++r)
      for (std::size_t c = 0; c < values.cols(); ++c)
        if (observed.observed(r, c) && values(r, c) < 0.0)
          throw Error(ErrorKind::invalid_argument, "traffic tensor: negative flow value");
  }
}

// ---------------------------------------------------------------------------
// Masks

Mask random_missing_mask(std::size_t n, std::size_t t, double rate, std::uint64_t seed) {
  if (!(rate > 0.0 && rate < 1.0)) throw Error(ErrorKind::invalid_argument, "random_missing_mask: rate must be in (0,1)");
  const std::size_t total = n * t;
  const auto missing = static_cast<std::size_t>(std::llround(rate * static_cast<double>(total)));
  Mask m(n, t);
  Rng rng(seed);
  for (std::size_t idx : sample_without_replacement(rng, total, missing)) m.set(idx / t, idx % t, false);
  return m;
}

Mask nonrandom_missing_mask(std::size_t n, std::size_t t, double sensor_rate, std::uint64_t seed) {
  if (!(sensor_rate > 0.0 && sensor_rate < 1.0)) {
    throw Error(ErrorKind::invalid_argument, "nonrandom_missing_mask: rate must be in (0,1)");
  }
  const auto rows = static_cast<std::size_t>(std::llround(sensor_rate * static_cast<double>(n)));
  if (rows == 0) throw Error(ErrorKind::invalid_argument, "nonrandom_missing_mask: rate selects no sensors");
  Mask m(n, t);
  Rng rng(seed);
  for (std::size_t r : sample_without_replacement(rng, n, rows))
    for (std::size_t c = 0; c < t; ++c) m.set(r, c, false);
  return m;
}

Mask generate_mask(const MaskSpec& spec, std::size_t n, std::size_t t) {
  return spec.regime == MissingRegime::random ? random_missing_mask(n, t, spec.rate, spec.seed)
                                              : nonrandom_missing_mask(n, t, spec.rate, spec.seed);
}

TrafficTensor apply_mask(const TrafficTensor& x, const Mask& mask) {
  if (mask.rows() != x.sensors() || mask.cols() != x.steps()) {
    throw Error(ErrorKind::shape, "apply_mask: mask does not match tensor " + x.values.shape_string());
  }
  TrafficTensor out = x;
  out.observed = x.observed & mask;
  for (std::size_t r = 0; r < out.sensors(); ++r)
    for (std::size_t c = 0; c < out.steps(); ++c)
      if (!out.observed.observed(r, c)) out.values(r, c) = 0.0;
  return out;
}

Mask evaluation_mask(const TrafficTensor& original, const Mask& mask) {
  return original.observed & ~mask;
}

// ---------------------------------------------------------------------------
// Normalization

NormalizationParams fit_normalization(const TrafficTensor& x, NormScheme scheme) {
  NormalizationParams p;
  p.scheme = scheme;
  if (scheme == NormScheme::none) return p;
  double lo = HUGE_VAL, hi = -HUGE_VAL, sum = 0.0, sq = 0.0;
  std::size_t k = 0;
  for (std::size_t r = 0; r < x.sensors(); ++r)
    for (std::size_t c = 0; c < x.steps(); ++c) {
      if (!x.observed.observed(r, c)) continue;
      const double v = x.values(r, c);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
      sq += v * v;
      ++k;
    }
  if (k == 0) throw Error(ErrorKind::invalid_argument, "normalize: no observed entries");
  if (scheme == NormScheme::minmax) {
    if (!(hi > lo)) throw Error(ErrorKind::invalid_argument, "normalize: constant tensor under min-max");
    p.offset = lo;
    p.scale = hi - lo;
  } else {
    const double mean = sum / static_cast<double>(k);
    const double sd = std::sqrt(std::max(sq / static_cast<double>(k) - mean * mean, 0.0));
    if (!(sd > 0.0)) throw Error(ErrorKind::invalid_argument, "normalize: constant tensor under z-score");
    p.offset = mean;
    p.scale = sd;
  }
  return p;
}

TrafficTensor normalize(const TrafficTensor& x, const NormalizationParams& p) {
  TrafficTensor out = x;
  for (std::size_t r = 0; r < x.sensors(); ++r)
    for (std::size_t c = 0; c < x.steps(); ++c)
      out.values(r, c) = x.observed.observed(r, c) ? p.apply(x.values(r, c)) : 0.0;
  return out;
}

Tensor2D denormalize(const Tensor2D& v, const NormalizationParams& p) {
  Tensor2D out(v.rows(), v.cols());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = p.invert(v[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic

std::vector<std::int64_t> default_timestamps(std::size_t t) {
  constexpr std::int64_t kStart = 1330560000;  // 2012-03-01T00:00:00Z
  std::vector<std::int64_t> ts(t);
  for (std::size_t i = 0; i < t; ++i) ts[i] = kStart + 300 * static_cast<std::int64_t>(i);
  return ts;
}

SynthDataset synth_generate(const SynthSpec& spec) {
  if (spec.nodes < 2) throw Error(ErrorKind::invalid_argument, "synth_generate: need at least 2 nodes");
  if (spec.steps < 8) throw Error(ErrorKind::invalid_argument, "synth_generate: need at least 8 steps");
  if (!(spec.noise_std >= 0.0)) throw Error(ErrorKind::invalid_argument, "synth_generate: noise std must be >= 0");
  const std::size_t n = spec.nodes, t = spec.steps;
  constexpr double two_pi = 2.0 * std::numbers::pi;

  SynthDataset out;
  out.noise_std = spec.noise_std;
  out.clean = Tensor2D(n, t);
  for (std::size_t i = 0; i < n; ++i) {
    const double phase = two_pi * static_cast<double>(i) / static_cast<double>(n);
    for (std::size_t s = 0; s < t; ++s) {
      const double ts = static_cast<double>(s);
      out.clean(i, s) = 50.0 + 15.0 * std::sin(two_pi * ts / 288.0 + phase) +
                        5.0 * std::sin(two_pi * ts / 36.0 + 2.0 * phase);
    }
  }
  out.data.values = out.clean;
  if (spec.noise_std > 0.0) {
    Rng rng(spec.seed);
    for (std::size_t i = 0; i < out.data.values.size(); ++i) out.data.values[i] += spec.noise_std * standard_normal(rng);
  }
  out.data.observed = Mask(n, t);
  out.data.unit = UnitTag::synthetic;
  out.data.timestamps = default_timestamps(t);
  for (std::size_t i = 0; i < n; ++i) out.data.sensor_ids.push_back("s" + std::to_string(i));
  out.distances = ring_distances(n);
  out.graph = build_gaussian_adjacency(out.distances, default_bandwidth(out.distances), spec.threshold);
  return out;
}

// ---------------------------------------------------------------------------
// Files

namespace {

// days since 1970-01-01 for a proleptic Gregorian date
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

bool is_gap(std::string_view f) {
  while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
  while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  return f.empty() || f == "NaN" || f == "nan" || f == "NA";
}

}  // namespace

std::string format_timestamp(std::int64_t seconds) {
  std::int64_t days = seconds / 86400;
  std::int64_t rem = seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  std::int64_t y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u %02lld:%02lld:%02lld", static_cast<long long>(y), m, d,
                static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                static_cast<long long>(rem % 60));
  return buf;
}

std::int64_t parse_timestamp(std::string_view text) {
  while (!text.empty() && (text.back() == '\r' || text.back() == ' ')) text.remove_suffix(1);
  long long y = 0;
  unsigned mo = 0, d = 0, h = 0, mi = 0, s = 0;
  const std::string str(text);
  if (str.size() >= 19 && (str[10] == ' ' || str[10] == 'T') &&
      std::sscanf(str.c_str(), "%lld-%u-%u%*c%u:%u:%u", &y, &mo, &d, &h, &mi, &s) == 6) {
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60) {
      throw Error(ErrorKind::parse, "timestamp out of range '" + str + "'");
    }
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
  }
  const double v = csv::parse_double(text);
  if (v != std::floor(v)) throw Error(ErrorKind::parse, "timestamp '" + str + "' is not an integer");
  return static_cast<std::int64_t>(v);
}

TrafficTensor load_csv_dataset(const std::filesystem::path& path, UnitTag unit) {
  const std::string text = csv::read_file(path);
  std::vector<std::string_view> lines;
  for (std::string_view rest(text); !rest.empty();) {
    const std::size_t nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.size() < 2) throw Error(ErrorKind::parse, path.string() + ": need a header and at least one row");

  auto where = [&](std::size_t line_no) { return path.string() + ":" + std::to_string(line_no) + ": "; };

  const auto header = csv::split(lines[0]);
  if (header.size() < 2) throw Error(ErrorKind::parse, where(1) + "header needs a timestamp and a sensor column");
  const std::size_t n = header.size() - 1;
  const std::size_t t = lines.size() - 1;

  TrafficTensor x;
  x.unit = unit;
  x.values = Tensor2D(n, t);
  x.observed = Mask(n, t);
  for (std::size_t j = 1; j < header.size(); ++j) x.sensor_ids.emplace_back(header[j]);

  for (std::size_t s = 0; s < t; ++s) {
    const std::size_t line_no = s + 2;
    const auto fields = csv::split(lines[s + 1]);
    if (fields.size() != header.size()) {
      throw Error(ErrorKind::parse, where(line_no) + "expected " + std::to_string(header.size()) +
                                        " fields, got " + std::to_string(fields.size()));
    }
    try {
      x.timestamps.push_back(parse_timestamp(fields[0]));
      for (std::size_t i = 0; i < n; ++i) {
        if (is_gap(fields[i + 1])) {
          x.observed.set(i, s, false);
        } else {
          x.values(i, s) = csv::parse_double(fields[i + 1]);
        }
      }
    } catch (const Error& e) {
      throw Error(ErrorKind::parse, where(line_no) + e.what());
    }
    if (s > 0 && x.timestamps[s] <= x.timestamps[s - 1]) {
      throw Error(ErrorKind::parse, where(line_no) + "timestamps not strictly increasing");
    }
  }
  x.validate();
  return x;
}

void save_csv_dataset(const std::filesystem::path& path, const TrafficTensor& x) {
  x.validate();
  std::string text = "timestamp";
  for (std::size_t i = 0; i < x.sensors(); ++i) {
    text += ',';
    text += i < x.sensor_ids.size() ? x.sensor_ids[i] : "s" + std::to_string(i);
  }
  text += '\n';
  const auto ts = x.timestamps.empty() ? default_timestamps(x.steps()) : x.timestamps;
  for (std::size_t s = 0; s < x.steps(); ++s) {
    text += format_timestamp(ts[s]);
    for (std::size_t i = 0; i < x.sensors(); ++i) {
      text += ',';
      if (x.observed.observed(i, s)) text += csv::format_double(x.values(i, s));
    }
    text += '\n';
  }
  csv::write_file(path, text);
}

void save_mask(const std::filesystem::path& path, const Mask& m) {
  std::string text;
  text.reserve(m.rows() * m.cols() * 2);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) text += ',';
      text += m.observed(r, c) ? '1' : '0';
    }
    text += '\n';
  }
  csv::write_file(path, text);
}

Mask load_mask(const std::filesystem::path& path) { return Mask::from_weights(csv::read_matrix(path)); }

}  // namespace stgin
