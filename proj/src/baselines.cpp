#include "stgin/baselines.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>
#include <boost/math/distributions/normal.hpp>

#include "stgin/error.hpp"

namespace stgin::eval {

namespace {

void check(const char* what, const Tensor2D& x, const Mask& m) {
  if (m.rows() != x.rows() || m.cols() != x.cols()) {
    throw Error(ErrorKind::shape, std::string(what) + ": mask does not match " + x.shape_string());
  }
}

double global_mean(const char* what, const Tensor2D& x, const Mask& m) {
  double s = 0.0;
  std::size_t k = 0;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c)
      if (m.observed(r, c)) {
        s += x(r, c);
        ++k;
      }
  if (k == 0) throw Error(ErrorKind::invalid_argument, std::string(what) + ": no observed entries");
  return s / static_cast<double>(k);
}

std::size_t count_scored(const char* what, const Tensor2D& truth, const Tensor2D& imputed, const Mask& scored) {
  if (!truth.same_shape(imputed) || scored.rows() != truth.rows() || scored.cols() != truth.cols()) {
    throw Error(ErrorKind::shape, std::string(what) + ": shapes differ");
  }
  const std::size_t n = scored.count_observed();
  if (n == 0) throw Error(ErrorKind::invalid_argument, std::string(what) + ": empty evaluation mask");
  return n;
}

}  // namespace

Tensor2D impute_average(const Tensor2D& x, const Mask& observed) {
  check("impute_average", x, observed);
  const double fallback = global_mean("impute_average", x, observed);
  Tensor2D out = x;
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double s = 0.0;
    std::size_t k = 0;
    for (std::size_t r = 0; r < x.rows(); ++r)
      if (observed.observed(r, c)) {
        s += x(r, c);
        ++k;
      }
    const double fill = k ? s / static_cast<double>(k) : fallback;
    for (std::size_t r = 0; r < x.rows(); ++r)
      if (!observed.observed(r, c)) out(r, c) = fill;
  }
  return out;
}

Tensor2D impute_mean(const Tensor2D& x, const Mask& observed, std::size_t steps_per_day) {
  check("impute_mean", x, observed);
  if (steps_per_day == 0) throw Error(ErrorKind::invalid_argument, "impute_mean: steps per day must be > 0");
  const double fallback = global_mean("impute_mean", x, observed);
  Tensor2D out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t day = 0; day < x.cols(); day += steps_per_day) {
      const std::size_t end = std::min(x.cols(), day + steps_per_day);
      double s = 0.0;
      std::size_t k = 0;
      for (std::size_t c = day; c < end; ++c)
        if (observed.observed(r, c)) {
          s += x(r, c);
          ++k;
        }
      const double fill = k ? s / static_cast<double>(k) : fallback;
      for (std::size_t c = day; c < end; ++c)
        if (!observed.observed(r, c)) out(r, c) = fill;
    }
  }
  return out;
}

SvdResult impute_svd(const Tensor2D& x, const Mask& observed, const SvdOptions& options) {
  check("impute_svd", x, observed);
  const std::size_t n = x.rows(), t = x.cols();
  const std::size_t smallest = std::min(n, t);
  if (smallest < 2) throw Error(ErrorKind::invalid_argument, "impute_svd: matrix must be at least 2x2");
  const std::size_t rank = options.rank == 0 ? std::min<std::size_t>(10, smallest - 1) : options.rank;
  if (rank >= smallest) {
    throw Error(ErrorKind::invalid_argument, "impute_svd: rank must be in [1, min(N,T))");
  }

  SvdResult res;
  // Column (per-step) means as the starting fill.
  res.imputed = impute_average(x, observed);
  if (observed.count_missing() == 0) {
    res.converged = true;
    return res;
  }

  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Matrix current = Eigen::Map<const Matrix>(res.imputed.data(), static_cast<Eigen::Index>(n),
                                            static_cast<Eigen::Index>(t));
  const auto r = static_cast<Eigen::Index>(rank);
  for (std::size_t it = 1; it <= options.max_iterations; ++it) {
    Eigen::BDCSVD<Matrix> svd(current, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) {
      throw Error(ErrorKind::numeric, "impute_svd: SVD failed at iteration " + std::to_string(it));
    }
    const Matrix low = svd.matrixU().leftCols(r) * svd.singularValues().head(r).asDiagonal() *
                       svd.matrixV().leftCols(r).transpose();
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < t; ++j) {
        if (observed.observed(i, j)) continue;
        const auto ei = static_cast<Eigen::Index>(i), ej = static_cast<Eigen::Index>(j);
        change = std::max(change, std::abs(low(ei, ej) - current(ei, ej)));
        current(ei, ej) = low(ei, ej);
      }
    res.iterations = it;
    res.last_change = change;
    if (!std::isfinite(change)) {
      throw Error(ErrorKind::numeric, "impute_svd: non-finite reconstruction at iteration " + std::to_string(it));
    }
    if (change < options.tolerance) {
      res.converged = true;
      break;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < t; ++j)
      if (!observed.observed(i, j))
        res.imputed(i, j) = current(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return res;
}

double mae(const Tensor2D& truth, const Tensor2D& imputed, const Mask& scored) {
  const std::size_t k = count_scored("mae", truth, imputed, scored);
  double s = 0.0;
  for (std::size_t r = 0; r < truth.rows(); ++r)
    for (std::size_t c = 0; c < truth.cols(); ++c)
      if (scored.observed(r, c)) s += std::abs(truth(r, c) - imputed(r, c));
  return s / static_cast<double>(k);
}

double mse(const Tensor2D& truth, const Tensor2D& imputed, const Mask& scored) {
  const std::size_t k = count_scored("mse", truth, imputed, scored);
  double s = 0.0;
  for (std::size_t r = 0; r < truth.rows(); ++r)
    for (std::size_t c = 0; c < truth.cols(); ++c)
      if (scored.observed(r, c)) {
        const double e = truth(r, c) - imputed(r, c);
        s += e * e;
      }
  return s / static_cast<double>(k);
}

model::GaussianField clip_negative(model::GaussianField field, UnitTag unit) {
  if (unit != UnitTag::flow) return field;
  for (double& m : field.mu.values()) m = std::max(m, 0.0);
  return field;
}

double normal_quantile(double level) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::invalid_argument, "confidence level must be in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + 0.5 * level);
}

double interval_coverage(const model::GaussianField& field, const Tensor2D& truth, const Mask& scored,
                         double level) {
  const std::size_t k = count_scored("interval_coverage", truth, field.mu, scored);
  if (!field.sigma2.same_shape(truth)) throw Error(ErrorKind::shape, "interval_coverage: variance shape differs");
  const double z = normal_quantile(level);
  std::size_t inside = 0;
  for (std::size_t r = 0; r < truth.rows(); ++r)
    for (std::size_t c = 0; c < truth.cols(); ++c) {
      if (!scored.observed(r, c)) continue;
      const double v = field.sigma2(r, c);
      if (!(v > 0.0)) throw Error(ErrorKind::numeric, "interval_coverage: non-positive variance");
      if (std::abs(truth(r, c) - field.mu(r, c)) <= z * std::sqrt(v)) ++inside;
    }
  return static_cast<double>(inside) / static_cast<double>(k);
}

}  // namespace stgin::eval
