#pragma once

#include <cstddef>

#include "stgin/data.hpp"
#include "stgin/model.hpp"
#include "stgin/tensor.hpp"

namespace stgin::eval {

/// Missing (i, t) <- mean of the sensors observed at step t. Steps with no
/// observed sensor fall back to the global observed mean.
Tensor2D impute_average(const Tensor2D& x, const Mask& observed);

/// Missing (i, t) <- mean of sensor i's observed values in the same day
/// (`steps_per_day` consecutive steps from column 0). Empty sensor-days fall
/// back to the global observed mean.
Tensor2D impute_mean(const Tensor2D& x, const Mask& observed, std::size_t steps_per_day = 288);

struct SvdOptions {
  std::size_t rank = 0;  // 0 = min(10, min(N,T) - 1)
  std::size_t max_iterations = 200;
  double tolerance = 1e-6;
};

struct SvdResult {
  Tensor2D imputed;
  std::size_t iterations = 0;
  double last_change = 0.0;
  bool converged = false;
};

/// Iterative hard-impute: fill missing with column means, then alternate a
/// rank-r truncated SVD with refilling the missing entries from it until the
/// max-norm change of the fill drops below the tolerance.
SvdResult impute_svd(const Tensor2D& x, const Mask& observed, const SvdOptions& options = {});

double mae(const Tensor2D& truth, const Tensor2D& imputed, const Mask& scored);
double mse(const Tensor2D& truth, const Tensor2D& imputed, const Mask& scored);

/// μ̂ <- max(μ̂, 0) for flow data; identity for the other units.
model::GaussianField clip_negative(model::GaussianField field, UnitTag unit);

/// Two-sided standard normal quantile for a central interval, e.g. 1.959964
/// for 0.95.
double normal_quantile(double level);

/// Fraction of scored entries with |y − μ̂| ≤ z(level) · σ̂.
double interval_coverage(const model::GaussianField& field, const Tensor2D& truth, const Mask& scored,
                         double level);

}  // namespace stgin::eval
