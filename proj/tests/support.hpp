#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "stgin/rng.hpp"
#include "stgin/tensor.hpp"

namespace stgin::testing {

inline Tensor2D random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
  Tensor2D t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * uniform_unit(rng);
  return t;
}

inline std::size_t random_dim(Rng& rng, std::size_t max = 6) { return 1 + uniform_below(rng, max); }

/// Fresh empty directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("stgin_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace stgin::testing
