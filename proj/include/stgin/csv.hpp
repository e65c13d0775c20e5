#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "stgin/tensor.hpp"

namespace stgin::csv {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// Strict parse of a whole field; throws Error(parse) otherwise.
double parse_double(std::string_view field);

std::vector<std::string_view> split(std::string_view line, char sep = ',');

/// Header-less numeric CSV: one tensor row per line.
void write_matrix(const std::filesystem::path& path, const Tensor2D& m);
Tensor2D read_matrix(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace stgin::csv
