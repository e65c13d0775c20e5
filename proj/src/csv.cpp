#include "stgin/csv.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "stgin/error.hpp"

namespace stgin::csv {

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw Error(ErrorKind::io, "format_double: conversion failed");
  return std::string(buf.data(), end);
}

double parse_double(std::string_view field) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
    field.remove_suffix(1);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size()) {
    throw Error(ErrorKind::parse, "unparseable number '" + std::string(field) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(ErrorKind::io, "short write to " + path.string());
}

void write_matrix(const std::filesystem::path& path, const Tensor2D& m) {
  std::string text;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) text += ',';
      text += format_double(m(r, c));
    }
    text += '\n';
  }
  write_file(path, text);
}

Tensor2D read_matrix(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<double> data;
  std::size_t rows = 0, cols = 0;
  std::size_t line_no = 0;
  std::string_view rest(text);
  while (!rest.empty()) {
    const std::size_t nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto fields = split(line);
    if (rows == 0) cols = fields.size();
    if (fields.size() != cols) {
      throw Error(ErrorKind::parse, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                        std::to_string(cols) + " fields, got " +
                                        std::to_string(fields.size()));
    }
    for (auto f : fields) {
      try {
        data.push_back(parse_double(f));
      } catch (const Error& e) {
        throw Error(ErrorKind::parse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    ++rows;
  }
  return Tensor2D(rows, cols, std::move(data));
}

}  // namespace stgin::csv
