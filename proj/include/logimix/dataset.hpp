#pragma once

#include <cerrno>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "logimix/error.hpp"

namespace logimix {

/// Dense row-major n x p matrix of observations.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t n, std::size_t p) : n_(n), p_(p), values_(n * p, 0.0) {}
  Dataset(std::size_t n, std::size_t p, std::vector<double> values)
      : n_(n), p_(p), values_(std::move(values)) {
    detail::require(values_.size() == n_ * p_, "Dataset: value count does not match n * p");
  }

  std::size_t rows() const { return n_; }
  std::size_t cols() const { return p_; }
  bool empty() const { return n_ == 0; }

  std::span<double> row(std::size_t i) { return {values_.data() + i * p_, p_}; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * p_, p_}; }
  double operator()(std::size_t i, std::size_t k) const { return values_[i * p_ + k]; }
  double& operator()(std::size_t i, std::size_t k) { return values_[i * p_ + k]; }

  std::span<const double> values() const { return values_; }

  /// Copy of column k.
  std::vector<double> column(std::size_t k) const {
    std::vector<double> out(n_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = values_[i * p_ + k];
    return out;
  }

  /// The dataset with every row repeated `times` times in sequence.
  Dataset repeated(std::size_t times) const {
    std::vector<double> v;
    v.reserve(values_.size() * times);
    for (std::size_t t = 0; t < times; ++t) v.insert(v.end(), values_.begin(), values_.end());
    return Dataset(n_ * times, p_, std::move(v));
  }

  void validate() const {
    detail::require(n_ >= 1, "Dataset: at least one row is required");
    detail::require(p_ >= 1, "Dataset: at least one column is required");
    for (double v : values_) detail::require(std::isfinite(v), "Dataset: entries must be finite");
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t p_ = 0;
  std::vector<double> values_;
};

namespace detail {

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline double parse_real(std::string_view field, std::size_t line_no) {
  const std::string text(trim(field));
  if (text.empty()) {
    throw ValidationError("CSV line " + std::to_string(line_no) + ": empty field");
  }
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || errno == ERANGE || !std::isfinite(v)) {
    throw ValidationError("CSV line " + std::to_string(line_no) + ": '" + text +
                          "' is not a finite decimal number");
  }
  return v;
}

}  // namespace detail

/// Parses CSV text: comma separated, one observation per line, lines whose
/// first non-blank character is '#' are skipped, blank lines ignored.
inline Dataset parse_csv(std::string_view text) {
  std::vector<double> values;
  std::size_t p = 0;
  std::size_t n = 0;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = detail::trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    std::size_t fields = 0;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      const auto field = line.substr(start, comma == std::string_view::npos ? line.size() - start
                                                                           : comma - start);
      values.push_back(detail::parse_real(field, line_no));
      ++fields;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (p == 0) p = fields;
    if (fields != p) {
      throw ValidationError("CSV line " + std::to_string(line_no) + ": expected " +
                            std::to_string(p) + " columns, found " + std::to_string(fields));
    }
    ++n;
  }
  if (n == 0) throw ValidationError("CSV input contains no data rows");
  return Dataset(n, p, std::move(values));
}

inline Dataset read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open data file '" + path + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_csv(text);
}

/// CSV with 17 significant digits per value; `header` (if non-empty) is
/// written as a '#' comment line.
inline std::string to_csv(const Dataset& data, std::string_view header = {}) {
  std::ostringstream out;
  if (!header.empty()) out << "# " << header << '\n';
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t k = 0; k < data.cols(); ++k) {
      if (k) out << ',';
      out << detail::format_real(data(i, k));
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace logimix
