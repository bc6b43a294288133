#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "plugreg/linalg.hpp"

namespace plugreg {

/// Column store of n observations. Scalar roles use plain names (y, tau, d,
/// v); vector roles use numbered prefixes (u_1..u_k, x_1..x_p).
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::size_t n_rows) : n_(n_rows) {}

  std::size_t rows() const noexcept { return n_; }
  std::size_t cols() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  void add_column(const std::string& name, Vec values);
  /// Adds columns prefix_1 .. prefix_k from the columns of `block`.
  void add_block(const std::string& prefix, const Mat& block);

  bool has(const std::string& name) const;
  const Vec& col(const std::string& name) const;

  /// Number of columns named prefix_1, prefix_2, ... (contiguous from 1).
  std::size_t block_width(const std::string& prefix) const;
  Mat block(const std::string& prefix) const;

  Dataset subset(const std::vector<std::size_t>& rows) const;

  /// Writes a header row followed by one row per observation (%.17g).
  void write_csv(std::ostream& os) const;
  static Dataset read_csv(std::istream& is);

 private:
  std::size_t index_of(const std::string& name) const;

  std::size_t n_ = 0;
  std::vector<std::string> names_;
  std::vector<Vec> columns_;
};

std::string block_name(const std::string& prefix, std::size_t one_based);

}  // namespace plugreg
