#pragma once

#include <string>
#include <vector>

#include "plugreg/linalg.hpp"

namespace plugreg {

/// Per-observation nuisance values, one named column per role (h, q, V, p, g, ...).
class NuisanceColumns {
 public:
  NuisanceColumns() = default;
  NuisanceColumns(std::vector<std::string> roles, Index rows);

  Index rows() const noexcept { return values_.rows(); }
  const std::vector<std::string>& roles() const noexcept { return roles_; }
  const RowMat& values() const noexcept { return values_; }

  bool has(const std::string& role) const;
  Vec col(const std::string& role) const;
  void set(const std::string& role, const Vec& v);
  void set_row(Index row, const NuisanceColumns& src, Index src_row);

  /// Rows `rows` of this table, in that order.
  NuisanceColumns subset(const std::vector<std::size_t>& rows) const;

  /// this + r * (dir - this), role by role.
  NuisanceColumns toward(const NuisanceColumns& dir, double r) const;

 private:
  Index index_of(const std::string& role) const;

  std::vector<std::string> roles_;
  RowMat values_;
};

}  // namespace plugreg
