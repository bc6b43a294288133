#include "plugreg/nuisance.hpp"

#include <algorithm>
#include <limits>

#include "plugreg/errors.hpp"

namespace plugreg {

NuisanceColumns::NuisanceColumns(std::vector<std::string> roles, Index rows)
    : roles_(std::move(roles)),
      values_(RowMat::Constant(rows, static_cast<Index>(roles_.size()),
                               std::numeric_limits<double>::quiet_NaN())) {}

bool NuisanceColumns::has(const std::string& role) const {
  return std::find(roles_.begin(), roles_.end(), role) != roles_.end();
}

Index NuisanceColumns::index_of(const std::string& role) const {
  const auto it = std::find(roles_.begin(), roles_.end(), role);
  if (it == roles_.end()) throw DataError("nuisance role '" + role + "' not present");
  return static_cast<Index>(it - roles_.begin());
}

Vec NuisanceColumns::col(const std::string& role) const { return values_.col(index_of(role)); }

void NuisanceColumns::set(const std::string& role, const Vec& v) {
  if (v.size() != values_.rows()) throw DataError("nuisance role '" + role + "' has wrong length");
  values_.col(index_of(role)) = v;
}

void NuisanceColumns::set_row(Index row, const NuisanceColumns& src, Index src_row) {
  for (std::size_t k = 0; k < roles_.size(); ++k)
    values_(row, static_cast<Index>(k)) = src.values_(src_row, src.index_of(roles_[k]));
}

NuisanceColumns NuisanceColumns::subset(const std::vector<std::size_t>& rows) const {
  NuisanceColumns out(roles_, static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(values_.rows()))
      throw DataError("nuisance subset row out of range", rows[i]);
    out.values_.row(static_cast<Index>(i)) = values_.row(static_cast<Index>(rows[i]));
  }
  return out;
}

NuisanceColumns NuisanceColumns::toward(const NuisanceColumns& dir, double r) const {
  NuisanceColumns out = *this;
  for (std::size_t k = 0; k < roles_.size(); ++k) {
    const Index j = static_cast<Index>(k);
    const Vec d = dir.col(roles_[k]);
    if (d.size() != values_.rows()) throw DataError("direction table has wrong length");
    out.values_.col(j) = values_.col(j) + r * (d - values_.col(j));
  }
  return out;
}

}  // namespace plugreg
