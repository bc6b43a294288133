#include "plugreg/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "plugreg/errors.hpp"

namespace plugreg {

std::string block_name(const std::string& prefix, std::size_t one_based) {
  return prefix + "_" + std::to_string(one_based);
}

void Dataset::add_column(const std::string& name, Vec values) {
  if (static_cast<std::size_t>(values.size()) != n_)
    throw DataError("column '" + name + "' has " + std::to_string(values.size()) +
                    " rows, expected " + std::to_string(n_));
  if (has(name)) throw DataError("duplicate column '" + name + "'");
  names_.push_back(name);
  columns_.push_back(std::move(values));
}

void Dataset::add_block(const std::string& prefix, const Mat& block) {
  for (Index j = 0; j < block.cols(); ++j)
    add_column(block_name(prefix, static_cast<std::size_t>(j + 1)), block.col(j));
}

bool Dataset::has(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t Dataset::index_of(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw DataError("missing column '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

const Vec& Dataset::col(const std::string& name) const { return columns_[index_of(name)]; }

std::size_t Dataset::block_width(const std::string& prefix) const {
  std::size_t k = 0;
  while (has(block_name(prefix, k + 1))) ++k;
  return k;
}

Mat Dataset::block(const std::string& prefix) const {
  const std::size_t k = block_width(prefix);
  Mat out(static_cast<Index>(n_), static_cast<Index>(k));
  for (std::size_t j = 0; j < k; ++j) out.col(static_cast<Index>(j)) = col(block_name(prefix, j + 1));
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out(rows.size());
  for (std::size_t c = 0; c < names_.size(); ++c) {
    Vec v(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] >= n_) throw DataError("subset row out of range", rows[i]);
      v[static_cast<Index>(i)] = columns_[c][static_cast<Index>(rows[i])];
    }
    out.add_column(names_[c], std::move(v));
  }
  return out;
}

void Dataset::write_csv(std::ostream& os) const {
  for (std::size_t c = 0; c < names_.size(); ++c) os << (c ? "," : "") << names_[c];
  os << '\n';
  char buf[32];
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t c = 0; c < names_.size(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", columns_[c][static_cast<Index>(i)]);
      os << (c ? "," : "") << buf;
    }
    os << '\n';
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

Dataset Dataset::read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("empty CSV input");
  const auto header = split_csv_line(line);
  if (header.empty()) throw DataError("CSV header is empty");

  std::vector<std::vector<double>> cols(header.size());
  std::size_t row = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError("CSV row has " + std::to_string(fields.size()) + " fields, header has " +
                          std::to_string(header.size()),
                      row);
    for (std::size_t c = 0; c < fields.size(); ++c) {
      double v = 0.0;
      const auto& f = fields[c];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size())
        throw DataError("unparseable value '" + f + "' in column '" + header[c] + "'", row);
      cols[c].push_back(v);
    }
    ++row;
  }
  Dataset out(row);
  for (std::size_t c = 0; c < header.size(); ++c)
    out.add_column(header[c], Eigen::Map<const Vec>(cols[c].data(), static_cast<Index>(row)));
  return out;
}

}  // namespace plugreg
