#include "plugreg/linalg.hpp"

namespace plugreg {

namespace {
constexpr std::size_t kBlock = 8;
}

double pairwise_sum(std::span<const double> x) {
  if (x.size() <= kBlock) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

bool all_finite(const Vec& v) { return v.allFinite(); }
bool all_finite(const RowMat& m) { return m.allFinite(); }

}  // namespace plugreg
