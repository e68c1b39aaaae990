#include "rpnr/metrics.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace rpnr {

double roc_auc(std::span<const double> positive, std::span<const double> negative) {
  if (positive.empty() || negative.empty()) {
    throw std::invalid_argument("roc_auc needs at least one positive and one negative score");
  }
  std::vector<double> neg(negative.begin(), negative.end());
  std::sort(neg.begin(), neg.end());
  double wins = 0.0;
  for (double p : positive) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
    const auto hi = std::upper_bound(lo, neg.end(), p);
    wins += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(positive.size()) * static_cast<double>(neg.size()));
}

double iou(const Mask& a, const Mask& b) {
  require_same_extent(a, b, "iou");
  std::size_t inter = 0;
  std::size_t uni = 0;
  const auto pa = a.plane(0);
  const auto pb = b.plane(0);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const bool x = pa[i] != 0.0f;
    const bool y = pb[i] != 0.0f;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Mask below_threshold(const Raster& map, float threshold) {
  if (map.channels() != 1) throw ShapeError("below_threshold expects a single-channel map");
  Mask out(map.height(), map.width());
  const auto src = map.plane(0);
  auto dst = out.plane(0);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] < threshold ? 1.0f : 0.0f;
  return out;
}

}  // namespace rpnr
