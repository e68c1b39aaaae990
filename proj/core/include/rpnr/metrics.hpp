#pragma once

#include <span>

#include "rpnr/imaging.hpp"

namespace rpnr {

/// Area under the ROC curve for scores of positive vs negative examples
/// (Mann-Whitney statistic; ties count one half).
double roc_auc(std::span<const double> positive, std::span<const double> negative);

/// Intersection over union of two binary masks; 1 when both are empty.
double iou(const Mask& a, const Mask& b);

/// Mask of pixels where `map` is strictly below `threshold`.
Mask below_threshold(const Raster& map, float threshold);

}  // namespace rpnr
