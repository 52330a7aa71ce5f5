#pragma once

#include "himfr/metrics.hpp"

namespace himfr::plot {

using imaging::ImageBuffer;

/// Renders one-vs-rest ROC curves (one color per class) with a diagonal
/// reference line and per-class AUC labels.
ImageBuffer render_roc(const std::vector<metrics::RocCurve>& curves, int size = 512);

/// Tiles images row by row with a light separator; every image must share
/// the same dimensions.
ImageBuffer image_grid(const std::vector<std::vector<const ImageBuffer*>>& rows,
                       int pad = 2);

}  // namespace himfr::plot
