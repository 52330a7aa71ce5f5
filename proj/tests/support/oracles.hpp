#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "himfr/image.hpp"
#include "himfr/metrics.hpp"

// Independent reference implementations the tests check production code
// against. These deliberately take different code paths from src/.

namespace himfr::testsupport {

/// Direct bilinear formula at one output pixel of a box resample.
inline double bilinear_oracle(const imaging::ImageBuffer& img, const imaging::Rect& box,
                              int target_h, int target_w, int oy, int ox, int c) {
    double sy = (oy + 0.5) * static_cast<double>(box.h) / target_h - 0.5;
    double sx = (ox + 0.5) * static_cast<double>(box.w) / target_w - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(box.h - 1));
    sx = std::clamp(sx, 0.0, static_cast<double>(box.w - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int x0 = static_cast<int>(std::floor(sx));
    const int y1 = std::min(y0 + 1, box.h - 1);
    const int x1 = std::min(x0 + 1, box.w - 1);
    const double fy = sy - y0;
    const double fx = sx - x0;
    const double p00 = img.at(box.y + y0, box.x + x0, c);
    const double p01 = img.at(box.y + y0, box.x + x1, c);
    const double p10 = img.at(box.y + y1, box.x + x0, c);
    const double p11 = img.at(box.y + y1, box.x + x1, c);
    return (1 - fy) * ((1 - fx) * p00 + fx * p01) + fy * ((1 - fx) * p10 + fx * p11);
}

/// Even-odd point-in-polygon test via crossing counting (per pixel), the
/// counterpart to the production scanline interval fill.
inline bool point_in_polygon(const std::vector<imaging::Point2f>& vs, double px,
                             double py) {
    int crossings = 0;
    const std::size_t n = vs.size();
    for (std::size_t e = 0; e < n; ++e) {
        const auto& a = vs[e];
        const auto& b = vs[(e + 1) % n];
        const double y0 = a.y, y1 = b.y;
        if ((y0 <= py && py < y1) || (y1 <= py && py < y0)) {
            const double t = (py - y0) / (y1 - y0);
            const double xi = a.x + t * (b.x - a.x);
            if (xi > px) ++crossings;
        }
    }
    return (crossings % 2) == 1;
}

inline imaging::BinaryMask rasterize_oracle(const std::vector<imaging::Point2f>& vs,
                                            int h, int w) {
    imaging::BinaryMask mask(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (point_in_polygon(vs, (x + 0.5) / w, (y + 0.5) / h)) mask.at(y, x) = 1;
    return mask;
}

/// Brute-force per-sample branch counting.
inline metrics::ConfusionCounts confusion_oracle(const std::vector<int>& preds,
                                                 const std::vector<int>& truths,
                                                 int positive) {
    metrics::ConfusionCounts c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool predicted_positive = preds[i] == positive;
        const bool actually_positive = truths[i] == positive;
        if (actually_positive) {
            if (predicted_positive) c.tp += 1;
            if (!predicted_positive) c.fn += 1;
        } else {
            if (predicted_positive) c.fp += 1;
            if (!predicted_positive) c.tn += 1;
        }
    }
    return c;
}

/// Mann-Whitney pairwise AUC: fraction of (positive, negative) pairs ranked
/// correctly, ties worth one half.
inline double mann_whitney_auc(const std::vector<double>& scores,
                               const std::vector<int>& truths) {
    long long num2 = 0;  // twice the pair credit, stays integral
    long long pos = 0, neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!truths[i]) continue;
        ++pos;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (truths[j]) continue;
            if (scores[i] > scores[j]) num2 += 2;
            else if (scores[i] == scores[j]) num2 += 1;
        }
    }
    for (int t : truths)
        if (!t) ++neg;
    return static_cast<double>(num2) / (2.0 * static_cast<double>(pos) *
                                        static_cast<double>(neg));
}

/// Window enumeration by explicit position scanning.
inline int window_count_oracle(int h, int w, int patch, int stride) {
    int rows = 0;
    for (int y = 0; y + patch <= h; y += stride) ++rows;
    int cols = 0;
    for (int x = 0; x + patch <= w; x += stride) ++cols;
    return rows * cols;
}

/// Round-half-up train allocation, clamped so both partitions stay
/// non-empty.
inline int split_count_oracle(int class_size, double ratio) {
    const int raw = static_cast<int>(std::floor(class_size * ratio + 0.5));
    return std::max(1, std::min(class_size - 1, raw));
}

}  // namespace himfr::testsupport
