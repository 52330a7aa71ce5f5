#pragma once

#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "himfr/image.hpp"

namespace himfr::metrics {

using imaging::ImageBuffer;

/// One-vs-rest confusion tallies.
struct ConfusionCounts {
    long long tp = 0;
    long long tn = 0;
    long long fp = 0;
    long long fn = 0;

    long long total() const { return tp + tn + fp + fn; }
};

ConfusionCounts confusion(const std::vector<int>& predictions,
                          const std::vector<int>& truths, int positive);

// Each metric returns 0 when its denominator is empty; `degenerate`, when
// provided, flags that case so callers can surface the warning.
double precision(const ConfusionCounts& c, bool* degenerate = nullptr);
double recall(const ConfusionCounts& c, bool* degenerate = nullptr);
double accuracy(const ConfusionCounts& c, bool* degenerate = nullptr);
double f1(const ConfusionCounts& c, bool* degenerate = nullptr);

/// Unweighted and support-weighted means of a per-class metric.
std::pair<double, double> macro_and_weighted(
    const std::vector<double>& per_class_values,
    const std::vector<long long>& class_supports);

/// 10*log10(peak^2 / MSE) over all pixels and channels; +inf when MSE = 0.
double psnr(const ImageBuffer& a, const ImageBuffer& b, double peak = 1.0);

/// PSNR restricted to mask = 1 pixels.
double psnr_masked(const ImageBuffer& a, const ImageBuffer& b,
                   const imaging::BinaryMask& mask, double peak = 1.0);

/// Mean local structural similarity over all fully-contained Gaussian
/// windows (default 11 taps, sigma 1.5, K1 = 0.01, K2 = 0.03, peak 1).
double ssim(const ImageBuffer& a, const ImageBuffer& b, int window = 11);

struct QualityScore {
    double psnr = 0.0;  // +inf sentinel when images are identical
    double ssim = 0.0;
};

struct RocCurve {
    std::vector<std::pair<double, double>> points;  // (fpr, tpr), (0,0)..(1,1)
    double auc = 0.0;
};

/// Threshold sweep over the unique scores, one ROC point per distinct score,
/// trapezoidal AUC (accumulated in exact integer arithmetic, so ties get the
/// conventional half credit). Throws InputError unless both classes appear.
RocCurve roc_auc(const std::vector<double>& scores,
                 const std::vector<int>& truths);

/// One-vs-rest curves for a multi-class problem; `probabilities[i][k]` is
/// sample i's score for class k.
std::vector<RocCurve> roc_auc_per_class(
    const std::vector<std::vector<double>>& probabilities,
    const std::vector<int>& labels, int num_classes);

/// Trapezoidal re-integration of stored curve points.
double integrate_roc(const RocCurve& curve);

std::string roc_to_csv(const RocCurve& curve);
RocCurve roc_from_csv(const std::string& text);

/// Flat metric report: ordered (metric, class, value) rows rendered as
/// 6-decimal CSV or the equivalent JSON object. Infinite values serialize
/// as the string "inf".
struct MetricReport {
    std::vector<std::tuple<std::string, std::string, double>> rows;

    void add(std::string metric, std::string cls, double value);
    std::string to_csv() const;
    std::string to_json() const;
    static MetricReport from_csv(const std::string& text);
};

/// Builds the standard per-class classification report: precision / recall /
/// f1 per class, overall accuracy (fraction correct), and macro / weighted
/// aggregate rows.
MetricReport classification_report(const std::vector<int>& predictions,
                                   const std::vector<int>& truths,
                                   int num_classes);

}  // namespace himfr::metrics
