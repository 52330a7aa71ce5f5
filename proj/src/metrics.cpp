#include "himfr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace himfr::metrics {

ConfusionCounts confusion(const std::vector<int>& predictions,
                          const std::vector<int>& truths, int positive) {
    if (predictions.size() != truths.size())
        throw InputError("confusion: prediction/truth length mismatch");
    if (predictions.empty()) throw InputError("confusion: empty input");
    ConfusionCounts c;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const bool p = predictions[i] == positive;
        const bool t = truths[i] == positive;
        if (p && t) ++c.tp;
        else if (p && !t) ++c.fp;
        else if (!p && t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

namespace {

double ratio_or_zero(long long num, long long den, bool* degenerate) {
    if (den == 0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double precision(const ConfusionCounts& c, bool* degenerate) {
    return ratio_or_zero(c.tp, c.tp + c.fp, degenerate);
}

double recall(const ConfusionCounts& c, bool* degenerate) {
    return ratio_or_zero(c.tp, c.tp + c.fn, degenerate);
}

double accuracy(const ConfusionCounts& c, bool* degenerate) {
    return ratio_or_zero(c.tp + c.tn, c.total(), degenerate);
}

double f1(const ConfusionCounts& c, bool* degenerate) {
    bool deg_p = false, deg_r = false;
    const double p = precision(c, &deg_p);
    const double r = recall(c, &deg_r);
    if (deg_p || deg_r || p + r == 0.0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return 2.0 * p * r / (p + r);
}

std::pair<double, double> macro_and_weighted(
    const std::vector<double>& per_class_values,
    const std::vector<long long>& class_supports) {
    if (per_class_values.empty() ||
        per_class_values.size() != class_supports.size())
        throw InputError("macro_and_weighted: empty or mismatched class lists");
    long long support_sum = 0;
    for (long long s : class_supports) support_sum += s;
    if (support_sum <= 0)
        throw InputError("macro_and_weighted: supports must sum > 0");

    double macro = 0.0, weighted = 0.0;
    for (std::size_t i = 0; i < per_class_values.size(); ++i) {
        macro += per_class_values[i];
        weighted += per_class_values[i] * static_cast<double>(class_supports[i]);
    }
    macro /= static_cast<double>(per_class_values.size());
    weighted /= static_cast<double>(support_sum);
    return {macro, weighted};
}

double psnr(const ImageBuffer& a, const ImageBuffer& b, double peak) {
    if (!a.same_shape(b)) throw ShapeError("psnr: image shape mismatch");
    if (!(peak > 0.0)) throw InputError("psnr: peak must be positive");
    double se = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double psnr_masked(const ImageBuffer& a, const ImageBuffer& b,
                   const imaging::BinaryMask& mask, double peak) {
    if (!a.same_shape(b)) throw ShapeError("psnr_masked: image shape mismatch");
    if (mask.height != a.height || mask.width != a.width)
        throw ShapeError("psnr_masked: mask shape mismatch");
    double se = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x)
            if (mask.at(y, x))
                for (int c = 0; c < a.channels; ++c) {
                    const double d =
                        static_cast<double>(a.at(y, x, c)) - b.at(y, x, c);
                    se += d * d;
                    ++n;
                }
    if (n == 0) throw InputError("psnr_masked: mask selects no pixels");
    const double mse = se / static_cast<double>(n);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const ImageBuffer& a, const ImageBuffer& b, int window) {
    if (!a.same_shape(b)) throw ShapeError("ssim: image shape mismatch");
    if (window < 3 || window % 2 == 0)
        throw InputError("ssim: window must be odd and >= 3");
    if (a.height < window || a.width < window)
        throw InputError("ssim: image smaller than window");

    const double sigma = 1.5;
    const double peak = 1.0;
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);

    // Normalized 2-D Gaussian window.
    std::vector<double> w(static_cast<std::size_t>(window) * window);
    const int half = window / 2;
    double wsum = 0.0;
    for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) {
            const double g = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            w[static_cast<std::size_t>(dy + half) * window + (dx + half)] = g;
            wsum += g;
        }
    for (double& v : w) v /= wsum;

    double total = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < a.channels; ++c) {
        for (int y = 0; y + window <= a.height; ++y) {
            for (int x = 0; x + window <= a.width; ++x) {
                double mu1 = 0, mu2 = 0, s11 = 0, s22 = 0, s12 = 0;
                for (int dy = 0; dy < window; ++dy)
                    for (int dx = 0; dx < window; ++dx) {
                        const double wv = w[static_cast<std::size_t>(dy) * window + dx];
                        const double p1 = a.at(y + dy, x + dx, c);
                        const double p2 = b.at(y + dy, x + dx, c);
                        mu1 += wv * p1;
                        mu2 += wv * p2;
                        s11 += wv * (p1 * p1);
                        s22 += wv * (p2 * p2);
                        s12 += wv * (p1 * p2);
                    }
                const double var1 = s11 - mu1 * mu1;
                const double var2 = s22 - mu2 * mu2;
                const double cov = s12 - mu1 * mu2;
                const double num = (2.0 * mu1 * mu2 + c1) * (2.0 * cov + c2);
                const double den =
                    (mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2);
                total += num / den;
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

RocCurve roc_auc(const std::vector<double>& scores,
                 const std::vector<int>& truths) {
    if (scores.size() != truths.size() || scores.empty())
        throw InputError("roc_auc: empty or mismatched inputs");

    // Group samples by score, descending.
    std::map<double, std::pair<long long, long long>, std::greater<double>> groups;
    long long pos = 0, neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        auto& g = groups[scores[i]];
        if (truths[i]) {
            ++g.first;
            ++pos;
        } else {
            ++g.second;
            ++neg;
        }
    }
    if (pos == 0 || neg == 0)
        throw InputError("roc_auc: AUC undefined with a single-class truth set");

    RocCurve curve;
    curve.points.emplace_back(0.0, 0.0);
    long long tp = 0, fp = 0;
    // Twice the trapezoid area, scaled by pos*neg, stays integral: each
    // score group contributes n_s * (2*tp_before + p_s).
    long long twice_area = 0;
    for (const auto& [score, counts] : groups) {
        const auto [p_s, n_s] = counts;
        twice_area += n_s * (2 * tp + p_s);
        tp += p_s;
        fp += n_s;
        curve.points.emplace_back(static_cast<double>(fp) / neg,
                                  static_cast<double>(tp) / pos);
    }
    curve.auc = static_cast<double>(twice_area) /
                (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
    return curve;
}

std::vector<RocCurve> roc_auc_per_class(
    const std::vector<std::vector<double>>& probabilities,
    const std::vector<int>& labels, int num_classes) {
    if (probabilities.size() != labels.size())
        throw InputError("roc_auc_per_class: size mismatch");
    std::vector<RocCurve> curves;
    for (int k = 0; k < num_classes; ++k) {
        std::vector<double> scores;
        std::vector<int> truths;
        scores.reserve(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            scores.push_back(probabilities[i][k]);
            truths.push_back(labels[i] == k ? 1 : 0);
        }
        curves.push_back(roc_auc(scores, truths));
    }
    return curves;
}

double integrate_roc(const RocCurve& curve) {
    double area = 0.0;
    for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
        const auto& [x0, y0] = curve.points[i];
        const auto& [x1, y1] = curve.points[i + 1];
        area += (x1 - x0) * (y0 + y1) * 0.5;
    }
    return area;
}

std::string roc_to_csv(const RocCurve& curve) {
    std::ostringstream out;
    out << "fpr,tpr\n";
    char buf[64];
    for (const auto& [fpr, tpr] : curve.points) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", fpr, tpr);
        out << buf;
    }
    return out.str();
}

RocCurve roc_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "fpr,tpr")
        throw DataError("roc csv missing fpr,tpr header");
    RocCurve curve;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw DataError("malformed roc row: " + line);
        curve.points.emplace_back(std::stod(line.substr(0, comma)),
                                  std::stod(line.substr(comma + 1)));
    }
    if (curve.points.size() < 2) throw DataError("roc csv has too few points");
    curve.auc = integrate_roc(curve);
    return curve;
}

void MetricReport::add(std::string metric, std::string cls, double value) {
    rows.emplace_back(std::move(metric), std::move(cls), value);
}

namespace {

std::string format_value(double v) {
    if (std::isinf(v)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

std::string MetricReport::to_csv() const {
    std::ostringstream out;
    out << "metric,class,value\n";
    for (const auto& [metric, cls, value] : rows)
        out << metric << "," << cls << "," << format_value(value) << "\n";
    return out.str();
}

std::string MetricReport::to_json() const {
    std::ostringstream out;
    out << "[";
    bool first = true;
    for (const auto& [metric, cls, value] : rows) {
        if (!first) out << ",";
        first = false;
        out << "\n  {\"metric\": \"" << metric << "\", \"class\": \"" << cls
            << "\", \"value\": ";
        if (std::isinf(value)) out << "\"inf\"";
        else out << format_value(value);
        out << "}";
    }
    out << "\n]\n";
    return out.str();
}

MetricReport MetricReport::from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "metric,class,value")
        throw DataError("metric csv missing metric,class,value header");
    MetricReport report;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c0 = line.find(',');
        const auto c1 = line.find(',', c0 + 1);
        if (c0 == std::string::npos || c1 == std::string::npos)
            throw DataError("malformed metric row: " + line);
        const std::string value = line.substr(c1 + 1);
        report.add(line.substr(0, c0), line.substr(c0 + 1, c1 - c0 - 1),
                   value == "inf" ? std::numeric_limits<double>::infinity()
                                  : std::stod(value));
    }
    return report;
}

MetricReport classification_report(const std::vector<int>& predictions,
                                   const std::vector<int>& truths,
                                   int num_classes) {
    if (predictions.size() != truths.size() || predictions.empty())
        throw InputError("classification_report: empty or mismatched inputs");

    MetricReport report;
    std::vector<double> ps, rs, fs;
    std::vector<long long> supports;
    for (int k = 0; k < num_classes; ++k) {
        const ConfusionCounts c = confusion(predictions, truths, k);
        bool deg = false;
        ps.push_back(precision(c, &deg));
        rs.push_back(recall(c, &deg));
        fs.push_back(f1(c, &deg));
        supports.push_back(c.tp + c.fn);
        const std::string cls = std::to_string(k);
        report.add("precision", cls, ps.back());
        report.add("recall", cls, rs.back());
        report.add("f1", cls, fs.back());
        report.add("support", cls, static_cast<double>(supports.back()));
    }

    long long correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] == truths[i]) ++correct;
    report.add("accuracy", "all",
               static_cast<double>(correct) / static_cast<double>(truths.size()));

    const auto [macro_p, weighted_p] = macro_and_weighted(ps, supports);
    const auto [macro_r, weighted_r] = macro_and_weighted(rs, supports);
    const auto [macro_f, weighted_f] = macro_and_weighted(fs, supports);
    report.add("precision", "macro", macro_p);
    report.add("recall", "macro", macro_r);
    report.add("f1", "macro", macro_f);
    report.add("precision", "weighted", weighted_p);
    report.add("recall", "weighted", weighted_r);
    report.add("f1", "weighted", weighted_f);
    return report;
}

}  // namespace himfr::metrics
