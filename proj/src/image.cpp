#include "himfr/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace himfr::imaging {

std::size_t BinaryMask::popcount() const {
    return static_cast<std::size_t>(
        std::count(data.begin(), data.end(), std::uint8_t{1}));
}

MaskGeometry MaskGeometry::none() {
    MaskGeometry g;
    g.none_ = true;
    return g;
}

MaskGeometry MaskGeometry::default_face_mask() {
    MaskGeometry g;
    g.vertices = {{0.15f, 0.48f}, {0.85f, 0.48f}, {0.70f, 0.98f}, {0.30f, 0.98f}};
    return g;
}

void MaskGeometry::validate() const {
    if (none_) return;
    if (vertices.size() < 3)
        throw GeometryError("mask geometry needs at least 3 vertices");
    for (const auto& v : vertices) {
        if (v.x < 0.0f || v.x > 1.0f || v.y < 0.0f || v.y > 1.0f)
            throw GeometryError("mask geometry vertex outside unit square");
    }
    // Shoelace area; a zero-area polygon cannot occlude anything.
    double area = 0.0;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        const auto& a = vertices[i];
        const auto& b = vertices[(i + 1) % vertices.size()];
        area += static_cast<double>(a.x) * b.y - static_cast<double>(b.x) * a.y;
    }
    if (std::abs(area) < 1e-12)
        throw GeometryError("mask geometry polygon has zero area");
}

namespace {

// Shared bilinear resampler: samples the box region of `img` onto an
// out_h x out_w grid. Output pixel centers map linearly onto box pixel
// centers; samples are clamped to the box so no pixels outside the crop
// leak in. Pure convex interpolation, clamped to [0,1].
ImageBuffer resample_box(const ImageBuffer& img, const Rect& box, int out_h,
                         int out_w) {
    ImageBuffer out(out_h, out_w, img.channels);
    const double sy_scale = static_cast<double>(box.h) / out_h;
    const double sx_scale = static_cast<double>(box.w) / out_w;
    for (int i = 0; i < out_h; ++i) {
        double sy = (i + 0.5) * sy_scale - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(box.h - 1));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, box.h - 1);
        const double fy = sy - y0;
        for (int j = 0; j < out_w; ++j) {
            double sx = (j + 0.5) * sx_scale - 0.5;
            sx = std::clamp(sx, 0.0, static_cast<double>(box.w - 1));
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, box.w - 1);
            const double fx = sx - x0;
            for (int c = 0; c < img.channels; ++c) {
                const double p00 = img.at(box.y + y0, box.x + x0, c);
                const double p01 = img.at(box.y + y0, box.x + x1, c);
                const double p10 = img.at(box.y + y1, box.x + x0, c);
                const double p11 = img.at(box.y + y1, box.x + x1, c);
                const double v = (1.0 - fy) * ((1.0 - fx) * p00 + fx * p01) +
                                 fy * ((1.0 - fx) * p10 + fx * p11);
                out.at(i, j, c) =
                    std::clamp(static_cast<float>(v), 0.0f, 1.0f);
            }
        }
    }
    return out;
}

ImageBuffer copy_box(const ImageBuffer& img, const Rect& box) {
    ImageBuffer out(box.h, box.w, img.channels);
    for (int i = 0; i < box.h; ++i)
        for (int j = 0; j < box.w; ++j)
            for (int c = 0; c < img.channels; ++c)
                out.at(i, j, c) = img.at(box.y + i, box.x + j, c);
    return out;
}

}  // namespace

ImageBuffer crop_face(const ImageBuffer& img, const Rect& box, int target) {
    if (box.w < 1 || box.h < 1 || box.x < 0 || box.y < 0 ||
        box.x + box.w > img.width || box.y + box.h > img.height)
        throw GeometryError("crop box outside image bounds");
    if (target < 1) throw InputError("crop target must be positive");
    if (box.w == target && box.h == target) return copy_box(img, box);
    return resample_box(img, box, target, target);
}

ImageBuffer resize_bilinear(const ImageBuffer& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw InputError("resize target must be positive");
    if (img.height == out_h && img.width == out_w) return img;
    return resample_box(img, Rect{0, 0, img.width, img.height}, out_h, out_w);
}

BinaryMask rasterize_polygon(const std::vector<Point2f>& vertices, int height,
                             int width) {
    BinaryMask mask(height, width);
    const std::size_t n = vertices.size();
    std::vector<double> xs;
    for (int i = 0; i < height; ++i) {
        const double yc = (i + 0.5) / height;
        xs.clear();
        for (std::size_t e = 0; e < n; ++e) {
            const auto& a = vertices[e];
            const auto& b = vertices[(e + 1) % n];
            const double y0 = a.y, y1 = b.y;
            // Half-open rule so a scanline through a vertex is counted once.
            if ((y0 <= yc && yc < y1) || (y1 <= yc && yc < y0)) {
                const double t = (yc - y0) / (y1 - y0);
                xs.push_back(a.x + t * (b.x - a.x));
            }
        }
        std::sort(xs.begin(), xs.end());
        for (std::size_t p = 0; p + 1 < xs.size(); p += 2) {
            // Pixel centers in [xs[p], xs[p+1]).
            int j0 = static_cast<int>(std::ceil(xs[p] * width - 0.5));
            int j1 = static_cast<int>(std::ceil(xs[p + 1] * width - 0.5));
            j0 = std::max(j0, 0);
            j1 = std::min(j1, width);
            for (int j = j0; j < j1; ++j) mask.at(i, j) = 1;
        }
    }
    return mask;
}

BinaryMask resize_mask_nearest(const BinaryMask& mask, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw InputError("mask resize target must be positive");
    if (mask.height == out_h && mask.width == out_w) return mask;
    BinaryMask out(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        const int sy = std::min(mask.height - 1,
                                static_cast<int>((y + 0.5) * mask.height / out_h));
        for (int x = 0; x < out_w; ++x) {
            const int sx = std::min(mask.width - 1,
                                    static_cast<int>((x + 0.5) * mask.width / out_w));
            out.at(y, x) = mask.at(sy, sx);
        }
    }
    return out;
}

MaskedPair synthesize_mask(const ImageBuffer& img, const MaskGeometry& geom,
                           std::uint64_t seed, float jitter) {
    geom.validate();
    MaskedPair pair;
    pair.ground_truth = img;
    pair.masked_image = img;
    pair.hidden_complement = ImageBuffer(img.height, img.width, img.channels);
    if (geom.is_none()) {
        pair.mask = BinaryMask(img.height, img.width, 0);
        return pair;
    }

    pair.mask = rasterize_polygon(geom.vertices, img.height, img.width);

    float fill[3] = {geom.fill[0], geom.fill[1], geom.fill[2]};
    if (jitter > 0.0f) {
        Rng rng(mix_seed(seed, 0));
        std::uniform_real_distribution<float> d(-jitter, jitter);
        for (float& f : fill) f = std::clamp(f + d(rng), 0.0f, 1.0f);
    }
    // Single-channel images take the luma of the fill color.
    const float luma = 0.299f * fill[0] + 0.587f * fill[1] + 0.114f * fill[2];

    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (!pair.mask.at(y, x)) continue;
            for (int c = 0; c < img.channels; ++c) {
                pair.hidden_complement.at(y, x, c) = img.at(y, x, c);
                pair.masked_image.at(y, x, c) =
                    img.channels == 3 ? fill[c] : luma;
            }
        }
    }
    return pair;
}

BinaryMask segment_mask(const MaskedPair& pair, SegmentationMode mode,
                        const SegmentationConfig& cfg) {
    if (mode == SegmentationMode::ground_truth) return pair.mask;
    return segment_by_color(pair.masked_image, cfg);
}

BinaryMask segment_by_color(const ImageBuffer& masked,
                            const SegmentationConfig& cfg) {
    BinaryMask mask(masked.height, masked.width);
    const float luma =
        0.299f * cfg.fill[0] + 0.587f * cfg.fill[1] + 0.114f * cfg.fill[2];
    for (int y = 0; y < masked.height; ++y) {
        for (int x = 0; x < masked.width; ++x) {
            float dist = 0.0f;
            for (int c = 0; c < masked.channels; ++c) {
                const float ref = masked.channels == 3 ? cfg.fill[c] : luma;
                dist = std::max(dist, std::abs(masked.at(y, x, c) - ref));
            }
            if (dist <= cfg.tau) mask.at(y, x) = 1;
        }
    }
    if (mask.popcount() == 0)
        log_warning("color-threshold segmentation matched no pixels");
    return mask;
}

ImageBuffer composite(const ImageBuffer& known, const ImageBuffer& generated,
                      const BinaryMask& mask) {
    if (!known.same_shape(generated) || mask.height != known.height ||
        mask.width != known.width)
        throw ShapeError("composite inputs must share spatial dimensions");
    ImageBuffer out = known;
    for (int y = 0; y < known.height; ++y)
        for (int x = 0; x < known.width; ++x)
            if (mask.at(y, x))
                for (int c = 0; c < known.channels; ++c)
                    out.at(y, x, c) = generated.at(y, x, c);
    return out;
}

}  // namespace himfr::imaging
