#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "himfr/common.hpp"

namespace himfr::imaging {

/// Dense float image, row-major, channel-interleaved, intensities in [0,1].
struct ImageBuffer {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    ImageBuffer() = default;
    ImageBuffer(int h, int w, int c, float fill = 0.0f)
        : height(h), width(w), channels(c),
          data(static_cast<std::size_t>(h) * w * c, fill) {}

    float& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    std::size_t pixel_count() const {
        return static_cast<std::size_t>(height) * width;
    }
    bool same_shape(const ImageBuffer& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
    bool empty() const { return data.empty(); }
};

/// Per-pixel occlusion indicator, 1 = hidden.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;  // values strictly {0,1}

    BinaryMask() = default;
    BinaryMask(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

    std::uint8_t& at(int y, int x) {
        return data[static_cast<std::size_t>(y) * width + x];
    }
    std::uint8_t at(int y, int x) const {
        return data[static_cast<std::size_t>(y) * width + x];
    }

    std::size_t popcount() const;
    bool operator==(const BinaryMask& o) const = default;
};

struct Point2f {
    float x = 0.0f;
    float y = 0.0f;
};

/// Polygonal occlusion shape in normalized [0,1]^2 coordinates plus the
/// RGB fill painted into the occluded region.
struct MaskGeometry {
    std::vector<Point2f> vertices;       // >= 3 unless none()
    float fill[3] = {0.35f, 0.55f, 0.85f};

    /// Explicit no-occlusion geometry; the only way to get an all-zero mask.
    static MaskGeometry none();
    bool is_none() const { return vertices.empty() && none_; }

    /// Trapezoid over the lower half of a cropped face (nose and mouth
    /// region), rows [0.48, 0.98], columns [0.15, 0.85].
    static MaskGeometry default_face_mask();

    void validate() const;

private:
    bool none_ = false;
};

/// A masked image together with its occlusion mask, the original pixels
/// hidden under the mask, and optionally the full original image.
struct MaskedPair {
    ImageBuffer masked_image;
    BinaryMask mask;
    ImageBuffer hidden_complement;  // meaningful only where mask = 1
    std::optional<ImageBuffer> ground_truth;
};

struct Rect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
};

/// Crops `box` out of `img` and bilinearly resamples it to target x target.
/// A box that already matches the target size is copied bit-exact.
/// Throws GeometryError if the box leaves the image bounds.
ImageBuffer crop_face(const ImageBuffer& img, const Rect& box, int target);

/// Bilinear resize of a whole image (same resampling as crop_face).
ImageBuffer resize_bilinear(const ImageBuffer& img, int out_h, int out_w);

/// Paints `geom` onto a cropped face. The rasterized polygon becomes the
/// binary mask, the pixels it hides are kept as the hidden complement, and
/// the fill color (with optional seed-controlled RGB jitter <= jitter) is
/// painted over them. Deterministic per (img, geom, seed).
MaskedPair synthesize_mask(const ImageBuffer& img, const MaskGeometry& geom,
                           std::uint64_t seed, float jitter = 0.0f);

enum class SegmentationMode { ground_truth, color_threshold };

struct SegmentationConfig {
    float fill[3] = {0.35f, 0.55f, 0.85f};
    float tau = 0.05f;  // L-inf distance to the registered fill color
};

/// Recovers the occlusion mask from a masked image. ground_truth mode
/// returns the stored mask; color_threshold marks pixels within tau of the
/// configured fill color and warns when nothing matches.
BinaryMask segment_mask(const MaskedPair& pair, SegmentationMode mode,
                        const SegmentationConfig& cfg = {});

/// color_threshold segmentation for images without a stored mask.
BinaryMask segment_by_color(const ImageBuffer& masked,
                            const SegmentationConfig& cfg = {});

/// Merges two images through a mask: known pixels where mask = 0, generated
/// pixels where mask = 1, both regions copied bit-exact.
ImageBuffer composite(const ImageBuffer& known, const ImageBuffer& generated,
                      const BinaryMask& mask);

/// Rasterizes a polygon at pixel centers via even-odd scanline fill.
BinaryMask rasterize_polygon(const std::vector<Point2f>& vertices, int height,
                             int width);

/// Nearest-neighbor mask resize; keeps values strictly {0,1}.
BinaryMask resize_mask_nearest(const BinaryMask& mask, int out_h, int out_w);

}  // namespace himfr::imaging
