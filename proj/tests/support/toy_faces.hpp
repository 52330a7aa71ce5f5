#pragma once

#include <cmath>

#include "himfr/common.hpp"
#include "himfr/image.hpp"

namespace himfr::testsupport {

// Deterministic synthetic face: gradient background, skin-tone ellipse,
// eyes, mouth. Class id shifts tone and proportions; the sample seed adds
// small jitter, so tiny per-class sets are learnable but not constant.
inline imaging::ImageBuffer toy_face(int size, int class_id, std::uint64_t sample_seed) {
    imaging::ImageBuffer img(size, size, 3);
    Rng rng(mix_seed(0x70f4ce5ULL + static_cast<std::uint64_t>(class_id), sample_seed));
    std::uniform_real_distribution<float> jitter(-0.02f, 0.02f);
    std::uniform_real_distribution<float> noise(-0.015f, 0.015f);

    const float skin_r = 0.72f + 0.05f * static_cast<float>(class_id % 5) + jitter(rng);
    const float skin_g = 0.55f + 0.04f * static_cast<float>((class_id * 3) % 5) + jitter(rng);
    const float skin_b = 0.42f + 0.03f * static_cast<float>((class_id * 7) % 5) + jitter(rng);
    const float face_rx = 0.30f + 0.015f * static_cast<float>(class_id % 4) + jitter(rng) * 0.5f;
    const float face_ry = 0.40f + 0.012f * static_cast<float>((class_id * 2) % 4);
    const float eye_dx = 0.12f + 0.015f * static_cast<float>((class_id * 5) % 4);
    const float eye_y = 0.40f + jitter(rng) * 0.5f;
    const float mouth_w = 0.10f + 0.02f * static_cast<float>(class_id % 3);
    const float cx = 0.5f + jitter(rng);
    const float cy = 0.52f + jitter(rng);

    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const float ny = (y + 0.5f) / size;
            const float nx = (x + 0.5f) / size;
            // background gradient
            float r = 0.20f + 0.15f * ny;
            float g = 0.22f + 0.12f * ny;
            float b = 0.28f + 0.10f * ny;
            const float fx = (nx - cx) / face_rx;
            const float fy = (ny - cy) / face_ry;
            if (fx * fx + fy * fy <= 1.0f) {
                r = skin_r;
                g = skin_g;
                b = skin_b;
                const float exl = (nx - (cx - eye_dx)) / 0.045f;
                const float exr = (nx - (cx + eye_dx)) / 0.045f;
                const float ey = (ny - eye_y) / 0.03f;
                if (exl * exl + ey * ey <= 1.0f || exr * exr + ey * ey <= 1.0f) {
                    r = 0.12f;
                    g = 0.10f;
                    b = 0.10f;
                }
                const float mx = (nx - cx) / mouth_w;
                const float my = (ny - (cy + 0.22f)) / 0.035f;
                if (mx * mx + my * my <= 1.0f) {
                    r = 0.55f;
                    g = 0.20f;
                    b = 0.22f;
                }
            }
            img.at(y, x, 0) = std::clamp(r + noise(rng), 0.0f, 1.0f);
            img.at(y, x, 1) = std::clamp(g + noise(rng), 0.0f, 1.0f);
            img.at(y, x, 2) = std::clamp(b + noise(rng), 0.0f, 1.0f);
        }
    }
    return img;
}

}  // namespace himfr::testsupport
