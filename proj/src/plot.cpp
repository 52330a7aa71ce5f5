#include "himfr/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace himfr::plot {

namespace {

struct Color {
    float r, g, b;
};

const Color kPalette[] = {
    {0.85f, 0.22f, 0.20f}, {0.20f, 0.45f, 0.85f}, {0.18f, 0.65f, 0.30f},
    {0.90f, 0.60f, 0.10f}, {0.55f, 0.25f, 0.70f}, {0.10f, 0.65f, 0.65f},
    {0.80f, 0.35f, 0.60f}, {0.45f, 0.45f, 0.45f},
};

void put_pixel(ImageBuffer& img, int y, int x, Color c) {
    if (y < 0 || y >= img.height || x < 0 || x >= img.width) return;
    img.at(y, x, 0) = c.r;
    img.at(y, x, 1) = c.g;
    img.at(y, x, 2) = c.b;
}

void draw_line(ImageBuffer& img, float y0, float x0, float y1, float x1, Color c,
               int thickness = 1) {
    const float dy = y1 - y0, dx = x1 - x0;
    const int steps = std::max(1, static_cast<int>(std::ceil(
                                     std::max(std::abs(dy), std::abs(dx)))));
    for (int s = 0; s <= steps; ++s) {
        const float t = static_cast<float>(s) / steps;
        const int py = static_cast<int>(std::lround(y0 + t * dy));
        const int px = static_cast<int>(std::lround(x0 + t * dx));
        for (int oy = 0; oy < thickness; ++oy)
            for (int ox = 0; ox < thickness; ++ox)
                put_pixel(img, py + oy, px + ox, c);
    }
}

// 5x7 glyphs for digits, '.', ':' and '=' rendered as bit rows
const std::uint8_t* glyph(char ch) {
    static const std::uint8_t digits[12][7] = {
        {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
        {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
        {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
        {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
        {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
        {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
        {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
        {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
        {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
        {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
        {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C},  // .
        {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00},  // :
    };
    if (ch >= '0' && ch <= '9') return digits[ch - '0'];
    if (ch == '.') return digits[10];
    if (ch == ':') return digits[11];
    return nullptr;
}

void draw_text(ImageBuffer& img, int y, int x, const std::string& text, Color c) {
    for (char ch : text) {
        const std::uint8_t* g = glyph(ch);
        if (g) {
            for (int r = 0; r < 7; ++r)
                for (int col = 0; col < 5; ++col)
                    if (g[r] & (1 << (4 - col))) put_pixel(img, y + r, x + col, c);
        }
        x += 6;
    }
}

}  // namespace

ImageBuffer render_roc(const std::vector<metrics::RocCurve>& curves, int size) {
    ImageBuffer img(size, size, 3, 1.0f);
    const int margin = 32;
    const int plot = size - 2 * margin;
    const Color axis{0.25f, 0.25f, 0.25f};
    const Color grid{0.88f, 0.88f, 0.88f};

    auto px = [&](double fpr) { return margin + fpr * plot; };
    auto py = [&](double tpr) { return size - margin - tpr * plot; };

    for (int i = 1; i < 10; ++i) {
        const float x = static_cast<float>(px(i / 10.0));
        const float y = static_cast<float>(py(i / 10.0));
        draw_line(img, static_cast<float>(py(0)), x, static_cast<float>(py(1)), x, grid);
        draw_line(img, y, static_cast<float>(px(0)), y, static_cast<float>(px(1)), grid);
    }
    // chance diagonal
    for (int s = 0; s < plot; s += 8)
        draw_line(img, static_cast<float>(py(0) - s), static_cast<float>(px(0) + s),
                  static_cast<float>(py(0) - std::min(s + 4, plot)),
                  static_cast<float>(px(0) + std::min(s + 4, plot)),
                  {0.6f, 0.6f, 0.6f});

    // frame
    draw_line(img, static_cast<float>(py(0)), static_cast<float>(px(0)),
              static_cast<float>(py(0)), static_cast<float>(px(1)), axis);
    draw_line(img, static_cast<float>(py(0)), static_cast<float>(px(0)),
              static_cast<float>(py(1)), static_cast<float>(px(0)), axis);
    draw_line(img, static_cast<float>(py(1)), static_cast<float>(px(0)),
              static_cast<float>(py(1)), static_cast<float>(px(1)), axis);
    draw_line(img, static_cast<float>(py(0)), static_cast<float>(px(1)),
              static_cast<float>(py(1)), static_cast<float>(px(1)), axis);
    draw_text(img, size - margin + 4, margin - 4, "0", axis);
    draw_text(img, size - margin + 4, size - margin, "1", axis);
    draw_text(img, margin - 10, margin - 12, "1", axis);

    for (std::size_t k = 0; k < curves.size(); ++k) {
        const Color c = kPalette[k % (sizeof(kPalette) / sizeof(kPalette[0]))];
        const auto& pts = curves[k].points;
        for (std::size_t i = 0; i + 1 < pts.size(); ++i)
            draw_line(img, static_cast<float>(py(pts[i].second)),
                      static_cast<float>(px(pts[i].first)),
                      static_cast<float>(py(pts[i + 1].second)),
                      static_cast<float>(px(pts[i + 1].first)), c, 2);
        char label[32];
        std::snprintf(label, sizeof(label), "%zu: %.4f", k, curves[k].auc);
        const int ly = margin + 10 + static_cast<int>(k) * 12;
        draw_line(img, static_cast<float>(ly + 3), static_cast<float>(margin + 12),
                  static_cast<float>(ly + 3), static_cast<float>(margin + 26), c, 3);
        draw_text(img, ly, margin + 32, label, axis);
    }
    return img;
}

ImageBuffer image_grid(const std::vector<std::vector<const ImageBuffer*>>& rows,
                       int pad) {
    if (rows.empty() || rows.front().empty())
        throw InputError("image_grid: empty layout");
    const ImageBuffer& first = *rows.front().front();
    const int cell_h = first.height, cell_w = first.width;
    std::size_t cols = 0;
    for (const auto& row : rows) {
        cols = std::max(cols, row.size());
        for (const ImageBuffer* cell : row)
            if (cell->height != cell_h || cell->width != cell_w)
                throw ShapeError("image_grid: all cells must share dimensions");
    }

    const int out_h = static_cast<int>(rows.size()) * (cell_h + pad) + pad;
    const int out_w = static_cast<int>(cols) * (cell_w + pad) + pad;
    ImageBuffer out(out_h, out_w, 3, 1.0f);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            const ImageBuffer& cell = *rows[r][c];
            const int oy = pad + static_cast<int>(r) * (cell_h + pad);
            const int ox = pad + static_cast<int>(c) * (cell_w + pad);
            for (int y = 0; y < cell_h; ++y)
                for (int x = 0; x < cell_w; ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        out.at(oy + y, ox + x, ch) =
                            cell.channels == 3 ? cell.at(y, x, ch) : cell.at(y, x, 0);
        }
    }
    return out;
}

}  // namespace himfr::plot
