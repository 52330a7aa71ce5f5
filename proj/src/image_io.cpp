#include "himfr/image_io.hpp"

#include <cmath>

#include <opencv2/imgcodecs.hpp>

namespace himfr::imaging {

ImageBuffer load_image(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw IoError("cannot load image: " + path);
    ImageBuffer img(m.rows, m.cols, 3);
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < m.cols; ++x) {
            // OpenCV decodes BGR.
            img.at(y, x, 0) = row[x][2] / 255.0f;
            img.at(y, x, 1) = row[x][1] / 255.0f;
            img.at(y, x, 2) = row[x][0] / 255.0f;
        }
    }
    return img;
}

void save_image(const std::string& path, const ImageBuffer& img) {
    if (img.empty()) throw InputError("cannot save empty image");
    cv::Mat m(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y) {
        auto* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const float v = img.channels == 3 ? img.at(y, x, c) : img.at(y, x, 0);
                const long q = std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f);
                row[x][2 - c] = static_cast<unsigned char>(q);
            }
        }
    }
    if (!cv::imwrite(path, m)) throw IoError("cannot write image: " + path);
}

BinaryMask load_mask(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw IoError("cannot load mask: " + path);
    BinaryMask mask(m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<unsigned char>(y);
        for (int x = 0; x < m.cols; ++x) mask.at(y, x) = row[x] >= 128 ? 1 : 0;
    }
    return mask;
}

void save_mask(const std::string& path, const BinaryMask& mask) {
    cv::Mat m(mask.height, mask.width, CV_8UC1);
    for (int y = 0; y < mask.height; ++y) {
        auto* row = m.ptr<unsigned char>(y);
        for (int x = 0; x < mask.width; ++x) row[x] = mask.at(y, x) ? 255 : 0;
    }
    if (!cv::imwrite(path, m)) throw IoError("cannot write mask: " + path);
}

}  // namespace himfr::imaging
