#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "himfr/common.hpp"

namespace himfr::nn {

using himfr::Rng;

/// Dense row-major float tensor. Layers interpret the shape themselves:
/// (B,F) for dense features, (B,C,H,W) for images, (B,N,D) for tokens.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, float fill = 0.0f) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(numel_of(shape)), fill);
    }

    static std::int64_t numel_of(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    Tensor reshaped(std::vector<int> s) const {
        if (numel_of(s) != numel()) throw ShapeError("reshape changes element count");
        Tensor t = *this;
        t.shape = std::move(s);
        return t;
    }

    void require_rank(int r, const char* who) const {
        if (rank() != r) throw ShapeError(std::string(who) + ": unexpected tensor rank");
    }
};

}  // namespace himfr::nn
