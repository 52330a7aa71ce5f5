#include "himfr/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace himfr::nn {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void init_normal(std::vector<float>& v, Rng& rng, float stddev) {
    std::normal_distribution<float> d(0.0f, stddev);
    for (float& x : v) x = d(rng);
}

void init_he_normal(std::vector<float>& v, Rng& rng, int fan_in) {
    init_normal(v, rng, std::sqrt(2.0f / static_cast<float>(fan_in)));
}

void init_xavier_uniform(std::vector<float>& v, Rng& rng, int fan_in, int fan_out) {
    const float limit = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
    std::uniform_real_distribution<float> d(-limit, limit);
    for (float& x : v) x = d(rng);
}

// ---------------------------------------------------------------- Sequential

Tensor Sequential::forward(const Tensor& x, bool training) {
    Tensor t = x;
    for (auto& layer : layers_) t = layer->forward(t, training);
    return t;
}

Tensor Sequential::backward(const Tensor& grad_out) {
    Tensor g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
        g = (*it)->backward(g);
    return g;
}

void Sequential::collect_params(ParamRefs& out) {
    for (auto& layer : layers_) layer->collect_params(out);
}

// --------------------------------------------------------------------- Dense

Dense::Dense(const std::string& name, int in, int out, Rng& rng, bool bias)
    : weight(name + ".weight", {out, in}),
      bias(name + ".bias", {out}),
      in_(in), out_(out), has_bias_(bias) {
    init_xavier_uniform(weight.value, rng, in, out);
}

Tensor Dense::forward(const Tensor& x, bool training) {
    x.require_rank(2, "Dense");
    if (x.dim(1) != in_) throw ShapeError("Dense: input feature mismatch");
    if (training) cached_x_ = x;
    const int b = x.dim(0);
    Tensor y({b, out_});
    CMapMat xm(x.data.data(), b, in_);
    CMapMat wm(weight.value.data(), out_, in_);
    MapMat ym(y.data.data(), b, out_);
    ym.noalias() = xm * wm.transpose();
    if (has_bias_) {
        Eigen::Map<const Eigen::VectorXf> bv(bias.value.data(), out_);
        ym.rowwise() += bv.transpose();
    }
    return y;
}

Tensor Dense::backward(const Tensor& grad_out) {
    const int b = grad_out.dim(0);
    CMapMat gm(grad_out.data.data(), b, out_);
    CMapMat xm(cached_x_.data.data(), b, in_);
    CMapMat wm(weight.value.data(), out_, in_);

    MapMat dwm(weight.grad.data(), out_, in_);
    dwm.noalias() += gm.transpose() * xm;
    if (has_bias_) {
        Eigen::Map<Eigen::VectorXf> dbv(bias.grad.data(), out_);
        dbv.noalias() += gm.colwise().sum().transpose();
    }

    Tensor dx({b, in_});
    MapMat dxm(dx.data.data(), b, in_);
    dxm.noalias() = gm * wm;
    return dx;
}

void Dense::collect_params(ParamRefs& out) {
    out.push_back(&weight);
    if (has_bias_) out.push_back(&bias);
}

// -------------------------------------------------------------------- Conv2d

Conv2d::Conv2d(const std::string& name, int in_ch, int out_ch, int kernel,
               int stride, int pad, Rng& rng)
    : weight(name + ".weight", {out_ch, in_ch * kernel * kernel}),
      bias(name + ".bias", {out_ch}),
      in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(pad) {
    init_he_normal(weight.value, rng, in_ch * kernel * kernel);
}

namespace {

void im2col(const float* x, int ch, int h, int w, int kernel, int stride,
            int pad, int oh, int ow, float* col) {
    // col is (ch*kernel*kernel) x (oh*ow), row-major
    const int ohw = oh * ow;
    for (int c = 0; c < ch; ++c) {
        for (int ki = 0; ki < kernel; ++ki) {
            for (int kj = 0; kj < kernel; ++kj) {
                float* row = col + (static_cast<std::size_t>(c) * kernel * kernel +
                                    ki * kernel + kj) * ohw;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ki - pad;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kj - pad;
                        row[oy * ow + ox] =
                            (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                ? x[(static_cast<std::size_t>(c) * h + iy) * w + ix]
                                : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_add(const float* col, int ch, int h, int w, int kernel, int stride,
                int pad, int oh, int ow, float* dx) {
    const int ohw = oh * ow;
    for (int c = 0; c < ch; ++c) {
        for (int ki = 0; ki < kernel; ++ki) {
            for (int kj = 0; kj < kernel; ++kj) {
                const float* row =
                    col + (static_cast<std::size_t>(c) * kernel * kernel +
                           ki * kernel + kj) * ohw;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ki - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kj - pad;
                        if (ix < 0 || ix >= w) continue;
                        dx[(static_cast<std::size_t>(c) * h + iy) * w + ix] +=
                            row[oy * ow + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x, bool training) {
    x.require_rank(4, "Conv2d");
    if (x.dim(1) != in_ch_) throw ShapeError("Conv2d: channel mismatch");
    const int b = x.dim(0);
    const int in_h = x.dim(2);
    const int in_w = x.dim(3);
    const int oh = out_extent(in_h, kernel_, stride_, pad_);
    const int ow = out_extent(in_w, kernel_, stride_, pad_);
    if (oh < 1 || ow < 1) throw ShapeError("Conv2d: output would be empty");

    const int ckk = in_ch_ * kernel_ * kernel_;
    const int ohw = oh * ow;
    Tensor y({b, out_ch_, oh, ow});
    if (training) {
        in_h_ = in_h;
        in_w_ = in_w;
        cached_cols_.assign(static_cast<std::size_t>(b), {});
    }

    std::vector<float> col(static_cast<std::size_t>(ckk) * ohw);
    CMapMat wm(weight.value.data(), out_ch_, ckk);
    for (int i = 0; i < b; ++i) {
        const float* xi = x.data.data() + static_cast<std::size_t>(i) * in_ch_ * in_h * in_w;
        im2col(xi, in_ch_, in_h, in_w, kernel_, stride_, pad_, oh, ow, col.data());
        MapMat ym(y.data.data() + static_cast<std::size_t>(i) * out_ch_ * ohw, out_ch_, ohw);
        CMapMat cm(col.data(), ckk, ohw);
        ym.noalias() = wm * cm;
        for (int oc = 0; oc < out_ch_; ++oc)
            ym.row(oc).array() += bias.value[static_cast<std::size_t>(oc)];
        if (training) cached_cols_[static_cast<std::size_t>(i)] = col;
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
    const int b = grad_out.dim(0);
    const int oh = grad_out.dim(2);
    const int ow = grad_out.dim(3);
    const int ckk = in_ch_ * kernel_ * kernel_;
    const int ohw = oh * ow;

    Tensor dx({b, in_ch_, in_h_, in_w_});
    MapMat dwm(weight.grad.data(), out_ch_, ckk);
    std::vector<float> dcol(static_cast<std::size_t>(ckk) * ohw);
    CMapMat wm(weight.value.data(), out_ch_, ckk);

    for (int i = 0; i < b; ++i) {
        CMapMat gm(grad_out.data.data() + static_cast<std::size_t>(i) * out_ch_ * ohw,
                   out_ch_, ohw);
        CMapMat cm(cached_cols_[static_cast<std::size_t>(i)].data(), ckk, ohw);
        dwm.noalias() += gm * cm.transpose();
        for (int oc = 0; oc < out_ch_; ++oc)
            bias.grad[static_cast<std::size_t>(oc)] += gm.row(oc).sum();
        MapMat dcm(dcol.data(), ckk, ohw);
        dcm.noalias() = wm.transpose() * gm;
        col2im_add(dcol.data(), in_ch_, in_h_, in_w_, kernel_, stride_, pad_, oh, ow,
                   dx.data.data() + static_cast<std::size_t>(i) * in_ch_ * in_h_ * in_w_);
    }
    return dx;
}

void Conv2d::collect_params(ParamRefs& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

// ----------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(const std::string& name, int dim, Mode mode, float momentum,
                     float eps)
    : gamma(name + ".gamma", {dim}),
      beta(name + ".beta", {dim}),
      running_mean(name + ".running_mean", {dim}, false),
      running_var(name + ".running_var", {dim}, false),
      dim_(dim), mode_(mode), momentum_(momentum), eps_(eps) {
    std::fill(gamma.value.begin(), gamma.value.end(), 1.0f);
    std::fill(running_var.value.begin(), running_var.value.end(), 1.0f);
}

Tensor BatchNorm::forward(const Tensor& x, bool training) {
    const bool feature = mode_ == Mode::feature;
    if (feature) {
        x.require_rank(2, "BatchNorm");
        if (x.dim(1) != dim_) throw ShapeError("BatchNorm: feature mismatch");
    } else {
        x.require_rank(4, "BatchNorm");
        if (x.dim(1) != dim_) throw ShapeError("BatchNorm: channel mismatch");
    }
    const int b = x.dim(0);
    const std::int64_t spatial = feature ? 1 : static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
    group_size_ = b * spatial;

    // channel of flat index i
    auto channel_of = [&](std::int64_t i) -> int {
        return feature ? static_cast<int>(i % dim_)
                       : static_cast<int>((i / spatial) % dim_);
    };

    std::vector<float> mean(static_cast<std::size_t>(dim_), 0.0f);
    std::vector<float> var(static_cast<std::size_t>(dim_), 0.0f);
    if (training) {
        for (std::int64_t i = 0; i < x.numel(); ++i)
            mean[static_cast<std::size_t>(channel_of(i))] += x.data[static_cast<std::size_t>(i)];
        for (float& m : mean) m /= static_cast<float>(group_size_);
        for (std::int64_t i = 0; i < x.numel(); ++i) {
            const float d = x.data[static_cast<std::size_t>(i)] -
                            mean[static_cast<std::size_t>(channel_of(i))];
            var[static_cast<std::size_t>(channel_of(i))] += d * d;
        }
        for (float& v : var) v /= static_cast<float>(group_size_);
        for (int c = 0; c < dim_; ++c) {
            running_mean.value[static_cast<std::size_t>(c)] =
                momentum_ * running_mean.value[static_cast<std::size_t>(c)] +
                (1.0f - momentum_) * mean[static_cast<std::size_t>(c)];
            running_var.value[static_cast<std::size_t>(c)] =
                momentum_ * running_var.value[static_cast<std::size_t>(c)] +
                (1.0f - momentum_) * var[static_cast<std::size_t>(c)];
        }
    } else {
        mean = running_mean.value;
        var = running_var.value;
    }

    std::vector<float> inv_std(static_cast<std::size_t>(dim_), 0.0f);
    for (int c = 0; c < dim_; ++c)
        inv_std[static_cast<std::size_t>(c)] =
            1.0f / std::sqrt(var[static_cast<std::size_t>(c)] + eps_);

    Tensor y(x.shape);
    Tensor xhat_cache;
    if (training) xhat_cache = Tensor(x.shape);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const int c = channel_of(i);
        const float xhat = (x.data[static_cast<std::size_t>(i)] -
                            mean[static_cast<std::size_t>(c)]) *
                           inv_std[static_cast<std::size_t>(c)];
        if (training) xhat_cache.data[static_cast<std::size_t>(i)] = xhat;
        y.data[static_cast<std::size_t>(i)] =
            gamma.value[static_cast<std::size_t>(c)] * xhat +
            beta.value[static_cast<std::size_t>(c)];
    }
    if (training) {
        cached_xhat_ = std::move(xhat_cache);
        inv_std_ = std::move(inv_std);
    }
    return y;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
    if (cached_xhat_.data.empty())
        throw Error("BatchNorm::backward without training forward");
    const bool feature = mode_ == Mode::feature;
    const std::int64_t spatial =
        feature ? 1 : static_cast<std::int64_t>(grad_out.dim(2)) * grad_out.dim(3);
    auto channel_of = [&](std::int64_t i) -> int {
        return feature ? static_cast<int>(i % dim_)
                       : static_cast<int>((i / spatial) % dim_);
    };

    std::vector<float> sum_dy(static_cast<std::size_t>(dim_), 0.0f);
    std::vector<float> sum_dy_xhat(static_cast<std::size_t>(dim_), 0.0f);
    for (std::int64_t i = 0; i < grad_out.numel(); ++i) {
        const int c = channel_of(i);
        const float dy = grad_out.data[static_cast<std::size_t>(i)];
        sum_dy[static_cast<std::size_t>(c)] += dy;
        sum_dy_xhat[static_cast<std::size_t>(c)] +=
            dy * cached_xhat_.data[static_cast<std::size_t>(i)];
    }
    for (int c = 0; c < dim_; ++c) {
        gamma.grad[static_cast<std::size_t>(c)] += sum_dy_xhat[static_cast<std::size_t>(c)];
        beta.grad[static_cast<std::size_t>(c)] += sum_dy[static_cast<std::size_t>(c)];
    }

    const float n = static_cast<float>(group_size_);
    Tensor dx(grad_out.shape);
    for (std::int64_t i = 0; i < grad_out.numel(); ++i) {
        const int c = channel_of(i);
        const std::size_t cs = static_cast<std::size_t>(c);
        const float dy = grad_out.data[static_cast<std::size_t>(i)];
        const float xhat = cached_xhat_.data[static_cast<std::size_t>(i)];
        dx.data[static_cast<std::size_t>(i)] =
            gamma.value[cs] * inv_std_[cs] / n *
            (n * dy - sum_dy[cs] - xhat * sum_dy_xhat[cs]);
    }
    return dx;
}

void BatchNorm::collect_params(ParamRefs& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
    out.push_back(&running_mean);
    out.push_back(&running_var);
}

// ----------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(const std::string& name, int dim, float eps)
    : gamma(name + ".gamma", {dim}), beta(name + ".beta", {dim}), dim_(dim), eps_(eps) {
    std::fill(gamma.value.begin(), gamma.value.end(), 1.0f);
}

Tensor LayerNorm::forward(const Tensor& x, bool training) {
    if (x.shape.empty() || x.shape.back() != dim_)
        throw ShapeError("LayerNorm: last axis mismatch");
    const std::int64_t rows = x.numel() / dim_;
    Tensor y(x.shape);
    Tensor xhat_cache;
    std::vector<float> inv_std;
    if (training) {
        xhat_cache = Tensor(x.shape);
        inv_std.assign(static_cast<std::size_t>(rows), 0.0f);
    }
    for (std::int64_t r = 0; r < rows; ++r) {
        const float* xr = x.data.data() + r * dim_;
        float mean = 0.0f;
        for (int j = 0; j < dim_; ++j) mean += xr[j];
        mean /= static_cast<float>(dim_);
        float var = 0.0f;
        for (int j = 0; j < dim_; ++j) {
            const float d = xr[j] - mean;
            var += d * d;
        }
        var /= static_cast<float>(dim_);
        const float istd = 1.0f / std::sqrt(var + eps_);
        if (training) inv_std[static_cast<std::size_t>(r)] = istd;
        for (int j = 0; j < dim_; ++j) {
            const float xhat = (xr[j] - mean) * istd;
            if (training)
                xhat_cache.data[static_cast<std::size_t>(r * dim_ + j)] = xhat;
            y.data[static_cast<std::size_t>(r * dim_ + j)] =
                gamma.value[static_cast<std::size_t>(j)] * xhat +
                beta.value[static_cast<std::size_t>(j)];
        }
    }
    if (training) {
        cached_xhat_ = std::move(xhat_cache);
        inv_std_ = std::move(inv_std);
    }
    return y;
}

Tensor LayerNorm::backward(const Tensor& grad_out) {
    const std::int64_t rows = grad_out.numel() / dim_;
    Tensor dx(grad_out.shape);
    for (std::int64_t r = 0; r < rows; ++r) {
        const float* gr = grad_out.data.data() + r * dim_;
        const float* xh = cached_xhat_.data.data() + r * dim_;
        float sum_g = 0.0f, sum_gx = 0.0f;
        for (int j = 0; j < dim_; ++j) {
            const float g = gr[j] * gamma.value[static_cast<std::size_t>(j)];
            sum_g += g;
            sum_gx += g * xh[j];
            gamma.grad[static_cast<std::size_t>(j)] += gr[j] * xh[j];
            beta.grad[static_cast<std::size_t>(j)] += gr[j];
        }
        const float istd = inv_std_[static_cast<std::size_t>(r)];
        const float inv_n = 1.0f / static_cast<float>(dim_);
        for (int j = 0; j < dim_; ++j) {
            const float g = gr[j] * gamma.value[static_cast<std::size_t>(j)];
            dx.data[static_cast<std::size_t>(r * dim_ + j)] =
                istd * (g - inv_n * sum_g - xh[j] * inv_n * sum_gx);
        }
    }
    return dx;
}

void LayerNorm::collect_params(ParamRefs& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

// --------------------------------------------------------------- activations

Tensor ReLU::forward(const Tensor& x, bool training) {
    if (training) cached_x_ = x;
    Tensor y = x;
    for (float& v : y.data) v = v > 0.0f ? v : 0.0f;
    return y;
}

Tensor ReLU::backward(const Tensor& grad_out) {
    Tensor dx = grad_out;
    for (std::size_t i = 0; i < dx.data.size(); ++i)
        if (cached_x_.data[i] <= 0.0f) dx.data[i] = 0.0f;
    return dx;
}

Tensor LeakyReLU::forward(const Tensor& x, bool training) {
    if (training) cached_x_ = x;
    Tensor y = x;
    for (float& v : y.data) v = v > 0.0f ? v : slope_ * v;
    return y;
}

Tensor LeakyReLU::backward(const Tensor& grad_out) {
    Tensor dx = grad_out;
    for (std::size_t i = 0; i < dx.data.size(); ++i)
        if (cached_x_.data[i] <= 0.0f) dx.data[i] *= slope_;
    return dx;
}

Tensor Sigmoid::forward(const Tensor& x, bool training) {
    Tensor y = x;
    for (float& v : y.data) v = 1.0f / (1.0f + std::exp(-v));
    if (training) cached_y_ = y;
    return y;
}

Tensor Sigmoid::backward(const Tensor& grad_out) {
    Tensor dx = grad_out;
    for (std::size_t i = 0; i < dx.data.size(); ++i) {
        const float y = cached_y_.data[i];
        dx.data[i] *= y * (1.0f - y);
    }
    return dx;
}

namespace {
constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluA = 0.044715f;
}  // namespace

Tensor Gelu::forward(const Tensor& x, bool training) {
    if (training) cached_x_ = x;
    Tensor y = x;
    for (float& v : y.data) {
        const float t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        v = 0.5f * v * (1.0f + t);
    }
    return y;
}

Tensor Gelu::backward(const Tensor& grad_out) {
    Tensor dx = grad_out;
    for (std::size_t i = 0; i < dx.data.size(); ++i) {
        const float x = cached_x_.data[i];
        const float u = kGeluC * (x + kGeluA * x * x * x);
        const float t = std::tanh(u);
        const float du = kGeluC * (1.0f + 3.0f * kGeluA * x * x);
        dx.data[i] *= 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * du;
    }
    return dx;
}

Tensor Flatten::forward(const Tensor& x, bool training) {
    if (training) cached_shape_ = x.shape;
    const int b = x.dim(0);
    return x.reshaped({b, static_cast<int>(x.numel() / b)});
}

Tensor Flatten::backward(const Tensor& grad_out) {
    return grad_out.reshaped(cached_shape_);
}

Tensor Upsample2x::forward(const Tensor& x, bool training) {
    x.require_rank(4, "Upsample2x");
    if (training) cached_shape_ = x.shape;
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor y({b, c, 2 * h, 2 * w});
    for (int i = 0; i < b * c; ++i) {
        const float* src = x.data.data() + static_cast<std::size_t>(i) * h * w;
        float* dst = y.data.data() + static_cast<std::size_t>(i) * 4 * h * w;
        for (int yy = 0; yy < 2 * h; ++yy)
            for (int xx = 0; xx < 2 * w; ++xx)
                dst[yy * 2 * w + xx] = src[(yy / 2) * w + (xx / 2)];
    }
    return y;
}

Tensor Upsample2x::backward(const Tensor& grad_out) {
    const int b = cached_shape_[0], c = cached_shape_[1];
    const int h = cached_shape_[2], w = cached_shape_[3];
    Tensor dx({b, c, h, w});
    for (int i = 0; i < b * c; ++i) {
        const float* src = grad_out.data.data() + static_cast<std::size_t>(i) * 4 * h * w;
        float* dst = dx.data.data() + static_cast<std::size_t>(i) * h * w;
        for (int yy = 0; yy < 2 * h; ++yy)
            for (int xx = 0; xx < 2 * w; ++xx)
                dst[(yy / 2) * w + (xx / 2)] += src[yy * 2 * w + xx];
    }
    return dx;
}

// ---------------------------------------------------------------------- MHSA

MultiHeadSelfAttention::MultiHeadSelfAttention(const std::string& name, int dim,
                                               int heads, Rng& rng)
    : qkv(name + ".qkv", dim, 3 * dim, rng),
      proj(name + ".proj", dim, dim, rng),
      dim_(dim), heads_(heads), head_dim_(dim / heads) {
    if (dim % heads != 0)
        throw ShapeError("MultiHeadSelfAttention: heads must divide dim");
}

Tensor MultiHeadSelfAttention::forward(const Tensor& x, bool training) {
    x.require_rank(3, "MultiHeadSelfAttention");
    const int b = x.dim(0), n = x.dim(1);
    if (x.dim(2) != dim_) throw ShapeError("MultiHeadSelfAttention: dim mismatch");

    const Tensor qkv_out = qkv.forward(x.reshaped({b * n, dim_}), training);
    if (training) cached_qkv_ = qkv_out;
    const bool keep_attention = training || capture_attention_;
    Tensor attention({b, heads_, n, n});

    Tensor concat({b * n, dim_});
    const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim_));
    const int d = head_dim_;
    for (int i = 0; i < b; ++i) {
        const float* qkv_i = qkv_out.data.data() + static_cast<std::size_t>(i) * n * 3 * dim_;
        Eigen::Map<const RowMat, 0, Eigen::OuterStride<>> qall(
            qkv_i, n, dim_, Eigen::OuterStride<>(3 * dim_));
        Eigen::Map<const RowMat, 0, Eigen::OuterStride<>> kall(
            qkv_i + dim_, n, dim_, Eigen::OuterStride<>(3 * dim_));
        Eigen::Map<const RowMat, 0, Eigen::OuterStride<>> vall(
            qkv_i + 2 * dim_, n, dim_, Eigen::OuterStride<>(3 * dim_));
        for (int h = 0; h < heads_; ++h) {
            RowMat q = qall.middleCols(h * d, d);
            RowMat k = kall.middleCols(h * d, d);
            RowMat v = vall.middleCols(h * d, d);
            RowMat scores = (q * k.transpose()) * scale;
            // stable row softmax
            MapMat att(attention.data.data() +
                           (static_cast<std::size_t>(i) * heads_ + h) * n * n,
                       n, n);
            for (int r = 0; r < n; ++r) {
                const float mx = scores.row(r).maxCoeff();
                Eigen::ArrayXf e = (scores.row(r).array() - mx).exp();
                att.row(r) = (e / e.sum()).matrix();
            }
            RowMat o = att * v;
            MapMat cm(concat.data.data(), b * n, dim_);
            cm.block(i * n, h * d, n, d) = o;
        }
    }
    if (keep_attention) attention_ = std::move(attention);
    Tensor out = proj.forward(concat, training);
    return out.reshaped({b, n, dim_});
}

Tensor MultiHeadSelfAttention::backward(const Tensor& grad_out) {
    const int b = grad_out.dim(0), n = grad_out.dim(1);
    const int d = head_dim_;
    const float scale = 1.0f / std::sqrt(static_cast<float>(d));

    const Tensor dconcat = proj.backward(grad_out.reshaped({b * n, dim_}));
    Tensor dqkv({b * n, 3 * dim_});

    for (int i = 0; i < b; ++i) {
        const float* qkv_i =
            cached_qkv_.data.data() + static_cast<std::size_t>(i) * n * 3 * dim_;
        Eigen::Map<const RowMat, 0, Eigen::OuterStride<>> qall(
            qkv_i, n, dim_, Eigen::OuterStride<>(3 * dim_));
        Eigen::Map<const RowMat, 0, Eigen::OuterStride<>> kall(
            qkv_i + dim_, n, dim_, Eigen::OuterStride<>(3 * dim_));
        Eigen::Map<const RowMat, 0, Eigen::OuterStride<>> vall(
            qkv_i + 2 * dim_, n, dim_, Eigen::OuterStride<>(3 * dim_));
        CMapMat dcm(dconcat.data.data(), b * n, dim_);
        MapMat dqkv_m(dqkv.data.data(), b * n, 3 * dim_);
        for (int h = 0; h < heads_; ++h) {
            CMapMat att(attention_.data.data() +
                            (static_cast<std::size_t>(i) * heads_ + h) * n * n,
                        n, n);
            RowMat q = qall.middleCols(h * d, d);
            RowMat k = kall.middleCols(h * d, d);
            RowMat v = vall.middleCols(h * d, d);
            RowMat dout_h = dcm.block(i * n, h * d, n, d);

            RowMat datt = dout_h * v.transpose();
            RowMat dv = att.transpose() * dout_h;
            // softmax backward, row-wise
            RowMat dscores(n, n);
            for (int r = 0; r < n; ++r) {
                const float dot = att.row(r).dot(datt.row(r));
                dscores.row(r) =
                    att.row(r).array() * (datt.row(r).array() - dot);
            }
            dscores *= scale;
            RowMat dq = dscores * k;
            RowMat dk = dscores.transpose() * q;

            dqkv_m.block(i * n, h * d, n, d) = dq;
            dqkv_m.block(i * n, dim_ + h * d, n, d) = dk;
            dqkv_m.block(i * n, 2 * dim_ + h * d, n, d) = dv;
        }
    }
    Tensor dx = qkv.backward(dqkv);
    return dx.reshaped({b, n, dim_});
}

void MultiHeadSelfAttention::collect_params(ParamRefs& out) {
    qkv.collect_params(out);
    proj.collect_params(out);
}

// -------------------------------------------------------------------- losses

Tensor softmax_rows(const Tensor& logits) {
    if (logits.shape.empty()) throw ShapeError("softmax_rows: scalar input");
    const int k = logits.shape.back();
    const std::int64_t rows = logits.numel() / k;
    Tensor p(logits.shape);
    for (std::int64_t r = 0; r < rows; ++r) {
        const float* in = logits.data.data() + r * k;
        float* out = p.data.data() + r * k;
        float mx = in[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, in[j]);
        float sum = 0.0f;
        for (int j = 0; j < k; ++j) {
            out[j] = std::exp(in[j] - mx);
            sum += out[j];
        }
        for (int j = 0; j < k; ++j) out[j] /= sum;
    }
    return p;
}

CrossEntropyResult softmax_cross_entropy(const Tensor& logits,
                                         const std::vector<int>& labels) {
    logits.require_rank(2, "softmax_cross_entropy");
    const int b = logits.dim(0), k = logits.dim(1);
    if (static_cast<int>(labels.size()) != b)
        throw InputError("softmax_cross_entropy: label count mismatch");

    CrossEntropyResult res;
    const Tensor p = softmax_rows(logits);
    res.grad_logits = p;
    for (int i = 0; i < b; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= k) throw DataError("label out of range");
        res.loss += -std::log(
            static_cast<double>(p.data[static_cast<std::size_t>(i) * k + y]) + 1e-12);
        res.grad_logits.data[static_cast<std::size_t>(i) * k + y] -= 1.0f;
    }
    res.loss /= b;
    for (float& g : res.grad_logits.data) g /= static_cast<float>(b);
    return res;
}

double cross_entropy(const std::vector<double>& truth_one_hot,
                     const std::vector<double>& predicted) {
    if (truth_one_hot.size() != predicted.size() || truth_one_hot.empty())
        throw InputError("cross_entropy: length mismatch");
    double truth_sum = 0.0, pred_sum = 0.0;
    for (std::size_t i = 0; i < truth_one_hot.size(); ++i) {
        const double t = truth_one_hot[i];
        if (std::abs(t) > 1e-9 && std::abs(t - 1.0) > 1e-9)
            throw InputError("cross_entropy: truth vector is not one-hot");
        if (predicted[i] < 0.0) throw InputError("cross_entropy: negative probability");
        truth_sum += t;
        pred_sum += predicted[i];
    }
    if (std::abs(truth_sum - 1.0) > 1e-9)
        throw InputError("cross_entropy: truth vector is not one-hot");
    if (std::abs(pred_sum - 1.0) > 1e-6)
        throw InputError("cross_entropy: probabilities do not sum to 1");

    double loss = 0.0;
    for (std::size_t i = 0; i < truth_one_hot.size(); ++i)
        loss += -truth_one_hot[i] * std::log(predicted[i] + 1e-12);
    return loss;
}

}  // namespace himfr::nn
