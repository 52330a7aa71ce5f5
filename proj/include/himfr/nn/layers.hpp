#pragma once

#include <memory>
#include <string>
#include <vector>

#include "himfr/nn/tensor.hpp"

namespace himfr::nn {

/// Named parameter with accumulated gradient. Non-trainable params (running
/// statistics) are serialized but skipped by optimizers.
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<float> value;
    std::vector<float> grad;
    bool trainable = true;

    Param() = default;
    Param(std::string n, std::vector<int> s, bool train = true)
        : name(std::move(n)), shape(std::move(s)), trainable(train) {
        const auto count = static_cast<std::size_t>(Tensor::numel_of(shape));
        value.assign(count, 0.0f);
        grad.assign(count, 0.0f);
    }

    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

using ParamRefs = std::vector<Param*>;

// Seeded initializers.
void init_normal(std::vector<float>& v, Rng& rng, float stddev);
void init_he_normal(std::vector<float>& v, Rng& rng, int fan_in);
void init_xavier_uniform(std::vector<float>& v, Rng& rng, int fan_in, int fan_out);

/// Forward/backward layer. One backward per forward; layers cache what they
/// need, so a model must not interleave two in-flight forward passes.
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, bool training) = 0;
    virtual Tensor backward(const Tensor& grad_out) = 0;
    virtual void collect_params(ParamRefs& out) {}
};

class Sequential : public Layer {
public:
    Sequential() = default;

    template <typename L, typename... Args>
    L& emplace(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *layer;
        layers_.push_back(std::move(layer));
        return ref;
    }

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect_params(ParamRefs& out) override;

    std::size_t size() const { return layers_.size(); }
    Layer& at(std::size_t i) { return *layers_[i]; }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

/// y = x W^T + b for (B, in) inputs; weight shape (out, in).
class Dense : public Layer {
public:
    Dense(const std::string& name, int in, int out, Rng& rng, bool bias = true);

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect_params(ParamRefs& out) override;

    Param weight;
    Param bias;

private:
    int in_, out_;
    bool has_bias_;
    Tensor cached_x_;
};

/// 2-D convolution over (B,C,H,W), im2col + GEMM.
class Conv2d : public Layer {
public:
    Conv2d(const std::string& name, int in_ch, int out_ch, int kernel,
           int stride, int pad, Rng& rng);

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect_params(ParamRefs& out) override;

    static int out_extent(int in, int kernel, int stride, int pad) {
        return (in + 2 * pad - kernel) / stride + 1;
    }

    Param weight;  // (out_ch, in_ch*k*k)
    Param bias;

private:
    int in_ch_, out_ch_, kernel_, stride_, pad_;
    std::vector<std::vector<float>> cached_cols_;  // per batch item
    int in_h_ = 0, in_w_ = 0;
};

/// Batch normalization. Feature mode normalizes (B,F) per feature; spatial
/// mode normalizes (B,C,H,W) per channel over B*H*W.
class BatchNorm : public Layer {
public:
    enum class Mode { feature, spatial };

    BatchNorm(const std::string& name, int dim, Mode mode,
              float momentum = 0.9f, float eps = 1e-5f);

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect_params(ParamRefs& out) override;

    Param gamma;
    Param beta;
    Param running_mean;  // non-trainable
    Param running_var;   // non-trainable

private:
    int dim_;
    Mode mode_;
    float momentum_, eps_;
    // caches
    Tensor cached_xhat_;
    std::vector<float> inv_std_;
    std::int64_t group_size_ = 0;
};

/// Layer normalization over the last axis of (..., D). Inference forwards
/// touch no member state, so loaded models stay shareable across threads.
class LayerNorm : public Layer {
public:
    LayerNorm(const std::string& name, int dim, float eps = 1e-5f);

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect_params(ParamRefs& out) override;

    Param gamma;
    Param beta;

private:
    int dim_;
    float eps_;
    Tensor cached_xhat_;
    std::vector<float> inv_std_;
};

class ReLU : public Layer {
public:
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    Tensor cached_x_;
};

class LeakyReLU : public Layer {
public:
    explicit LeakyReLU(float slope = 0.2f) : slope_(slope) {}
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    float slope_;
    Tensor cached_x_;
};

class Sigmoid : public Layer {
public:
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    Tensor cached_y_;
};

class Gelu : public Layer {
public:
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    Tensor cached_x_;
};

class Flatten : public Layer {
public:
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    std::vector<int> cached_shape_;
};

/// Nearest-neighbor 2x spatial upsampling of (B,C,H,W).
class Upsample2x : public Layer {
public:
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    std::vector<int> cached_shape_;
};

/// Multi-headed self-attention over (B,N,D) token sequences with a packed
/// QKV projection and an output projection. Attention rows are softmax
/// distributions; the last forward's weights stay readable for inspection.
class MultiHeadSelfAttention : public Layer {
public:
    MultiHeadSelfAttention(const std::string& name, int dim, int heads, Rng& rng);

    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect_params(ParamRefs& out) override;

    /// (B, H, N, N) attention weights from the most recent forward. Only
    /// populated during training or when capture_attention(true) was set;
    /// plain inference forwards leave all member state untouched.
    const Tensor& last_attention() const { return attention_; }
    void capture_attention(bool on) { capture_attention_ = on; }

    Dense qkv;
    Dense proj;

private:
    int dim_, heads_, head_dim_;
    bool capture_attention_ = false;
    Tensor cached_qkv_;
    Tensor attention_;
};

// Softmax over the last axis.
Tensor softmax_rows(const Tensor& logits);

/// Mean categorical cross-entropy over a batch of probability rows against
/// one-hot labels: -sum_i y_i log(p_i + eps), eps = 1e-12. Also emits the
/// gradient with respect to the logits assuming p = softmax(logits).
struct CrossEntropyResult {
    double loss = 0.0;
    Tensor grad_logits;  // (B, K)
};
CrossEntropyResult softmax_cross_entropy(const Tensor& logits,
                                         const std::vector<int>& labels);

/// Standalone categorical cross-entropy between a one-hot truth vector and a
/// probability vector (which must sum to 1 within 1e-6).
double cross_entropy(const std::vector<double>& truth_one_hot,
                     const std::vector<double>& predicted);

}  // namespace himfr::nn
