#pragma once

#include <memory>
#include <string>
#include <vector>

#include "himfr/image.hpp"
#include "himfr/nn/layers.hpp"
#include "himfr/nn/optim.hpp"

namespace himfr::inpaint {

using imaging::BinaryMask;
using imaging::ImageBuffer;
using imaging::MaskedPair;

inline constexpr const char* kCheckpointMagic = "HIMFR-INP v1";

struct InpaintConfig {
    int image_size = 256;
    int latent_dim = 64;
    int base_channels = 32;
    int epochs = 150;
    int batch_size = 4;
    nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
    float learning_rate = 1e-4f;
    float w_recon = 10.0f;
    float w_adv = 1.0f;
    float w_kl = 0.1f;
    std::uint64_t seed = 42;

    std::string to_json() const;
    static InpaintConfig from_json(const std::string& json);
};

/// Conditional latent-variable generator: a strided conv encoder over the
/// masked image (+ mask channel), a diagonal-Gaussian latent head, and an
/// upsampling decoder fed the bottleneck features concatenated with the
/// latent draw. The sigmoid output stays in [0,1].
class Generator {
public:
    Generator(const InpaintConfig& cfg, nn::Rng& rng);

    struct TrainForward {
        nn::Tensor output;  // (B,3,R,R)
        nn::Tensor mu;      // (B,L)
        nn::Tensor logvar;  // (B,L)
        nn::Tensor z;       // (B,L)
    };

    /// Training pass: latent sampled from the posterior by reparameterizing
    /// with noise drawn from `rng`.
    TrainForward forward_train(const nn::Tensor& x4, nn::Rng& rng);

    /// Inference pass with an externally supplied latent (prior draw).
    nn::Tensor forward_with_latent(const nn::Tensor& x4, const nn::Tensor& z) const;

    /// Encoder-only inference pass; pair with decode_with_latent to reuse
    /// the context features across several latent draws.
    nn::Tensor encode_features(const nn::Tensor& x4) const;
    nn::Tensor decode_with_latent(const nn::Tensor& features, const nn::Tensor& z) const;

    /// Backward for the last forward_train; KL gradients on mu/logvar are
    /// passed in and combined with the reparameterization path.
    void backward(const nn::Tensor& grad_output, const nn::Tensor& grad_mu_extra,
                  const nn::Tensor& grad_logvar_extra);

    nn::ParamRefs params();
    int latent_dim() const { return latent_dim_; }

private:
    nn::Tensor decode(const nn::Tensor& features, const nn::Tensor& z,
                      bool training) const;

    int latent_dim_;
    int bottleneck_channels_;
    mutable nn::Sequential encoder_;
    mutable std::unique_ptr<nn::Dense> posterior_;
    mutable nn::Sequential decoder_;

    // training caches
    nn::Tensor cached_eps_;
    nn::Tensor cached_std_;
    int cached_r_ = 0;
};

/// Convolutional realism scorer (4 strided conv blocks + dense scalar).
class Discriminator {
public:
    Discriminator(const InpaintConfig& cfg, nn::Rng& rng);

    nn::Tensor forward(const nn::Tensor& images, bool training);
    nn::Tensor backward(const nn::Tensor& grad_scores);
    double score(const nn::Tensor& image) const;

    nn::ParamRefs params();

private:
    mutable nn::Sequential body_;
};

struct InpaintCandidate {
    ImageBuffer image;   // already composited with the known pixels
    double score = 0.0;  // discriminator output
    int latent_seed = 0; // draw index within the seeded latent stream
};

/// Candidate with the highest score; ties break toward the smallest
/// latent_seed. Throws InputError on an empty list.
const InpaintCandidate& select_best(const std::vector<InpaintCandidate>& candidates);

/// Two-term L1 reconstruction: known region vs ground truth plus hidden
/// region vs the hidden complement, each normalized over the full tensor.
double reconstruction_loss(const nn::Tensor& output, const nn::Tensor& ground_truth,
                           const nn::Tensor& mask);

class InpainterModel {
public:
    explicit InpainterModel(InpaintConfig cfg);

    /// Draws k latents from one seeded stream (candidate i = draw i), decodes
    /// each, composites against the known pixels, and scores with the
    /// discriminator. Inputs must already match the configured image size.
    std::vector<InpaintCandidate> generate_candidates(const ImageBuffer& masked,
                                                      const BinaryMask& mask, int k,
                                                      std::uint64_t seed) const;

    /// generate_candidates + select_best.
    ImageBuffer inpaint(const ImageBuffer& masked, const BinaryMask& mask, int k,
                        std::uint64_t seed) const;

    const InpaintConfig& config() const { return cfg_; }

    nn::ParamRefs all_params();
    std::uint64_t save(const std::string& path) const;
    static InpainterModel load(const std::string& path);

    friend struct TrainAccess;

private:
    InpaintConfig cfg_;
    mutable Generator gen_;
    mutable Discriminator disc_;
};

struct InpaintTrainStats {
    std::vector<double> gen_loss;   // per epoch
    std::vector<double> disc_loss;  // per epoch
};

/// Alternating generator/discriminator training on MaskedPairs (ground truth
/// required on every sample). Samples are resized to the configured image
/// size. Deterministic per config seed.
InpaintTrainStats train_inpainter(InpainterModel& model,
                                  const std::vector<MaskedPair>& data);

}  // namespace himfr::inpaint
