#pragma once

#include <memory>
#include <string>
#include <vector>

#include "himfr/image.hpp"
#include "himfr/metrics.hpp"
#include "himfr/nn/backbone.hpp"
#include "himfr/nn/optim.hpp"

namespace himfr::recog {

using imaging::ImageBuffer;

inline constexpr const char* kCheckpointMagic = "HIMFR-REC v1";

struct RecognizerConfig {
    std::string backbone_spec = "toy:16";
    int input_size = 224;
    int patch_size = 2;
    int stride = 1;
    int proj_dim = 64;        // token dimension
    int transformer_layers = 2;
    int heads = 8;
    int epochs = 10;
    int batch_size = 2;
    nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
    float learning_rate = 3e-4f;
    bool augment = true;       // horizontal flip p=0.5 + up-to-4px shift
    double stop_at_train_accuracy = 0.0;  // early stop when > 0
    std::uint64_t seed = 42;
    std::vector<std::string> class_names;

    int num_classes() const { return static_cast<int>(class_names.size()); }
    std::string to_json() const;
    static RecognizerConfig from_json(const std::string& json);
};

/// Sliding-window tokenization of a (B,C,h,w) feature map: row-major
/// windows of size patch x patch at the given stride, each flattened
/// channel-last into a row of the (B, N, patch*patch*C) output.
/// Requires (h - patch) and (w - patch) divisible by stride.
nn::Tensor make_patches(const nn::Tensor& features, int patch, int stride);

/// Token count of the sliding-window grid.
int patch_count(int h, int w, int patch, int stride);

/// Builds the embedded token sequence: row 0 is the class token, rows 1..N
/// are patches * projection, and the position embedding is added to every
/// row. patches: (B,N,L), projection: (L,D), positions: (N+1,D), class
/// token: (D); output (B, N+1, D).
nn::Tensor encode_patches(const nn::Tensor& patches, const nn::Tensor& projection,
                          const nn::Tensor& positions, const nn::Tensor& class_token);

/// Pre-norm transformer encoder block: z' = z + MSA(LN(z)),
/// out = z' + MLP(LN(z')), MLP = dense(D,2D) -> GELU -> dense(2D,D).
class EncoderBlock : public nn::Layer {
public:
    EncoderBlock(const std::string& name, int dim, int heads, nn::Rng& rng);

    nn::Tensor forward(const nn::Tensor& z, bool training) override;
    nn::Tensor backward(const nn::Tensor& grad_out) override;
    void collect_params(nn::ParamRefs& out) override;

    nn::LayerNorm ln1;
    nn::MultiHeadSelfAttention attention;
    nn::LayerNorm ln2;
    nn::Dense mlp1;
    nn::Gelu gelu;
    nn::Dense mlp2;
};

/// Runs z0 through the encoder stack. An empty stack returns z0 unchanged
/// (the degenerate linear-probe configuration).
nn::Tensor transformer_encode(const nn::Tensor& z0,
                              const std::vector<EncoderBlock*>& blocks,
                              bool training = false);

struct LabeledImage {
    ImageBuffer image;
    int label = 0;
};

struct RecognizerEvaluation {
    std::vector<int> predictions;
    std::vector<std::vector<double>> probabilities;  // per sample, per class
    metrics::MetricReport report;
    std::vector<metrics::RocCurve> roc;  // one-vs-rest per class
};

/// Identity classifier: frozen CNN backbone, overlapping sliding-patch
/// tokens with learnable projection / class token / position embeddings, a
/// stack of transformer encoder blocks, and a softmax head over the final
/// layer-normed class token.
class RecognizerModel {
public:
    explicit RecognizerModel(RecognizerConfig cfg);

    /// Softmax class probabilities for one image (inference mode).
    std::vector<double> classify(const ImageBuffer& img) const;
    int predict(const ImageBuffer& img) const;

    const RecognizerConfig& config() const { return cfg_; }
    const nn::CnnBackbone& backbone() const { return *backbone_; }
    int token_count() const { return tokens_; }

    nn::ParamRefs trainable_params();
    nn::ParamRefs all_params();

    std::uint64_t save(const std::string& path) const;
    static RecognizerModel load(const std::string& path);

    friend std::vector<double> train_recognizer(RecognizerModel&,
                                                const std::vector<LabeledImage>&);

private:
    nn::Tensor forward_logits(const nn::Tensor& images, bool training) const;
    void backward_from_logits(const nn::Tensor& grad_logits);

    RecognizerConfig cfg_;
    std::unique_ptr<nn::CnnBackbone> backbone_;
    nn::Param projection_;   // (patch_len, proj_dim)
    nn::Param class_token_;  // (proj_dim)
    nn::Param positions_;    // (N+1, proj_dim)
    std::vector<std::unique_ptr<EncoderBlock>> blocks_;
    mutable std::unique_ptr<nn::LayerNorm> final_ln_;
    mutable std::unique_ptr<nn::Dense> head_;

    int tokens_ = 0;     // N
    int patch_len_ = 0;  // patch*patch*C

    // training cache
    mutable nn::Tensor cached_patches_;
};

/// Trains embeddings, encoder blocks, and head (backbone stays frozen) with
/// seed-controlled augmentation. Returns per-epoch mean training loss;
/// stops early once stop_at_train_accuracy is reached when configured.
std::vector<double> train_recognizer(RecognizerModel& model,
                                     const std::vector<LabeledImage>& data);

/// Per-class precision/recall/F1 report with accuracy and macro/weighted
/// rows, plus one-vs-rest ROC per class scored by softmax probability.
RecognizerEvaluation evaluate_recognizer(const RecognizerModel& model,
                                         const std::vector<LabeledImage>& data);

}  // namespace himfr::recog
