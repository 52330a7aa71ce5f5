#pragma once

#include <memory>
#include <string>
#include <vector>

#include "himfr/image.hpp"
#include "himfr/nn/backbone.hpp"
#include "himfr/nn/optim.hpp"

namespace himfr::detector {

using imaging::ImageBuffer;

inline constexpr const char* kCheckpointMagic = "HIMFR-DET v1";

struct DetectorTrainConfig {
    int epochs = 5;
    int batch_size = 16;
    nn::OptimizerKind optimizer = nn::OptimizerKind::rectified_adam;
    float learning_rate = 1e-4f;
    int input_size = 224;
};

struct DetectorConfig {
    std::string backbone_spec = "toy:16";
    int head_hidden = 128;
    double threshold = 0.5;
    std::uint64_t seed = 42;
    DetectorTrainConfig train;

    std::string to_json() const;
    static DetectorConfig from_json(const std::string& json);
};

struct DetectorVerdict {
    bool is_masked = false;
    double probability = 0.0;  // probability of the masked class
};

struct LabeledImage {
    ImageBuffer image;
    int label = 0;  // 0 = unmasked, 1 = masked
};

/// Binary masked/unmasked classifier: frozen feature extractor feeding a
/// trainable head (flatten, batch norm, dense+ReLU, batch norm, dense(2),
/// softmax). Only the head ever receives gradient updates.
class DetectorModel {
public:
    explicit DetectorModel(DetectorConfig cfg);

    /// Resizes to the configured input, runs backbone + head in inference
    /// mode, and thresholds the masked-class probability (ties resolve to
    /// unmasked).
    DetectorVerdict detect(const ImageBuffer& img) const;

    /// Masked-class probability for a batch of precomputed feature maps.
    nn::Tensor head_probabilities(const nn::Tensor& features) const;

    const DetectorConfig& config() const { return cfg_; }
    const nn::CnnBackbone& backbone() const { return *backbone_; }

    nn::ParamRefs head_params() const;
    nn::ParamRefs all_params() const;
    std::int64_t trainable_param_count() const;

    std::uint64_t save(const std::string& path) const;
    static DetectorModel load(const std::string& path);

    /// Zeroes the final dense layer so the head emits uniform logits; only
    /// meaningful for tests of the decision rule.
    void zero_final_layer();

private:
    friend std::vector<double> train_detector(DetectorModel&,
                                              const std::vector<LabeledImage>&);
    DetectorConfig cfg_;
    std::unique_ptr<nn::CnnBackbone> backbone_;
    mutable nn::Sequential head_;
};

/// Trains the head on labeled images per the configured schedule (both
/// classes required). Backbone features are computed once and reused since
/// the backbone is frozen. Returns the per-epoch mean training loss.
std::vector<double> train_detector(DetectorModel& model,
                                   const std::vector<LabeledImage>& data);

/// Fraction of images whose thresholded verdict matches the label.
double detector_accuracy(const DetectorModel& model,
                         const std::vector<LabeledImage>& data);

}  // namespace himfr::detector
