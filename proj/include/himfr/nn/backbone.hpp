#pragma once

#include <string>

#include "himfr/image.hpp"
#include "himfr/nn/layers.hpp"

namespace himfr::nn {

/// Packs ImageBuffers into a (B,C,H,W) planar tensor (and back).
Tensor images_to_tensor(const std::vector<const imaging::ImageBuffer*>& imgs);
Tensor image_to_tensor(const imaging::ImageBuffer& img);
imaging::ImageBuffer tensor_to_image(const Tensor& t, int batch_index = 0);

/// Backbone selector string: "toy:<base_channels>" for a freshly
/// initialized small CNN, or "pretrained:<path>" to restore weights from a
/// HIMFR-BBN v1 checkpoint.
struct BackboneSpec {
    enum class Kind { toy, pretrained };
    Kind kind = Kind::toy;
    int base_channels = 16;
    std::string path;

    static BackboneSpec parse(const std::string& spec);
    std::string to_string() const;
};

/// Small strided CNN feature extractor used in place of a large pretrained
/// network: three conv+ReLU blocks reducing the input by a fixed factor
/// (28 -> 8x8 map from 224, or 16 -> 14x14 map from 224), final channel
/// count 4x the base. Parameters are frozen: they are excluded from every
/// optimizer and no gradient ever flows into them.
class CnnBackbone {
public:
    CnnBackbone(const BackboneSpec& spec, int reduction, std::uint64_t seed);

    Tensor forward(const Tensor& images) const;

    int out_channels() const { return out_channels_; }
    int reduction() const { return reduction_; }
    int map_extent(int input_size) const;

    ParamRefs params() const;
    std::uint64_t params_hash() const;

    /// Writes the backbone weights as a standalone HIMFR-BBN v1 checkpoint
    /// (the format `pretrained:` specs consume).
    void export_weights(const std::string& path) const;

private:
    int reduction_;
    int out_channels_;
    // mutable: Sequential::forward is non-const by signature, but with
    // training=false it leaves all layer state untouched.
    mutable Sequential body_;
};

}  // namespace himfr::nn
