#include "himfr/nn/backbone.hpp"

#include "himfr/nn/checkpoint.hpp"

namespace himfr::nn {

using imaging::ImageBuffer;

Tensor images_to_tensor(const std::vector<const ImageBuffer*>& imgs) {
    if (imgs.empty()) throw InputError("images_to_tensor: empty batch");
    const ImageBuffer& first = *imgs.front();
    Tensor t({static_cast<int>(imgs.size()), first.channels, first.height, first.width});
    for (std::size_t b = 0; b < imgs.size(); ++b) {
        const ImageBuffer& img = *imgs[b];
        if (!img.same_shape(first))
            throw ShapeError("images_to_tensor: mixed image shapes in batch");
        float* dst = t.data.data() +
                     static_cast<std::size_t>(b) * img.channels * img.pixel_count();
        for (int c = 0; c < img.channels; ++c)
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x)
                    dst[(static_cast<std::size_t>(c) * img.height + y) * img.width + x] =
                        img.at(y, x, c);
    }
    return t;
}

Tensor image_to_tensor(const ImageBuffer& img) {
    return images_to_tensor({&img});
}

ImageBuffer tensor_to_image(const Tensor& t, int batch_index) {
    t.require_rank(4, "tensor_to_image");
    const int c = t.dim(1), h = t.dim(2), w = t.dim(3);
    ImageBuffer img(h, w, c);
    const float* src =
        t.data.data() + static_cast<std::size_t>(batch_index) * c * h * w;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.at(y, x, ch) =
                    src[(static_cast<std::size_t>(ch) * h + y) * w + x];
    return img;
}

BackboneSpec BackboneSpec::parse(const std::string& spec) {
    BackboneSpec out;
    if (spec.rfind("toy:", 0) == 0) {
        out.kind = Kind::toy;
        out.base_channels = std::stoi(spec.substr(4));
        if (out.base_channels < 1)
            throw InputError("backbone base channels must be positive: " + spec);
        return out;
    }
    if (spec.rfind("pretrained:", 0) == 0) {
        out.kind = Kind::pretrained;
        out.path = spec.substr(11);
        if (out.path.empty())
            throw InputError("pretrained backbone spec needs a path");
        return out;
    }
    throw InputError("backbone spec must be toy:<channels> or pretrained:<path>: " + spec);
}

std::string BackboneSpec::to_string() const {
    return kind == Kind::toy ? "toy:" + std::to_string(base_channels)
                             : "pretrained:" + path;
}

namespace {
constexpr const char* kBackboneMagic = "HIMFR-BBN v1";
}

CnnBackbone::CnnBackbone(const BackboneSpec& spec, int reduction, std::uint64_t seed)
    : reduction_(reduction) {
    int base = spec.base_channels;
    std::string pretrained_path;
    if (spec.kind == BackboneSpec::Kind::pretrained) {
        const auto reader = CheckpointReader::open(spec.path, kBackboneMagic);
        // config is "<base>,<reduction>"
        const std::string& cfg = reader.config_json();
        const auto comma = cfg.find(',');
        base = std::stoi(cfg.substr(0, comma));
        const int stored_reduction = std::stoi(cfg.substr(comma + 1));
        if (stored_reduction != reduction)
            throw CheckpointError("backbone reduction mismatch in " + spec.path);
        pretrained_path = spec.path;
    }

    Rng rng(mix_seed(seed, 0xb0db0dULL));
    if (reduction == 28) {
        body_.emplace<Conv2d>("backbone.conv1", 3, base, 7, 7, 0, rng);
        body_.emplace<ReLU>();
        body_.emplace<Conv2d>("backbone.conv2", base, 2 * base, 3, 2, 1, rng);
        body_.emplace<ReLU>();
        body_.emplace<Conv2d>("backbone.conv3", 2 * base, 4 * base, 3, 2, 1, rng);
        body_.emplace<ReLU>();
    } else if (reduction == 16) {
        body_.emplace<Conv2d>("backbone.conv1", 3, base, 7, 4, 3, rng);
        body_.emplace<ReLU>();
        body_.emplace<Conv2d>("backbone.conv2", base, 2 * base, 3, 2, 1, rng);
        body_.emplace<ReLU>();
        body_.emplace<Conv2d>("backbone.conv3", 2 * base, 4 * base, 3, 2, 1, rng);
        body_.emplace<ReLU>();
    } else {
        throw InputError("unsupported backbone reduction: " + std::to_string(reduction));
    }
    out_channels_ = 4 * base;

    if (!pretrained_path.empty()) {
        const auto reader = CheckpointReader::open(pretrained_path, kBackboneMagic);
        reader.restore_params(params());
    }
}

Tensor CnnBackbone::forward(const Tensor& images) const {
    return body_.forward(images, /*training=*/false);
}

int CnnBackbone::map_extent(int input_size) const {
    if (input_size % reduction_ != 0)
        throw ShapeError("backbone input size must be a multiple of " +
                         std::to_string(reduction_));
    return input_size / reduction_;
}

ParamRefs CnnBackbone::params() const {
    ParamRefs refs;
    body_.collect_params(refs);
    return refs;
}

std::uint64_t CnnBackbone::params_hash() const {
    return hash_params(params());
}

void CnnBackbone::export_weights(const std::string& path) const {
    CheckpointWriter writer(kBackboneMagic);
    writer.set_config_json(std::to_string(out_channels_ / 4) + "," +
                           std::to_string(reduction_));
    writer.add_params(params());
    writer.write(path);
}

}  // namespace himfr::nn
