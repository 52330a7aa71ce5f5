#include "himfr/detector.hpp"

#include <algorithm>

#include <json.hpp>

#include "himfr/nn/checkpoint.hpp"

namespace himfr::detector {

using nlohmann::json;

std::string DetectorConfig::to_json() const {
    json j;
    j["backbone_spec"] = backbone_spec;
    j["head_hidden"] = head_hidden;
    j["threshold"] = threshold;
    j["seed"] = seed;
    j["epochs"] = train.epochs;
    j["batch_size"] = train.batch_size;
    j["optimizer"] = nn::to_string(train.optimizer);
    j["learning_rate"] = train.learning_rate;
    j["input_size"] = train.input_size;
    return j.dump();
}

DetectorConfig DetectorConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    DetectorConfig cfg;
    cfg.backbone_spec = j.at("backbone_spec").get<std::string>();
    cfg.head_hidden = j.at("head_hidden").get<int>();
    cfg.threshold = j.at("threshold").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.train.epochs = j.at("epochs").get<int>();
    cfg.train.batch_size = j.at("batch_size").get<int>();
    cfg.train.optimizer = nn::optimizer_kind_from_string(j.at("optimizer").get<std::string>());
    cfg.train.learning_rate = j.at("learning_rate").get<float>();
    cfg.train.input_size = j.at("input_size").get<int>();
    return cfg;
}

DetectorModel::DetectorModel(DetectorConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.head_hidden < 1) throw InputError("detector head width must be positive");
    if (cfg_.train.epochs < 1 || cfg_.train.batch_size < 1 ||
        !(cfg_.train.learning_rate > 0.0f))
        throw InputError("detector training schedule values must be positive");
    backbone_ = std::make_unique<nn::CnnBackbone>(
        nn::BackboneSpec::parse(cfg_.backbone_spec), /*reduction=*/28, cfg_.seed);
    const int map = backbone_->map_extent(cfg_.train.input_size);
    const int flat = backbone_->out_channels() * map * map;

    nn::Rng rng(mix_seed(cfg_.seed, 0xdeadULL));
    head_.emplace<nn::Flatten>();
    head_.emplace<nn::BatchNorm>("head.bn1", flat, nn::BatchNorm::Mode::feature);
    head_.emplace<nn::Dense>("head.fc1", flat, cfg_.head_hidden, rng);
    head_.emplace<nn::ReLU>();
    head_.emplace<nn::BatchNorm>("head.bn2", cfg_.head_hidden,
                                 nn::BatchNorm::Mode::feature);
    head_.emplace<nn::Dense>("head.fc2", cfg_.head_hidden, 2, rng);
}

nn::Tensor DetectorModel::head_probabilities(const nn::Tensor& features) const {
    return nn::softmax_rows(head_.forward(features, /*training=*/false));
}

DetectorVerdict DetectorModel::detect(const ImageBuffer& img) const {
    if (img.channels != 3) throw ShapeError("detector expects 3-channel images");
    const int s = cfg_.train.input_size;
    const ImageBuffer sized =
        (img.height == s && img.width == s) ? img : imaging::resize_bilinear(img, s, s);
    const nn::Tensor features = backbone_->forward(nn::image_to_tensor(sized));
    const nn::Tensor probs = head_probabilities(features);
    DetectorVerdict v;
    v.probability = probs.data[1];
    v.is_masked = v.probability > cfg_.threshold;
    return v;
}

nn::ParamRefs DetectorModel::head_params() const {
    nn::ParamRefs refs;
    head_.collect_params(refs);
    return refs;
}

nn::ParamRefs DetectorModel::all_params() const {
    nn::ParamRefs refs = backbone_->params();
    head_.collect_params(refs);
    return refs;
}

std::int64_t DetectorModel::trainable_param_count() const {
    std::int64_t n = 0;
    for (const nn::Param* p : head_params())
        if (p->trainable) n += static_cast<std::int64_t>(p->value.size());
    return n;
}

std::uint64_t DetectorModel::save(const std::string& path) const {
    nn::CheckpointWriter writer(kCheckpointMagic);
    writer.set_config_json(cfg_.to_json());
    writer.add_params(all_params());
    return writer.write(path);
}

DetectorModel DetectorModel::load(const std::string& path) {
    const auto reader = nn::CheckpointReader::open(path, kCheckpointMagic);
    DetectorModel model(DetectorConfig::from_json(reader.config_json()));
    reader.restore_params(model.all_params());
    return model;
}

void DetectorModel::zero_final_layer() {
    auto& fc2 = dynamic_cast<nn::Dense&>(head_.at(5));
    std::fill(fc2.weight.value.begin(), fc2.weight.value.end(), 0.0f);
    std::fill(fc2.bias.value.begin(), fc2.bias.value.end(), 0.0f);
}

std::vector<double> train_detector(DetectorModel& model,
                                   const std::vector<LabeledImage>& data) {
    if (data.empty()) throw DataError("detector training set is empty");
    bool has0 = false, has1 = false;
    for (const auto& s : data) {
        if (s.label == 0) has0 = true;
        else if (s.label == 1) has1 = true;
        else throw DataError("detector labels must be 0 or 1");
    }
    if (!has0 || !has1)
        throw DataError("detector training needs both masked and unmasked samples");

    const DetectorConfig& cfg = model.config();
    const int s = cfg.train.input_size;

    // Backbone is frozen, so features are computed once up front.
    std::vector<nn::Tensor> features;
    features.reserve(data.size());
    for (const auto& sample : data) {
        const ImageBuffer sized = (sample.image.height == s && sample.image.width == s)
                                      ? sample.image
                                      : imaging::resize_bilinear(sample.image, s, s);
        features.push_back(model.backbone_->forward(nn::image_to_tensor(sized)));
    }
    const auto& fshape = features.front().shape;  // (1,C,h,w)

    nn::Adam opt = nn::make_optimizer(cfg.train.optimizer, model.head_params(),
                                      cfg.train.learning_rate);

    std::vector<double> history;
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        nn::Rng rng(mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.train.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.train.batch_size));
            const int b = static_cast<int>(end - start);

            nn::Tensor batch({b, fshape[1], fshape[2], fshape[3]});
            std::vector<int> labels(static_cast<std::size_t>(b));
            const std::size_t stride = features.front().data.size();
            for (int i = 0; i < b; ++i) {
                const auto& f = features[order[start + static_cast<std::size_t>(i)]];
                std::copy(f.data.begin(), f.data.end(),
                          batch.data.begin() + static_cast<std::size_t>(i) * stride);
                labels[static_cast<std::size_t>(i)] =
                    data[order[start + static_cast<std::size_t>(i)]].label;
            }

            opt.zero_grad();
            const nn::Tensor logits = model.head_.forward(batch, /*training=*/true);
            const auto ce = nn::softmax_cross_entropy(logits, labels);
            model.head_.backward(ce.grad_logits);
            opt.step();
            epoch_loss += ce.loss * b;
        }
        history.push_back(epoch_loss / static_cast<double>(data.size()));
    }
    return history;
}

double detector_accuracy(const DetectorModel& model,
                         const std::vector<LabeledImage>& data) {
    if (data.empty()) throw DataError("detector evaluation set is empty");
    std::size_t correct = 0;
    for (const auto& sample : data) {
        const auto v = model.detect(sample.image);
        if ((v.is_masked ? 1 : 0) == sample.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace himfr::detector
