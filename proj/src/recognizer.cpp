#include "himfr/recognizer.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <json.hpp>

#include "himfr/nn/checkpoint.hpp"

namespace himfr::recog {

using nlohmann::json;
using nn::Tensor;
using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

std::string RecognizerConfig::to_json() const {
    json j;
    j["backbone_spec"] = backbone_spec;
    j["input_size"] = input_size;
    j["patch_size"] = patch_size;
    j["stride"] = stride;
    j["proj_dim"] = proj_dim;
    j["transformer_layers"] = transformer_layers;
    j["heads"] = heads;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["optimizer"] = nn::to_string(optimizer);
    j["learning_rate"] = learning_rate;
    j["augment"] = augment;
    j["stop_at_train_accuracy"] = stop_at_train_accuracy;
    j["seed"] = seed;
    j["class_names"] = class_names;
    return j.dump();
}

RecognizerConfig RecognizerConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    RecognizerConfig cfg;
    cfg.backbone_spec = j.at("backbone_spec").get<std::string>();
    cfg.input_size = j.at("input_size").get<int>();
    cfg.patch_size = j.at("patch_size").get<int>();
    cfg.stride = j.at("stride").get<int>();
    cfg.proj_dim = j.at("proj_dim").get<int>();
    cfg.transformer_layers = j.at("transformer_layers").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.optimizer = nn::optimizer_kind_from_string(j.at("optimizer").get<std::string>());
    cfg.learning_rate = j.at("learning_rate").get<float>();
    cfg.augment = j.at("augment").get<bool>();
    cfg.stop_at_train_accuracy = j.at("stop_at_train_accuracy").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.class_names = j.at("class_names").get<std::vector<std::string>>();
    return cfg;
}

int patch_count(int h, int w, int patch, int stride) {
    if (patch < 1 || stride < 1 || patch > h || patch > w)
        throw InputError("invalid patch configuration");
    if ((h - patch) % stride != 0 || (w - patch) % stride != 0)
        throw InputError("feature extent minus patch size must be divisible by stride");
    return ((h - patch) / stride + 1) * ((w - patch) / stride + 1);
}

Tensor make_patches(const Tensor& features, int patch, int stride) {
    features.require_rank(4, "make_patches");
    const int b = features.dim(0), c = features.dim(1);
    const int h = features.dim(2), w = features.dim(3);
    const int n = patch_count(h, w, patch, stride);
    const int rows = (h - patch) / stride + 1;
    const int cols = (w - patch) / stride + 1;
    const int len = patch * patch * c;

    Tensor out({b, n, len});
    for (int i = 0; i < b; ++i) {
        const float* f = features.data.data() + static_cast<std::size_t>(i) * c * h * w;
        for (int py = 0; py < rows; ++py) {
            for (int px = 0; px < cols; ++px) {
                float* dst = out.data.data() +
                             (static_cast<std::size_t>(i) * n + py * cols + px) * len;
                for (int dy = 0; dy < patch; ++dy)
                    for (int dx = 0; dx < patch; ++dx)
                        for (int ch = 0; ch < c; ++ch)
                            dst[(dy * patch + dx) * c + ch] =
                                f[(static_cast<std::size_t>(ch) * h + py * stride + dy) * w +
                                  px * stride + dx];
            }
        }
    }
    return out;
}

Tensor encode_patches(const Tensor& patches, const Tensor& projection,
                      const Tensor& positions, const Tensor& class_token) {
    patches.require_rank(3, "encode_patches");
    projection.require_rank(2, "encode_patches");
    positions.require_rank(2, "encode_patches");
    const int b = patches.dim(0), n = patches.dim(1), len = patches.dim(2);
    const int d = projection.dim(1);
    if (projection.dim(0) != len)
        throw ShapeError("encode_patches: projection rows must match patch length");
    if (positions.dim(0) != n + 1 || positions.dim(1) != d)
        throw ShapeError("encode_patches: position embedding must be (N+1) x D");
    if (class_token.numel() != d)
        throw ShapeError("encode_patches: class token dim mismatch");

    Tensor z0({b, n + 1, d});
    CMapMat pm(projection.data.data(), len, d);
    for (int i = 0; i < b; ++i) {
        CMapMat xm(patches.data.data() + static_cast<std::size_t>(i) * n * len, n, len);
        MapMat zm(z0.data.data() + static_cast<std::size_t>(i) * (n + 1) * d, n + 1, d);
        CMapMat posm(positions.data.data(), n + 1, d);
        Eigen::Map<const Eigen::RowVectorXf> cls(class_token.data.data(), d);
        zm.row(0) = cls;
        zm.bottomRows(n).noalias() = xm * pm;
        zm += posm;
    }
    return z0;
}

EncoderBlock::EncoderBlock(const std::string& name, int dim, int heads, nn::Rng& rng)
    : ln1(name + ".ln1", dim),
      attention(name + ".msa", dim, heads, rng),
      ln2(name + ".ln2", dim),
      mlp1(name + ".mlp1", dim, 2 * dim, rng),
      mlp2(name + ".mlp2", 2 * dim, dim, rng) {}

Tensor EncoderBlock::forward(const Tensor& z, bool training) {
    z.require_rank(3, "EncoderBlock");
    const int b = z.dim(0), n = z.dim(1), d = z.dim(2);

    Tensor a = attention.forward(ln1.forward(z, training), training);
    Tensor z1 = z;
    for (std::size_t i = 0; i < z1.data.size(); ++i) z1.data[i] += a.data[i];

    Tensor h = ln2.forward(z1, training).reshaped({b * n, d});
    Tensor m = mlp2.forward(gelu.forward(mlp1.forward(h, training), training), training);

    Tensor out = z1;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += m.data[i];
    return out;
}

Tensor EncoderBlock::backward(const Tensor& grad_out) {
    const int b = grad_out.dim(0), n = grad_out.dim(1), d = grad_out.dim(2);

    Tensor dm = mlp1.backward(gelu.backward(
        mlp2.backward(grad_out.reshaped({b * n, d}))));
    Tensor dz1 = ln2.backward(dm.reshaped({b, n, d}));
    for (std::size_t i = 0; i < dz1.data.size(); ++i)
        dz1.data[i] += grad_out.data[i];

    Tensor da = attention.backward(dz1);
    Tensor dz = ln1.backward(da);
    for (std::size_t i = 0; i < dz.data.size(); ++i) dz.data[i] += dz1.data[i];
    return dz;
}

void EncoderBlock::collect_params(nn::ParamRefs& out) {
    ln1.collect_params(out);
    attention.collect_params(out);
    ln2.collect_params(out);
    mlp1.collect_params(out);
    mlp2.collect_params(out);
}

Tensor transformer_encode(const Tensor& z0, const std::vector<EncoderBlock*>& blocks,
                          bool training) {
    Tensor z = z0;
    for (EncoderBlock* block : blocks) z = block->forward(z, training);
    return z;
}

RecognizerModel::RecognizerModel(RecognizerConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.num_classes() < 2)
        throw InputError("recognizer needs at least 2 classes");
    if (cfg_.proj_dim % cfg_.heads != 0)
        throw InputError("heads must divide the projection dimension");
    if (cfg_.transformer_layers < 1)
        throw InputError("recognizer needs at least 1 transformer layer");
    if (cfg_.epochs < 1 || cfg_.batch_size < 1 || !(cfg_.learning_rate > 0.0f))
        throw InputError("recognizer training schedule values must be positive");

    backbone_ = std::make_unique<nn::CnnBackbone>(
        nn::BackboneSpec::parse(cfg_.backbone_spec), /*reduction=*/16, cfg_.seed);
    const int map = backbone_->map_extent(cfg_.input_size);
    tokens_ = patch_count(map, map, cfg_.patch_size, cfg_.stride);
    patch_len_ = cfg_.patch_size * cfg_.patch_size * backbone_->out_channels();

    nn::Rng rng(mix_seed(cfg_.seed, 0x5ecULL));
    projection_ = nn::Param("vit.projection", {patch_len_, cfg_.proj_dim});
    nn::init_xavier_uniform(projection_.value, rng, patch_len_, cfg_.proj_dim);
    class_token_ = nn::Param("vit.class_token", {cfg_.proj_dim});
    nn::init_normal(class_token_.value, rng, 0.02f);
    positions_ = nn::Param("vit.positions", {tokens_ + 1, cfg_.proj_dim});
    nn::init_normal(positions_.value, rng, 0.02f);

    for (int l = 0; l < cfg_.transformer_layers; ++l)
        blocks_.push_back(std::make_unique<EncoderBlock>(
            "vit.block" + std::to_string(l), cfg_.proj_dim, cfg_.heads, rng));
    final_ln_ = std::make_unique<nn::LayerNorm>("vit.final_ln", cfg_.proj_dim);
    head_ = std::make_unique<nn::Dense>("vit.head", cfg_.proj_dim,
                                        cfg_.num_classes(), rng);
}

Tensor RecognizerModel::forward_logits(const Tensor& images, bool training) const {
    const Tensor features = backbone_->forward(images);
    Tensor patches = make_patches(features, cfg_.patch_size, cfg_.stride);

    Tensor proj({patch_len_, cfg_.proj_dim});
    proj.data = projection_.value;
    Tensor pos({tokens_ + 1, cfg_.proj_dim});
    pos.data = positions_.value;
    Tensor cls({cfg_.proj_dim});
    cls.data = class_token_.value;

    Tensor z = encode_patches(patches, proj, pos, cls);
    if (training) cached_patches_ = patches;
    for (const auto& block : blocks_) z = block->forward(z, training);

    // final representation: layer-normed class token
    const int b = z.dim(0), d = cfg_.proj_dim;
    Tensor cls_rows({b, d});
    for (int i = 0; i < b; ++i)
        std::copy_n(z.data.begin() + static_cast<std::size_t>(i) * (tokens_ + 1) * d, d,
                    cls_rows.data.begin() + static_cast<std::size_t>(i) * d);
    return head_->forward(final_ln_->forward(cls_rows, training), training);
}

void RecognizerModel::backward_from_logits(const Tensor& grad_logits) {
    const int b = grad_logits.dim(0), d = cfg_.proj_dim;
    Tensor dcls = final_ln_->backward(head_->backward(grad_logits));

    // scatter class-token gradient back into the full sequence
    Tensor dz({b, tokens_ + 1, d});
    for (int i = 0; i < b; ++i)
        std::copy_n(dcls.data.begin() + static_cast<std::size_t>(i) * d, d,
                    dz.data.begin() + static_cast<std::size_t>(i) * (tokens_ + 1) * d);

    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it)
        dz = (*it)->backward(dz);

    // encode_patches backward: positions get the full gradient, the class
    // token its row, and the projection the patch rows.
    const int n = tokens_;
    CMapMat patches(cached_patches_.data.data(), b * n, patch_len_);
    MapMat dproj(projection_.grad.data(), patch_len_, cfg_.proj_dim);
    MapMat dpos(positions_.grad.data(), n + 1, d);
    Eigen::Map<Eigen::RowVectorXf> dclstok(class_token_.grad.data(), d);

    RowMat dpatch_rows(b * n, d);
    for (int i = 0; i < b; ++i) {
        CMapMat dzm(dz.data.data() + static_cast<std::size_t>(i) * (n + 1) * d, n + 1, d);
        dpos += dzm;
        dclstok += dzm.row(0);
        dpatch_rows.middleRows(i * n, n) = dzm.bottomRows(n);
    }
    dproj.noalias() += patches.transpose() * dpatch_rows;
    // gradient into the patches themselves is dropped: the backbone is frozen
}

std::vector<double> RecognizerModel::classify(const ImageBuffer& img) const {
    if (img.channels != 3) throw ShapeError("recognizer expects 3-channel images");
    const int s = cfg_.input_size;
    const ImageBuffer sized =
        (img.height == s && img.width == s) ? img : imaging::resize_bilinear(img, s, s);
    const Tensor logits = forward_logits(nn::image_to_tensor(sized), false);
    const Tensor probs = nn::softmax_rows(logits);
    return std::vector<double>(probs.data.begin(), probs.data.end());
}

int RecognizerModel::predict(const ImageBuffer& img) const {
    const auto probs = classify(img);
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) -
                            probs.begin());
}

nn::ParamRefs RecognizerModel::trainable_params() {
    nn::ParamRefs refs;
    refs.push_back(&projection_);
    refs.push_back(&class_token_);
    refs.push_back(&positions_);
    for (auto& block : blocks_) block->collect_params(refs);
    final_ln_->collect_params(refs);
    head_->collect_params(refs);
    return refs;
}

nn::ParamRefs RecognizerModel::all_params() {
    nn::ParamRefs refs = backbone_->params();
    const nn::ParamRefs head = trainable_params();
    refs.insert(refs.end(), head.begin(), head.end());
    return refs;
}

std::uint64_t RecognizerModel::save(const std::string& path) const {
    nn::CheckpointWriter writer(kCheckpointMagic);
    writer.set_config_json(cfg_.to_json());
    writer.add_params(const_cast<RecognizerModel*>(this)->all_params());
    return writer.write(path);
}

RecognizerModel RecognizerModel::load(const std::string& path) {
    const auto reader = nn::CheckpointReader::open(path, kCheckpointMagic);
    RecognizerModel model(RecognizerConfig::from_json(reader.config_json()));
    reader.restore_params(model.all_params());
    return model;
}

namespace {

ImageBuffer augment_image(const ImageBuffer& img, nn::Rng& rng) {
    std::uniform_int_distribution<int> flip(0, 1);
    std::uniform_int_distribution<int> shift(-4, 4);
    const bool do_flip = flip(rng) == 1;
    const int dy = shift(rng);
    const int dx = shift(rng);

    ImageBuffer out(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y) {
        // reflect out-of-range coordinates back into the image
        int sy = y + dy;
        if (sy < 0) sy = -sy;
        if (sy >= img.height) sy = 2 * img.height - 2 - sy;
        for (int x = 0; x < img.width; ++x) {
            int sx = x + dx;
            if (sx < 0) sx = -sx;
            if (sx >= img.width) sx = 2 * img.width - 2 - sx;
            const int src_x = do_flip ? img.width - 1 - sx : sx;
            for (int c = 0; c < img.channels; ++c)
                out.at(y, x, c) = img.at(sy, src_x, c);
        }
    }
    return out;
}

}  // namespace

std::vector<double> train_recognizer(RecognizerModel& model,
                                     const std::vector<LabeledImage>& data) {
    if (data.empty()) throw DataError("recognizer training set is empty");
    const RecognizerConfig& cfg = model.config();
    for (const auto& s : data)
        if (s.label < 0 || s.label >= cfg.num_classes())
            throw DataError("recognizer label out of range");

    const std::uint64_t backbone_before = model.backbone_->params_hash();
    nn::Adam opt = nn::make_optimizer(cfg.optimizer, model.trainable_params(),
                                      cfg.learning_rate);

    const int s = cfg.input_size;
    std::vector<ImageBuffer> sized;
    sized.reserve(data.size());
    for (const auto& sample : data)
        sized.push_back((sample.image.height == s && sample.image.width == s)
                            ? sample.image
                            : imaging::resize_bilinear(sample.image, s, s));

    std::vector<double> history;
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        nn::Rng shuffle_rng(mix_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        nn::Rng aug_rng(mix_seed(cfg.seed, 3000 + static_cast<std::uint64_t>(epoch)));

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const int b = static_cast<int>(end - start);

            std::vector<ImageBuffer> batch_imgs;
            std::vector<const ImageBuffer*> ptrs;
            std::vector<int> labels;
            batch_imgs.reserve(static_cast<std::size_t>(b));
            for (std::size_t k = start; k < end; ++k) {
                const ImageBuffer& base = sized[order[k]];
                batch_imgs.push_back(cfg.augment ? augment_image(base, aug_rng) : base);
                labels.push_back(data[order[k]].label);
            }
            for (const auto& img : batch_imgs) ptrs.push_back(&img);

            opt.zero_grad();
            const Tensor logits =
                model.forward_logits(nn::images_to_tensor(ptrs), /*training=*/true);
            const auto ce = nn::softmax_cross_entropy(logits, labels);
            model.backward_from_logits(ce.grad_logits);
            opt.step();
            epoch_loss += ce.loss * b;
        }
        history.push_back(epoch_loss / static_cast<double>(data.size()));

        if (cfg.stop_at_train_accuracy > 0.0) {
            // check on clean images in inference mode
            std::size_t correct = 0;
            for (std::size_t i = 0; i < sized.size(); ++i)
                if (model.predict(sized[i]) == data[i].label) ++correct;
            if (static_cast<double>(correct) / static_cast<double>(sized.size()) >=
                cfg.stop_at_train_accuracy)
                break;
        }
    }

    if (model.backbone_->params_hash() != backbone_before)
        throw Error("frozen backbone changed during recognizer training");
    return history;
}

RecognizerEvaluation evaluate_recognizer(const RecognizerModel& model,
                                         const std::vector<LabeledImage>& data) {
    if (data.empty()) throw DataError("recognizer evaluation set is empty");
    RecognizerEvaluation eval;
    std::vector<int> truths;
    for (const auto& sample : data) {
        const auto probs = model.classify(sample.image);
        eval.predictions.push_back(static_cast<int>(
            std::max_element(probs.begin(), probs.end()) - probs.begin()));
        eval.probabilities.push_back(probs);
        truths.push_back(sample.label);
    }
    const int k = model.config().num_classes();
    eval.report = metrics::classification_report(eval.predictions, truths, k);
    eval.roc = metrics::roc_auc_per_class(eval.probabilities, truths, k);
    return eval;
}

}  // namespace himfr::recog
