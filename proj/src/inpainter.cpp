#include "himfr/inpainter.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "himfr/nn/backbone.hpp"
#include "himfr/nn/checkpoint.hpp"

namespace himfr::inpaint {

using nlohmann::json;
using nn::Tensor;

std::string InpaintConfig::to_json() const {
    json j;
    j["image_size"] = image_size;
    j["latent_dim"] = latent_dim;
    j["base_channels"] = base_channels;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["optimizer"] = nn::to_string(optimizer);
    j["learning_rate"] = learning_rate;
    j["w_recon"] = w_recon;
    j["w_adv"] = w_adv;
    j["w_kl"] = w_kl;
    j["seed"] = seed;
    return j.dump();
}

InpaintConfig InpaintConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    InpaintConfig cfg;
    cfg.image_size = j.at("image_size").get<int>();
    cfg.latent_dim = j.at("latent_dim").get<int>();
    cfg.base_channels = j.at("base_channels").get<int>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.optimizer = nn::optimizer_kind_from_string(j.at("optimizer").get<std::string>());
    cfg.learning_rate = j.at("learning_rate").get<float>();
    cfg.w_recon = j.at("w_recon").get<float>();
    cfg.w_adv = j.at("w_adv").get<float>();
    cfg.w_kl = j.at("w_kl").get<float>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

// ----------------------------------------------------------------- Generator

Generator::Generator(const InpaintConfig& cfg, nn::Rng& rng)
    : latent_dim_(cfg.latent_dim) {
    if (cfg.image_size % 16 != 0)
        throw InputError("inpainter image size must be a multiple of 16");
    if (cfg.latent_dim < 1 || cfg.base_channels < 1 || cfg.epochs < 1 ||
        cfg.batch_size < 1 || !(cfg.learning_rate > 0.0f) || !(cfg.w_recon > 0.0f) ||
        !(cfg.w_adv > 0.0f) || !(cfg.w_kl > 0.0f))
        throw InputError("inpainter config values must be positive");
    const int c = cfg.base_channels;
    bottleneck_channels_ = 4 * c;

    encoder_.emplace<nn::Conv2d>("gen.enc1", 4, c, 4, 2, 1, rng);
    encoder_.emplace<nn::LeakyReLU>();
    encoder_.emplace<nn::Conv2d>("gen.enc2", c, 2 * c, 4, 2, 1, rng);
    encoder_.emplace<nn::LeakyReLU>();
    encoder_.emplace<nn::Conv2d>("gen.enc3", 2 * c, 4 * c, 4, 2, 1, rng);
    encoder_.emplace<nn::LeakyReLU>();
    encoder_.emplace<nn::Conv2d>("gen.enc4", 4 * c, 4 * c, 4, 2, 1, rng);
    encoder_.emplace<nn::LeakyReLU>();

    posterior_ = std::make_unique<nn::Dense>("gen.posterior", 4 * c,
                                             2 * latent_dim_, rng);

    decoder_.emplace<nn::Conv2d>("gen.dec0", 4 * c + latent_dim_, 4 * c, 3, 1, 1, rng);
    decoder_.emplace<nn::LeakyReLU>();
    decoder_.emplace<nn::Upsample2x>();
    decoder_.emplace<nn::Conv2d>("gen.dec1", 4 * c, 2 * c, 3, 1, 1, rng);
    decoder_.emplace<nn::LeakyReLU>();
    decoder_.emplace<nn::Upsample2x>();
    decoder_.emplace<nn::Conv2d>("gen.dec2", 2 * c, c, 3, 1, 1, rng);
    decoder_.emplace<nn::LeakyReLU>();
    decoder_.emplace<nn::Upsample2x>();
    decoder_.emplace<nn::Conv2d>("gen.dec3", c, c, 3, 1, 1, rng);
    decoder_.emplace<nn::LeakyReLU>();
    decoder_.emplace<nn::Upsample2x>();
    decoder_.emplace<nn::Conv2d>("gen.dec4", c, 3, 3, 1, 1, rng);
    decoder_.emplace<nn::Sigmoid>();
}

Tensor Generator::decode(const Tensor& features, const Tensor& z, bool training) const {
    const int b = features.dim(0), fc = features.dim(1);
    const int r = features.dim(2);
    Tensor dec_in({b, fc + latent_dim_, r, r});
    const std::size_t plane = static_cast<std::size_t>(r) * r;
    for (int i = 0; i < b; ++i) {
        float* dst = dec_in.data.data() +
                     static_cast<std::size_t>(i) * (fc + latent_dim_) * plane;
        const float* src = features.data.data() + static_cast<std::size_t>(i) * fc * plane;
        std::copy_n(src, static_cast<std::size_t>(fc) * plane, dst);
        for (int l = 0; l < latent_dim_; ++l) {
            const float zv = z.data[static_cast<std::size_t>(i) * latent_dim_ + l];
            std::fill_n(dst + (static_cast<std::size_t>(fc) + l) * plane, plane, zv);
        }
    }
    return decoder_.forward(dec_in, training);
}

Generator::TrainForward Generator::forward_train(const Tensor& x4, nn::Rng& rng) {
    x4.require_rank(4, "Generator");
    const int b = x4.dim(0);
    const Tensor enc = encoder_.forward(x4, true);
    const int fc = enc.dim(1), r = enc.dim(2);
    cached_r_ = r;

    // global average pool
    Tensor pooled({b, fc});
    const std::size_t plane = static_cast<std::size_t>(r) * r;
    for (int i = 0; i < b; ++i)
        for (int ch = 0; ch < fc; ++ch) {
            const float* p = enc.data.data() +
                             (static_cast<std::size_t>(i) * fc + ch) * plane;
            float sum = 0.0f;
            for (std::size_t k = 0; k < plane; ++k) sum += p[k];
            pooled.data[static_cast<std::size_t>(i) * fc + ch] =
                sum / static_cast<float>(plane);
        }

    const Tensor stats = posterior_->forward(pooled, true);
    TrainForward out;
    out.mu = Tensor({b, latent_dim_});
    out.logvar = Tensor({b, latent_dim_});
    out.z = Tensor({b, latent_dim_});
    cached_eps_ = Tensor({b, latent_dim_});
    cached_std_ = Tensor({b, latent_dim_});
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    for (int i = 0; i < b; ++i) {
        for (int l = 0; l < latent_dim_; ++l) {
            const std::size_t k = static_cast<std::size_t>(i) * latent_dim_ + l;
            out.mu.data[k] = stats.data[static_cast<std::size_t>(i) * 2 * latent_dim_ + l];
            out.logvar.data[k] =
                stats.data[static_cast<std::size_t>(i) * 2 * latent_dim_ + latent_dim_ + l];
            const float eps = gauss(rng);
            const float std = std::exp(0.5f * out.logvar.data[k]);
            cached_eps_.data[k] = eps;
            cached_std_.data[k] = std;
            out.z.data[k] = out.mu.data[k] + std * eps;
        }
    }
    out.output = decode(enc, out.z, true);
    return out;
}

Tensor Generator::forward_with_latent(const Tensor& x4, const Tensor& z) const {
    return decode(encode_features(x4), z, false);
}

Tensor Generator::encode_features(const Tensor& x4) const {
    return encoder_.forward(x4, false);
}

Tensor Generator::decode_with_latent(const Tensor& features, const Tensor& z) const {
    return decode(features, z, false);
}

void Generator::backward(const Tensor& grad_output, const Tensor& grad_mu_extra,
                         const Tensor& grad_logvar_extra) {
    const Tensor ddec = decoder_.backward(grad_output);
    const int b = ddec.dim(0);
    const int fc = ddec.dim(1) - latent_dim_;
    const int r = ddec.dim(2);
    const std::size_t plane = static_cast<std::size_t>(r) * r;

    Tensor denc({b, fc, r, r});
    Tensor dz({b, latent_dim_});
    for (int i = 0; i < b; ++i) {
        const float* src =
            ddec.data.data() + static_cast<std::size_t>(i) * (fc + latent_dim_) * plane;
        std::copy_n(src, static_cast<std::size_t>(fc) * plane,
                    denc.data.data() + static_cast<std::size_t>(i) * fc * plane);
        for (int l = 0; l < latent_dim_; ++l) {
            const float* zp = src + (static_cast<std::size_t>(fc) + l) * plane;
            float sum = 0.0f;
            for (std::size_t k = 0; k < plane; ++k) sum += zp[k];
            dz.data[static_cast<std::size_t>(i) * latent_dim_ + l] = sum;
        }
    }

    // reparameterization: z = mu + std*eps, std = exp(logvar/2)
    Tensor dstats({b, 2 * latent_dim_});
    for (int i = 0; i < b; ++i) {
        for (int l = 0; l < latent_dim_; ++l) {
            const std::size_t k = static_cast<std::size_t>(i) * latent_dim_ + l;
            const float dzv = dz.data[k];
            dstats.data[static_cast<std::size_t>(i) * 2 * latent_dim_ + l] =
                dzv + grad_mu_extra.data[k];
            dstats.data[static_cast<std::size_t>(i) * 2 * latent_dim_ + latent_dim_ + l] =
                dzv * cached_eps_.data[k] * 0.5f * cached_std_.data[k] +
                grad_logvar_extra.data[k];
        }
    }
    const Tensor dpooled = posterior_->backward(dstats);

    // GAP backward: spread evenly over the plane
    const float inv_plane = 1.0f / static_cast<float>(plane);
    for (int i = 0; i < b; ++i)
        for (int ch = 0; ch < fc; ++ch) {
            const float g =
                dpooled.data[static_cast<std::size_t>(i) * fc + ch] * inv_plane;
            float* dst = denc.data.data() +
                         (static_cast<std::size_t>(i) * fc + ch) * plane;
            for (std::size_t k = 0; k < plane; ++k) dst[k] += g;
        }
    encoder_.backward(denc);
}

nn::ParamRefs Generator::params() {
    nn::ParamRefs refs;
    encoder_.collect_params(refs);
    posterior_->collect_params(refs);
    decoder_.collect_params(refs);
    return refs;
}

// ------------------------------------------------------------- Discriminator

Discriminator::Discriminator(const InpaintConfig& cfg, nn::Rng& rng) {
    const int c = cfg.base_channels;
    const int r = cfg.image_size / 16;
    body_.emplace<nn::Conv2d>("disc.conv1", 3, c, 4, 2, 1, rng);
    body_.emplace<nn::LeakyReLU>();
    body_.emplace<nn::Conv2d>("disc.conv2", c, 2 * c, 4, 2, 1, rng);
    body_.emplace<nn::LeakyReLU>();
    body_.emplace<nn::Conv2d>("disc.conv3", 2 * c, 4 * c, 4, 2, 1, rng);
    body_.emplace<nn::LeakyReLU>();
    body_.emplace<nn::Conv2d>("disc.conv4", 4 * c, 8 * c, 4, 2, 1, rng);
    body_.emplace<nn::LeakyReLU>();
    body_.emplace<nn::Flatten>();
    body_.emplace<nn::Dense>("disc.fc", 8 * c * r * r, 1, rng);
}

Tensor Discriminator::forward(const Tensor& images, bool training) {
    return body_.forward(images, training);
}

Tensor Discriminator::backward(const Tensor& grad_scores) {
    return body_.backward(grad_scores);
}

double Discriminator::score(const Tensor& image) const {
    const Tensor s = body_.forward(image, false);
    return static_cast<double>(s.data[0]);
}

nn::ParamRefs Discriminator::params() {
    nn::ParamRefs refs;
    body_.collect_params(refs);
    return refs;
}

// --------------------------------------------------------------------- model

const InpaintCandidate& select_best(const std::vector<InpaintCandidate>& candidates) {
    if (candidates.empty()) throw InputError("select_best: empty candidate list");
    const InpaintCandidate* best = &candidates.front();
    for (const auto& c : candidates) {
        if (c.score > best->score ||
            (c.score == best->score && c.latent_seed < best->latent_seed))
            best = &c;
    }
    return *best;
}

double reconstruction_loss(const Tensor& output, const Tensor& ground_truth,
                           const Tensor& mask) {
    if (output.shape != ground_truth.shape)
        throw ShapeError("reconstruction_loss: shape mismatch");
    const int b = output.dim(0), ch = output.dim(1);
    const int h = output.dim(2), w = output.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    double known = 0.0, hidden = 0.0;
    for (int i = 0; i < b; ++i)
        for (int c = 0; c < ch; ++c)
            for (std::size_t p = 0; p < plane; ++p) {
                const std::size_t idx =
                    (static_cast<std::size_t>(i) * ch + c) * plane + p;
                const float m = mask.data[static_cast<std::size_t>(i) * plane + p];
                const double d = std::abs(static_cast<double>(output.data[idx]) -
                                          ground_truth.data[idx]);
                known += d * (1.0 - m);
                hidden += d * m;
            }
    const double n = static_cast<double>(output.numel());
    return known / n + hidden / n;
}

InpainterModel::InpainterModel(InpaintConfig cfg)
    : cfg_(cfg),
      gen_([&] {
          nn::Rng rng(mix_seed(cfg.seed, 0x6e6eULL));
          return Generator(cfg, rng);
      }()),
      disc_([&] {
          nn::Rng rng(mix_seed(cfg.seed, 0xd15cULL));
          return Discriminator(cfg, rng);
      }()) {}

std::vector<InpaintCandidate> InpainterModel::generate_candidates(
    const ImageBuffer& masked, const BinaryMask& mask, int k,
    std::uint64_t seed) const {
    if (k < 1) throw InputError("generate_candidates: k must be >= 1");
    if (mask.height != masked.height || mask.width != masked.width)
        throw ShapeError("generate_candidates: mask/image dimension mismatch");
    if (masked.height != cfg_.image_size || masked.width != cfg_.image_size)
        throw ShapeError("generate_candidates: input must match the model image size");
    if (masked.channels != 3)
        throw ShapeError("generate_candidates: expected a 3-channel image");
    if (mask.popcount() == mask.data.size())
        log_warning("mask hides every pixel; completing from the latent prior alone");

    // 4-channel conditioning input
    Tensor x4({1, 4, masked.height, masked.width});
    const std::size_t plane = masked.pixel_count();
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < masked.height; ++y)
            for (int x = 0; x < masked.width; ++x)
                x4.data[static_cast<std::size_t>(c) * plane +
                        static_cast<std::size_t>(y) * masked.width + x] =
                    masked.at(y, x, c);
    for (std::size_t p = 0; p < plane; ++p)
        x4.data[3 * plane + p] = static_cast<float>(mask.data[p]);

    // one seeded latent stream; candidate i consumes draw i. The context
    // encoding is shared across draws.
    nn::Rng latent_rng(mix_seed(seed, 0x1a7e47ULL));
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    const Tensor features = gen_.encode_features(x4);

    std::vector<InpaintCandidate> candidates;
    candidates.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        Tensor z({1, cfg_.latent_dim});
        for (float& v : z.data) v = gauss(latent_rng);
        const Tensor raw = gen_.decode_with_latent(features, z);
        const ImageBuffer generated = nn::tensor_to_image(raw);
        InpaintCandidate cand;
        cand.image = imaging::composite(masked, generated, mask);
        cand.score = disc_.score(nn::image_to_tensor(cand.image));
        cand.latent_seed = i;
        candidates.push_back(std::move(cand));
    }
    return candidates;
}

ImageBuffer InpainterModel::inpaint(const ImageBuffer& masked, const BinaryMask& mask,
                                    int k, std::uint64_t seed) const {
    const auto candidates = generate_candidates(masked, mask, k, seed);
    return select_best(candidates).image;
}

nn::ParamRefs InpainterModel::all_params() {
    nn::ParamRefs refs = gen_.params();
    const nn::ParamRefs d = disc_.params();
    refs.insert(refs.end(), d.begin(), d.end());
    return refs;
}

std::uint64_t InpainterModel::save(const std::string& path) const {
    nn::CheckpointWriter writer(kCheckpointMagic);
    writer.set_config_json(cfg_.to_json());
    writer.add_params(const_cast<InpainterModel*>(this)->all_params());
    return writer.write(path);
}

InpainterModel InpainterModel::load(const std::string& path) {
    const auto reader = nn::CheckpointReader::open(path, kCheckpointMagic);
    InpainterModel model(InpaintConfig::from_json(reader.config_json()));
    reader.restore_params(model.all_params());
    return model;
}

// ------------------------------------------------------------------ training

struct TrainAccess {
    static Generator& gen(InpainterModel& m) { return m.gen_; }
    static Discriminator& disc(InpainterModel& m) { return m.disc_; }
};

namespace {

struct PreparedSample {
    Tensor x4;      // (1,4,R,R) masked image + mask channel
    Tensor real;    // (1,3,R,R) ground truth
    Tensor mask;    // (1,1,R,R)
    Tensor masked;  // (1,3,R,R)
};

PreparedSample prepare(const MaskedPair& pair, int size) {
    if (!pair.ground_truth)
        throw DataError("inpainter training sample is missing ground truth");
    PreparedSample s;
    const ImageBuffer masked = imaging::resize_bilinear(pair.masked_image, size, size);
    const ImageBuffer gt = imaging::resize_bilinear(*pair.ground_truth, size, size);
    const BinaryMask mask = imaging::resize_mask_nearest(pair.mask, size, size);

    s.masked = nn::image_to_tensor(masked);
    s.real = nn::image_to_tensor(gt);
    s.mask = Tensor({1, 1, size, size});
    for (std::size_t p = 0; p < mask.data.size(); ++p)
        s.mask.data[p] = static_cast<float>(mask.data[p]);
    s.x4 = Tensor({1, 4, size, size});
    std::copy(s.masked.data.begin(), s.masked.data.end(), s.x4.data.begin());
    std::copy(s.mask.data.begin(), s.mask.data.end(),
              s.x4.data.begin() + static_cast<std::size_t>(3) * size * size);
    return s;
}

Tensor stack(const std::vector<const Tensor*>& parts) {
    const auto& first = *parts.front();
    std::vector<int> shape = first.shape;
    shape[0] = static_cast<int>(parts.size());
    Tensor out(shape);
    const std::size_t stride = first.data.size();
    for (std::size_t i = 0; i < parts.size(); ++i)
        std::copy(parts[i]->data.begin(), parts[i]->data.end(),
                  out.data.begin() + i * stride);
    return out;
}

// composited = masked*(1-m) + out*m, broadcast over channels
Tensor composite_tensor(const Tensor& masked, const Tensor& out, const Tensor& mask) {
    Tensor res = masked;
    const int b = out.dim(0), ch = out.dim(1);
    const std::size_t plane = static_cast<std::size_t>(out.dim(2)) * out.dim(3);
    for (int i = 0; i < b; ++i)
        for (int c = 0; c < ch; ++c)
            for (std::size_t p = 0; p < plane; ++p) {
                const std::size_t idx = (static_cast<std::size_t>(i) * ch + c) * plane + p;
                if (mask.data[static_cast<std::size_t>(i) * plane + p] > 0.5f)
                    res.data[idx] = out.data[idx];
            }
    return res;
}

}  // namespace

InpaintTrainStats train_inpainter(InpainterModel& model,
                                  const std::vector<MaskedPair>& data) {
    if (data.empty()) throw DataError("inpainter training set is empty");
    const InpaintConfig& cfg = model.config();

    std::vector<PreparedSample> samples;
    samples.reserve(data.size());
    for (const auto& pair : data) samples.push_back(prepare(pair, cfg.image_size));

    Generator& gen = TrainAccess::gen(model);
    Discriminator& disc = TrainAccess::disc(model);
    nn::Adam g_opt = nn::make_optimizer(cfg.optimizer, gen.params(), cfg.learning_rate);
    nn::Adam d_opt = nn::make_optimizer(cfg.optimizer, disc.params(), cfg.learning_rate);

    InpaintTrainStats stats;
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        nn::Rng shuffle_rng(mix_seed(cfg.seed, 5000 + static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        nn::Rng eps_rng(mix_seed(cfg.seed, 6000 + static_cast<std::uint64_t>(epoch)));

        double epoch_g = 0.0, epoch_d = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const int b = static_cast<int>(end - start);

            std::vector<const Tensor*> x4s, reals, masks, maskeds;
            for (std::size_t k = start; k < end; ++k) {
                x4s.push_back(&samples[order[k]].x4);
                reals.push_back(&samples[order[k]].real);
                masks.push_back(&samples[order[k]].mask);
                maskeds.push_back(&samples[order[k]].masked);
            }
            const Tensor x4 = stack(x4s);
            const Tensor real = stack(reals);
            const Tensor mask = stack(masks);
            const Tensor masked = stack(maskeds);

            // generator forward + composite
            auto fw = gen.forward_train(x4, eps_rng);
            const Tensor fake = composite_tensor(masked, fw.output, mask);

            // --- discriminator update (hinge loss, fake detached) ---
            d_opt.zero_grad();
            {
                const Tensor s_real = disc.forward(real, true);
                Tensor ds(s_real.shape);
                double loss_real = 0.0;
                for (int i = 0; i < b; ++i) {
                    const float s = s_real.data[static_cast<std::size_t>(i)];
                    loss_real += std::max(0.0f, 1.0f - s);
                    ds.data[static_cast<std::size_t>(i)] =
                        s < 1.0f ? -1.0f / static_cast<float>(b) : 0.0f;
                }
                disc.backward(ds);

                const Tensor s_fake = disc.forward(fake, true);
                Tensor dsf(s_fake.shape);
                double loss_fake = 0.0;
                for (int i = 0; i < b; ++i) {
                    const float s = s_fake.data[static_cast<std::size_t>(i)];
                    loss_fake += std::max(0.0f, 1.0f + s);
                    dsf.data[static_cast<std::size_t>(i)] =
                        s > -1.0f ? 1.0f / static_cast<float>(b) : 0.0f;
                }
                disc.backward(dsf);
                d_opt.step();
                epoch_d += (loss_real + loss_fake) / b;
            }

            // --- generator update ---
            g_opt.zero_grad();
            {
                const Tensor s_fake = disc.forward(fake, true);
                Tensor ds(s_fake.shape);
                double adv = 0.0;
                for (int i = 0; i < b; ++i) {
                    adv -= s_fake.data[static_cast<std::size_t>(i)];
                    ds.data[static_cast<std::size_t>(i)] =
                        -cfg.w_adv / static_cast<float>(b);
                }
                adv = cfg.w_adv * adv / b;
                // discriminator gradients from this pass are discarded at the
                // next d_opt.zero_grad()
                const Tensor dfake = disc.backward(ds);

                // compositing passes gradient through only inside the mask
                Tensor dout(fw.output.shape);
                const int ch = fw.output.dim(1);
                const std::size_t plane =
                    static_cast<std::size_t>(fw.output.dim(2)) * fw.output.dim(3);
                const float inv_n = 1.0f / static_cast<float>(fw.output.numel());
                double recon = 0.0;
                for (int i = 0; i < b; ++i)
                    for (int c = 0; c < ch; ++c)
                        for (std::size_t p = 0; p < plane; ++p) {
                            const std::size_t idx =
                                (static_cast<std::size_t>(i) * ch + c) * plane + p;
                            const bool inside =
                                mask.data[static_cast<std::size_t>(i) * plane + p] > 0.5f;
                            const float diff = fw.output.data[idx] - real.data[idx];
                            recon += std::abs(diff);
                            // L1 gradient over both regions plus the masked
                            // adversarial path
                            float g = cfg.w_recon * inv_n *
                                      (diff > 0.0f ? 1.0f : (diff < 0.0f ? -1.0f : 0.0f));
                            if (inside) g += dfake.data[idx];
                            dout.data[idx] = g;
                        }
                recon = cfg.w_recon * recon * inv_n;

                // KL(q || N(0,1)) gradients
                Tensor dmu(fw.mu.shape);
                Tensor dlv(fw.logvar.shape);
                double kl = 0.0;
                for (std::size_t k = 0; k < fw.mu.data.size(); ++k) {
                    const float mu = fw.mu.data[k];
                    const float lv = fw.logvar.data[k];
                    kl += 0.5 * (mu * mu + std::exp(lv) - lv - 1.0);
                    dmu.data[k] = cfg.w_kl * mu / static_cast<float>(b);
                    dlv.data[k] =
                        cfg.w_kl * 0.5f * (std::exp(lv) - 1.0f) / static_cast<float>(b);
                }
                kl = cfg.w_kl * kl / b;

                gen.backward(dout, dmu, dlv);
                g_opt.step();
                epoch_g += recon + adv + kl;
            }
            ++batches;
        }
        stats.gen_loss.push_back(epoch_g / static_cast<double>(batches));
        stats.disc_loss.push_back(epoch_d / static_cast<double>(batches));
    }
    return stats;
}

}  // namespace himfr::inpaint
