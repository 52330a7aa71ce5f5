#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <numeric>

#include "himfr/recognizer.hpp"
#include "support/oracles.hpp"
#include "support/toy_faces.hpp"

using namespace himfr;
using namespace himfr::recog;
using nn::Tensor;
namespace ts = himfr::testsupport;

namespace {

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    for (float& v : t.data) v = d(rng);
    return t;
}

RecognizerConfig small_config(std::uint64_t seed = 5) {
    RecognizerConfig cfg;
    cfg.backbone_spec = "toy:8";  // 32 feature channels
    cfg.input_size = 64;          // 4x4 feature map -> 9 tokens
    cfg.proj_dim = 32;
    cfg.heads = 8;
    cfg.transformer_layers = 2;
    cfg.epochs = 2;
    cfg.seed = seed;
    cfg.class_names = {"a", "b", "c"};
    return cfg;
}

}  // namespace

TEST_CASE("patch counts follow the sliding-window formula") {
    CHECK(patch_count(14, 14, 2, 1) == 169);
    CHECK(patch_count(8, 8, 8, 3) == 1);  // degenerate: one whole-map patch
    CHECK_THROWS_AS(patch_count(14, 14, 3, 2), InputError);  // (14-3) % 2 != 0
    CHECK_THROWS_AS(patch_count(4, 4, 5, 1), InputError);
}

TEST_CASE("token count matches the brute-force window enumerator") {
    Rng rng(3);
    std::uniform_int_distribution<int> dim(4, 30);
    int checked = 0;
    while (checked < 50) {
        const int h = dim(rng), w = dim(rng);
        std::uniform_int_distribution<int> pd(1, std::min(h, w));
        const int p = pd(rng);
        std::vector<int> strides;
        for (int s = 1; s <= std::max(1, std::max(h, w)); ++s)
            if ((h - p) % s == 0 && (w - p) % s == 0) strides.push_back(s);
        std::uniform_int_distribution<std::size_t> sd(0, strides.size() - 1);
        const int s = strides[sd(rng)];
        REQUIRE(patch_count(h, w, p, s) == ts::window_count_oracle(h, w, p, s));
        ++checked;
    }
}

TEST_CASE("make_patches slides row-major with channel-last flattening") {
    const Tensor features = random_tensor({2, 3, 6, 6}, 4);
    const int P = 3, S = 1;
    const Tensor patches = make_patches(features, P, S);
    const int cols = (6 - P) / S + 1;
    REQUIRE(patches.shape == std::vector<int>{2, 16, P * P * 3});
    for (int b = 0; b < 2; ++b)
        for (int py = 0; py < cols; ++py)
            for (int px = 0; px < cols; ++px)
                for (int dy = 0; dy < P; ++dy)
                    for (int dx = 0; dx < P; ++dx)
                        for (int c = 0; c < 3; ++c) {
                            const float expected =
                                features.data[((static_cast<std::size_t>(b) * 3 + c) * 6 +
                                               py * S + dy) * 6 + px * S + dx];
                            const float got =
                                patches.data[(static_cast<std::size_t>(b) * 16 +
                                              py * cols + px) * 27 +
                                             (dy * P + dx) * 3 + c];
                            REQUIRE(got == expected);
                        }
}

TEST_CASE("overlapping patches share their overlap element-wise") {
    const Tensor features = random_tensor({1, 2, 5, 5}, 6);
    const Tensor patches = make_patches(features, 2, 1);  // stride < patch
    const int cols = 4, len = 2 * 2 * 2;
    // adjacent horizontal patches: right column of n equals left column of n+1
    for (int py = 0; py < 4; ++py)
        for (int px = 0; px + 1 < cols; ++px)
            for (int dy = 0; dy < 2; ++dy)
                for (int c = 0; c < 2; ++c) {
                    const float right =
                        patches.data[static_cast<std::size_t>(py * cols + px) * len +
                                     (dy * 2 + 1) * 2 + c];
                    const float left_of_next =
                        patches.data[static_cast<std::size_t>(py * cols + px + 1) * len +
                                     (dy * 2 + 0) * 2 + c];
                    REQUIRE(right == left_of_next);
                }
}

TEST_CASE("whole-map patch equals the flattened map") {
    const Tensor features = random_tensor({1, 2, 4, 4}, 7);
    const Tensor patches = make_patches(features, 4, 1);
    REQUIRE(patches.shape == std::vector<int>{1, 1, 32});
    for (int dy = 0; dy < 4; ++dy)
        for (int dx = 0; dx < 4; ++dx)
            for (int c = 0; c < 2; ++c)
                REQUIRE(patches.data[static_cast<std::size_t>(dy * 4 + dx) * 2 + c] ==
                        features.data[(static_cast<std::size_t>(c) * 4 + dy) * 4 + dx]);
}

TEST_CASE("encode_patches implements class token, projection, and position add") {
    const int N = 4, L = 4, D = 4;
    Tensor patches = random_tensor({1, N, L}, 8);
    Tensor identity({L, D});
    for (int i = 0; i < L; ++i) identity.data[static_cast<std::size_t>(i) * D + i] = 1.0f;
    const Tensor zero_pos({N + 1, D});
    const Tensor zero_cls({D});

    const Tensor z0 = encode_patches(patches, identity, zero_pos, zero_cls);
    REQUIRE(z0.shape == std::vector<int>{1, N + 1, D});
    for (int j = 0; j < D; ++j) REQUIRE(z0.data[static_cast<std::size_t>(j)] == 0.0f);
    for (int n = 0; n < N; ++n)
        for (int j = 0; j < D; ++j)
            REQUIRE(z0.data[static_cast<std::size_t>(n + 1) * D + j] ==
                    patches.data[static_cast<std::size_t>(n) * L + j]);

    // position embedding lands on every row including the class token
    Tensor pos({N + 1, D});
    for (std::size_t i = 0; i < pos.data.size(); ++i)
        pos.data[i] = static_cast<float>(i) * 0.01f;
    const Tensor z1 = encode_patches(patches, identity, pos, zero_cls);
    for (std::size_t i = 0; i < z1.data.size(); ++i)
        REQUIRE(z1.data[i] == doctest::Approx(z0.data[i] + pos.data[i]).epsilon(1e-6));

    CHECK_THROWS_AS(encode_patches(patches, Tensor({L + 1, D}), zero_pos, zero_cls),
                    ShapeError);
    CHECK_THROWS_AS(encode_patches(patches, identity, Tensor({N, D}), zero_cls),
                    ShapeError);
    CHECK_THROWS_AS(encode_patches(patches, identity, zero_pos, Tensor({D + 2})),
                    ShapeError);
}

TEST_CASE("expected token grid for the full-scale configuration") {
    // 169 patches from a 14x14 map at patch 2 / stride 1, plus the class slot
    const Tensor features = random_tensor({1, 64, 14, 14}, 9);
    const Tensor patches = make_patches(features, 2, 1);
    REQUIRE(patches.shape == std::vector<int>{1, 169, 256});
    Rng rng(10);
    Tensor proj({256, 64});
    nn::init_xavier_uniform(proj.data, rng, 256, 64);
    Tensor pos({170, 64});
    nn::init_normal(pos.data, rng, 0.02f);
    Tensor cls({64});
    const Tensor z0 = encode_patches(patches, proj, pos, cls);
    CHECK(z0.shape == std::vector<int>{1, 170, 64});
}

TEST_CASE("attention rows are probability distributions") {
    Rng rng(11);
    EncoderBlock block("blk", 32, 8, rng);
    block.attention.capture_attention(true);
    const Tensor z = random_tensor({2, 6, 32}, 12);
    block.forward(z, false);
    const Tensor& att = block.attention.last_attention();
    REQUIRE(att.shape == std::vector<int>{2, 8, 6, 6});
    for (std::size_t row = 0; row < att.data.size() / 6; ++row) {
        double sum = 0.0;
        for (int j = 0; j < 6; ++j) {
            const float v = att.data[row * 6 + j];
            REQUIRE(v >= 0.0f);
            sum += v;
        }
        REQUIRE(std::abs(sum - 1.0) <= 1e-6);
    }
}

TEST_CASE("zeroed output projections make a block the identity") {
    Rng rng(13);
    EncoderBlock block("blk", 16, 4, rng);
    std::fill(block.attention.proj.weight.value.begin(),
              block.attention.proj.weight.value.end(), 0.0f);
    std::fill(block.attention.proj.bias.value.begin(),
              block.attention.proj.bias.value.end(), 0.0f);
    std::fill(block.mlp2.weight.value.begin(), block.mlp2.weight.value.end(), 0.0f);
    std::fill(block.mlp2.bias.value.begin(), block.mlp2.bias.value.end(), 0.0f);

    const Tensor z = random_tensor({1, 5, 16}, 14);
    const Tensor out = block.forward(z, false);
    CHECK(out.data == z.data);
}

TEST_CASE("the empty encoder stack is the identity (linear probe shape)") {
    const Tensor z0 = random_tensor({1, 5, 16}, 15);
    const Tensor out = transformer_encode(z0, {});
    CHECK(out.data == z0.data);
}

TEST_CASE("class-token output is invariant to joint patch/position permutation") {
    const int N = 9, L = 12, D = 16;
    const Tensor patches = random_tensor({1, N, L}, 16);
    Rng rng(17);
    Tensor proj({L, D});
    nn::init_xavier_uniform(proj.data, rng, L, D);
    Tensor pos({N + 1, D});
    nn::init_normal(pos.data, rng, 0.5f);
    Tensor cls({D});
    nn::init_normal(cls.data, rng, 0.5f);

    std::vector<std::unique_ptr<EncoderBlock>> owned;
    std::vector<EncoderBlock*> blocks;
    for (int l = 0; l < 2; ++l) {
        owned.push_back(std::make_unique<EncoderBlock>("b" + std::to_string(l), D, 4, rng));
        blocks.push_back(owned.back().get());
    }

    const Tensor base = transformer_encode(encode_patches(patches, proj, pos, cls), blocks);

    std::vector<int> perm(N);
    std::iota(perm.begin(), perm.end(), 0);
    Rng prng(18);
    std::shuffle(perm.begin(), perm.end(), prng);

    Tensor patches_p(patches.shape);
    Tensor pos_p = pos;
    for (int n = 0; n < N; ++n) {
        std::copy_n(patches.data.begin() + static_cast<std::size_t>(perm[n]) * L, L,
                    patches_p.data.begin() + static_cast<std::size_t>(n) * L);
        std::copy_n(pos.data.begin() + static_cast<std::size_t>(perm[n] + 1) * D, D,
                    pos_p.data.begin() + static_cast<std::size_t>(n + 1) * D);
    }
    const Tensor permuted =
        transformer_encode(encode_patches(patches_p, proj, pos_p, cls), blocks);

    for (int j = 0; j < D; ++j)
        REQUIRE(std::abs(base.data[static_cast<std::size_t>(j)] -
                         permuted.data[static_cast<std::size_t>(j)]) <= 1e-5f);
}

TEST_CASE("model constructor validates its configuration") {
    RecognizerConfig cfg = small_config();
    cfg.heads = 7;  // does not divide 32
    CHECK_THROWS_AS(RecognizerModel{cfg}, InputError);
    cfg = small_config();
    cfg.class_names = {"only"};
    CHECK_THROWS_AS(RecognizerModel{cfg}, InputError);
    cfg = small_config();
    cfg.transformer_layers = 0;
    CHECK_THROWS_AS(RecognizerModel{cfg}, InputError);
}

TEST_CASE("classify returns a softmax distribution deterministically") {
    const RecognizerModel model(small_config());
    const auto img = ts::toy_face(64, 0, 1);
    const auto p = model.classify(img);
    REQUIRE(p.size() == 3);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-6);
    CHECK(model.classify(img) == p);
    CHECK(model.token_count() == 9);
}

namespace {

// mean cross-entropy of the model's own probabilities, inference mode
double eval_ce(const RecognizerModel& model, const std::vector<LabeledImage>& data) {
    double loss = 0.0;
    for (const auto& s : data) {
        const auto probs = model.classify(s.image);
        loss += -std::log(probs[static_cast<std::size_t>(s.label)] + 1e-12);
    }
    return loss / static_cast<double>(data.size());
}

}  // namespace

TEST_CASE("one training epoch lowers the loss; the backbone stays frozen") {
    RecognizerConfig cfg = small_config(21);
    cfg.epochs = 1;
    cfg.augment = false;
    RecognizerModel model(cfg);

    std::vector<LabeledImage> data;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 4; ++i)
            data.push_back({ts::toy_face(64, c, static_cast<std::uint64_t>(10 * c + i)), c});

    const double initial_loss = eval_ce(model, data);
    const std::uint64_t backbone_before = model.backbone().params_hash();
    const auto history = train_recognizer(model, data);
    REQUIRE(history.size() == 1);
    CHECK(eval_ce(model, data) < initial_loss);
    CHECK(model.backbone().params_hash() == backbone_before);
}

TEST_CASE("training validates labels") {
    RecognizerModel model(small_config());
    std::vector<LabeledImage> bad = {{ts::toy_face(64, 0, 1), 3}};
    CHECK_THROWS_AS(train_recognizer(model, bad), DataError);
    std::vector<LabeledImage> empty;
    CHECK_THROWS_AS(train_recognizer(model, empty), DataError);
}

TEST_CASE("evaluation produces the per-class report plus one curve per class") {
    RecognizerConfig cfg = small_config(22);
    cfg.epochs = 2;
    RecognizerModel model(cfg);
    std::vector<LabeledImage> data;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 3; ++i)
            data.push_back({ts::toy_face(64, c, static_cast<std::uint64_t>(20 * c + i)), c});
    train_recognizer(model, data);

    const auto eval = evaluate_recognizer(model, data);
    REQUIRE(eval.predictions.size() == data.size());
    REQUIRE(eval.roc.size() == 3);
    const std::string csv = eval.report.to_csv();
    CHECK(csv.find("precision,0,") != std::string::npos);
    CHECK(csv.find("accuracy,all,") != std::string::npos);
    CHECK(csv.find("f1,weighted,") != std::string::npos);
    // parseable by the module's own reader
    CHECK_NOTHROW(metrics::MetricReport::from_csv(csv));
}

TEST_CASE("checkpoints embed class names and round-trip predictions bit-exact") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "himfr_rec_ckpt";
    fs::create_directories(dir);
    const std::string path = (dir / "rec.ckpt").string();

    RecognizerConfig cfg = small_config(23);
    cfg.class_names = {"alice", "bob", "carol"};
    RecognizerModel model(cfg);
    model.save(path);

    const RecognizerModel back = RecognizerModel::load(path);
    CHECK(back.config().class_names == cfg.class_names);
    const auto img = ts::toy_face(64, 1, 9);
    CHECK(back.classify(img) == model.classify(img));
    fs::remove_all(dir);
}
