#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

#include "himfr/nn/backbone.hpp"
#include "himfr/nn/checkpoint.hpp"
#include "himfr/nn/layers.hpp"
#include "himfr/nn/optim.hpp"
#include "himfr/recognizer.hpp"

using namespace himfr;
using namespace himfr::nn;

namespace {

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed, float lo = -1.0f,
                     float hi = 1.0f) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    std::uniform_real_distribution<float> d(lo, hi);
    for (float& v : t.data) v = d(rng);
    return t;
}

double weighted_sum(const Tensor& out, const Tensor& weights) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        s += static_cast<double>(out.data[i]) * weights.data[i];
    return s;
}

// Central-difference gradient check of dLoss/dx and all parameter grads,
// loss = sum(out * R). Returns the worst relative error.
double gradient_check(Layer& layer, const Tensor& x0, std::uint64_t seed) {
    Tensor x = x0;
    const Tensor probe_out = layer.forward(x, true);
    const Tensor r = random_tensor(probe_out.shape, seed + 1);

    ParamRefs params;
    layer.collect_params(params);
    for (Param* p : params) p->zero_grad();

    const Tensor out = layer.forward(x, true);
    Tensor grad_out(out.shape);
    grad_out.data = r.data;
    const Tensor dx = layer.backward(grad_out);

    std::vector<std::vector<float>> analytic_param_grads;
    for (Param* p : params) analytic_param_grads.push_back(p->grad);

    const float eps = 1e-2f;
    double worst = 0.0;
    auto compare = [&](double analytic, double numeric) {
        const double err = std::abs(analytic - numeric) /
                           std::max(1.0, std::abs(analytic) + std::abs(numeric));
        worst = std::max(worst, err);
    };

    for (std::size_t i = 0; i < x.data.size(); i += std::max<std::size_t>(1, x.data.size() / 48)) {
        const float keep = x.data[i];
        x.data[i] = keep + eps;
        const double up = weighted_sum(layer.forward(x, true), r);
        x.data[i] = keep - eps;
        const double dn = weighted_sum(layer.forward(x, true), r);
        x.data[i] = keep;
        compare(dx.data[i], (up - dn) / (2.0 * eps));
    }

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        if (!params[pi]->trainable) continue;
        auto& value = params[pi]->value;
        for (std::size_t i = 0; i < value.size();
             i += std::max<std::size_t>(1, value.size() / 32)) {
            const float keep = value[i];
            value[i] = keep + eps;
            const double up = weighted_sum(layer.forward(x, true), r);
            value[i] = keep - eps;
            const double dn = weighted_sum(layer.forward(x, true), r);
            value[i] = keep;
            compare(analytic_param_grads[pi][i], (up - dn) / (2.0 * eps));
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("dense gradients match finite differences") {
    Rng rng(1);
    Dense layer("fc", 5, 4, rng);
    CHECK(gradient_check(layer, random_tensor({3, 5}, 2), 3) < 3e-2);
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(4);
    Conv2d layer("conv", 2, 3, 3, 2, 1, rng);
    CHECK(gradient_check(layer, random_tensor({2, 2, 7, 7}, 5), 6) < 3e-2);
}

TEST_CASE("batchnorm gradients match finite differences") {
    BatchNorm feature("bnf", 6, BatchNorm::Mode::feature);
    CHECK(gradient_check(feature, random_tensor({5, 6}, 7), 8) < 3e-2);
    BatchNorm spatial("bns", 3, BatchNorm::Mode::spatial);
    CHECK(gradient_check(spatial, random_tensor({2, 3, 4, 4}, 9), 10) < 3e-2);
}

TEST_CASE("layernorm gradients match finite differences") {
    LayerNorm layer("ln", 8);
    CHECK(gradient_check(layer, random_tensor({2, 3, 8}, 11), 12) < 3e-2);
}

TEST_CASE("activation gradients match finite differences") {
    // keep inputs away from the relu/leaky kink at 0
    Tensor x = random_tensor({2, 12}, 13);
    for (float& v : x.data) v += v >= 0.0f ? 0.3f : -0.3f;
    ReLU relu;
    CHECK(gradient_check(relu, x, 14) < 3e-2);
    LeakyReLU leaky(0.2f);
    CHECK(gradient_check(leaky, x, 15) < 3e-2);
    Sigmoid sigmoid;
    CHECK(gradient_check(sigmoid, random_tensor({2, 12}, 16), 17) < 3e-2);
    Gelu gelu;
    CHECK(gradient_check(gelu, random_tensor({2, 12}, 18), 19) < 3e-2);
}

TEST_CASE("upsample gradients match finite differences") {
    Upsample2x up;
    CHECK(gradient_check(up, random_tensor({1, 2, 3, 3}, 20), 21) < 3e-2);
}

TEST_CASE("attention gradients match finite differences") {
    Rng rng(22);
    MultiHeadSelfAttention layer("msa", 8, 2, rng);
    CHECK(gradient_check(layer, random_tensor({2, 5, 8}, 23), 24) < 3e-2);
}

TEST_CASE("encoder block gradients match finite differences") {
    Rng rng(25);
    recog::EncoderBlock block("blk", 8, 2, rng);
    CHECK(gradient_check(block, random_tensor({1, 4, 8}, 26), 27) < 3e-2);
}

TEST_CASE("softmax rows sum to one and shift invariance holds") {
    const Tensor logits = random_tensor({7, 5}, 28, -3.0f, 3.0f);
    const Tensor p = softmax_rows(logits);
    for (int r = 0; r < 7; ++r) {
        double sum = 0.0;
        for (int k = 0; k < 5; ++k) sum += p.data[static_cast<std::size_t>(r) * 5 + k];
        REQUIRE(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
    Tensor shifted = logits;
    for (float& v : shifted.data) v += 11.5f;
    const Tensor q = softmax_rows(shifted);
    for (std::size_t i = 0; i < p.data.size(); ++i)
        REQUIRE(std::abs(p.data[i] - q.data[i]) <= 1e-6f);
}

TEST_CASE("batch cross-entropy equals the per-sample mean") {
    const Tensor logits = random_tensor({6, 4}, 29, -2.0f, 2.0f);
    const std::vector<int> labels = {0, 2, 1, 3, 3, 0};
    const auto batch = softmax_cross_entropy(logits, labels);

    double mean = 0.0;
    for (int i = 0; i < 6; ++i) {
        Tensor row({1, 4});
        std::copy_n(logits.data.begin() + static_cast<std::size_t>(i) * 4, 4,
                    row.data.begin());
        mean += softmax_cross_entropy(row, {labels[static_cast<std::size_t>(i)]}).loss;
    }
    mean /= 6.0;
    CHECK(std::abs(batch.loss - mean) <= 1e-12);
}

TEST_CASE("cross-entropy gradient matches finite differences") {
    Tensor logits = random_tensor({3, 4}, 30, -1.5f, 1.5f);
    const std::vector<int> labels = {1, 0, 3};
    const auto res = softmax_cross_entropy(logits, labels);
    const float eps = 1e-3f;
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        const float keep = logits.data[i];
        logits.data[i] = keep + eps;
        const double up = softmax_cross_entropy(logits, labels).loss;
        logits.data[i] = keep - eps;
        const double dn = softmax_cross_entropy(logits, labels).loss;
        logits.data[i] = keep;
        const double numeric = (up - dn) / (2.0 * eps);
        REQUIRE(std::abs(res.grad_logits.data[i] - numeric) <= 2e-3);
    }
}

TEST_CASE("standalone cross-entropy hand cases") {
    CHECK(std::abs(cross_entropy({1, 0}, {0.5, 0.5}) - std::log(2.0)) <= 1e-9);
    CHECK(std::abs(cross_entropy({1, 0}, {1.0, 0.0})) <= 1e-9);
    CHECK(cross_entropy({0, 1}, {0.9, 0.1}) > 0.0);

    CHECK_THROWS_AS(cross_entropy({1, 0}, {0.5}), InputError);
    CHECK_THROWS_AS(cross_entropy({0.5, 0.5}, {0.5, 0.5}), InputError);  // not one-hot
    CHECK_THROWS_AS(cross_entropy({1, 0}, {0.7, 0.7}), InputError);      // not a distribution
    CHECK_THROWS_AS(cross_entropy({1, 0}, {-0.1, 1.1}), InputError);
}

TEST_CASE("cross-entropy is non-negative on random distributions") {
    Rng rng(31);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    std::uniform_int_distribution<int> len(2, 6);
    for (int t = 0; t < 200; ++t) {
        const int n = len(rng);
        std::vector<double> p(static_cast<std::size_t>(n));
        double sum = 0.0;
        for (double& v : p) sum += (v = d(rng) + 1e-6);
        for (double& v : p) v /= sum;
        std::vector<double> truth(static_cast<std::size_t>(n), 0.0);
        truth[static_cast<std::size_t>(t) % n] = 1.0;
        REQUIRE(cross_entropy(truth, p) >= 0.0);
    }
}

namespace {

// Reference optimizer trace computed straight from the update equations.
std::vector<double> reference_adam(double lr, bool rectified, double grad, int steps) {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
    double w = 1.0, m = 0.0, v = 0.0;
    std::vector<double> trace;
    for (int t = 1; t <= steps; ++t) {
        m = b1 * m + (1 - b1) * grad;
        v = b2 * v + (1 - b2) * grad * grad;
        const double mhat = m / (1.0 - std::pow(b1, t));
        const double rho_t =
            rho_inf - 2.0 * t * std::pow(b2, t) / (1.0 - std::pow(b2, t));
        if (!rectified) {
            const double vhat = std::sqrt(v / (1.0 - std::pow(b2, t)));
            w -= lr * mhat / (vhat + eps);
        } else if (rho_t > 4.0) {
            const double rect = std::sqrt(((rho_t - 4) * (rho_t - 2) * rho_inf) /
                                          ((rho_inf - 4) * (rho_inf - 2) * rho_t));
            const double vhat = std::sqrt(v / (1.0 - std::pow(b2, t)));
            w -= lr * rect * mhat / (vhat + eps);
        } else {
            w -= lr * mhat;
        }
        trace.push_back(w);
    }
    return trace;
}

}  // namespace

TEST_CASE("adam and rectified adam follow their update schedules") {
    for (const bool rectified : {false, true}) {
        Param p("w", {1});
        p.value[0] = 1.0f;
        Adam opt({&p}, 0.1f, rectified);
        const auto ref = reference_adam(0.1, rectified, 0.5, 10);
        for (int t = 0; t < 10; ++t) {
            p.grad[0] = 0.5f;
            opt.step();
            REQUIRE(p.value[0] == doctest::Approx(ref[static_cast<std::size_t>(t)])
                                      .epsilon(1e-5));
        }
    }
    // the rectified variant skips variance adaptation on the first step
    const auto plain = reference_adam(0.1, false, 0.5, 1);
    const auto rect = reference_adam(0.1, true, 0.5, 1);
    CHECK(std::abs(plain[0] - 0.9) < 1e-6);   // ~ lr * sign step
    CHECK(std::abs(rect[0] - 0.95) < 1e-9);   // lr * mhat = 0.1 * 0.5
}

TEST_CASE("optimizer only touches trainable params") {
    Param weight("w", {2});
    Param stat("s", {2}, false);
    weight.value = {1.0f, 1.0f};
    stat.value = {5.0f, 5.0f};
    weight.grad = {1.0f, 1.0f};
    stat.grad = {1.0f, 1.0f};
    Adam opt({&weight, &stat}, 0.1f);
    opt.step();
    CHECK(stat.value[0] == 5.0f);
    CHECK(weight.value[0] < 1.0f);
}

TEST_CASE("seeded initialization is reproducible") {
    Rng r1(77), r2(77), r3(78);
    Dense a("fc", 8, 8, r1), b("fc", 8, 8, r2), c("fc", 8, 8, r3);
    CHECK(a.weight.value == b.weight.value);
    CHECK(a.weight.value != c.weight.value);
}

TEST_CASE("checkpoints round-trip and reject corruption") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "himfr_ckpt_test";
    fs::create_directories(dir);
    const std::string path = (dir / "m.ckpt").string();

    CheckpointWriter writer("HIMFR-DET v1");
    writer.set_config_json("{\"k\":1}");
    const std::vector<float> payload = {1.5f, -2.0f, 3.25f};
    writer.add_blob("layer.weight", {3}, payload);
    const std::uint64_t hash = writer.write(path);

    const auto reader = CheckpointReader::open(path, "HIMFR-DET v1");
    CHECK(reader.config_json() == "{\"k\":1}");
    CHECK(reader.content_hash() == hash);
    CHECK(reader.blob("layer.weight").data == payload);
    CHECK_THROWS_AS(reader.blob("nope"), CheckpointError);

    // wrong stage
    CHECK_THROWS_AS(CheckpointReader::open(path, "HIMFR-REC v1"), CheckpointError);
    // missing file
    CHECK_THROWS_AS(CheckpointReader::open((dir / "missing").string(), "HIMFR-DET v1"),
                    CheckpointError);

    // truncation
    {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        std::ofstream out((dir / "trunc.ckpt").string(), std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 7));
    }
    CHECK_THROWS_AS(CheckpointReader::open((dir / "trunc.ckpt").string(), "HIMFR-DET v1"),
                    CheckpointError);

    // bit flip in the payload trips the hash
    {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
        std::ofstream out((dir / "flip.ckpt").string(), std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(CheckpointReader::open((dir / "flip.ckpt").string(), "HIMFR-DET v1"),
                    CheckpointError);
    fs::remove_all(dir);
}

TEST_CASE("image/tensor adapters round-trip planar layout") {
    imaging::ImageBuffer img(5, 7, 3);
    Rng rng(61);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    for (float& v : img.data) v = d(rng);

    const Tensor t = image_to_tensor(img);
    REQUIRE(t.shape == std::vector<int>{1, 3, 5, 7});
    CHECK(t.data[0] == img.at(0, 0, 0));
    CHECK(t.data[static_cast<std::size_t>(1) * 5 * 7] == img.at(0, 0, 1));

    const imaging::ImageBuffer back = tensor_to_image(t);
    CHECK(back.data == img.data);

    imaging::ImageBuffer other(4, 7, 3);
    CHECK_THROWS_AS(images_to_tensor({&img, &other}), ShapeError);
}

TEST_CASE("backbone spec parsing and determinism") {
    const auto toy = BackboneSpec::parse("toy:16");
    CHECK(toy.base_channels == 16);
    CHECK(BackboneSpec::parse("pretrained:/tmp/x.ckpt").path == "/tmp/x.ckpt");
    CHECK_THROWS_AS(BackboneSpec::parse("resnet50"), InputError);
    CHECK_THROWS_AS(BackboneSpec::parse("toy:0"), InputError);

    const CnnBackbone a(toy, 28, 5), b(toy, 28, 5), c(toy, 28, 6);
    CHECK(a.params_hash() == b.params_hash());
    CHECK(a.params_hash() != c.params_hash());
    CHECK(a.out_channels() == 64);
    CHECK(a.map_extent(224) == 8);
    CHECK_THROWS_AS(a.map_extent(100), ShapeError);

    const CnnBackbone r16(toy, 16, 5);
    CHECK(r16.map_extent(224) == 14);
    const Tensor out = r16.forward(random_tensor({1, 3, 64, 64}, 40, 0.0f, 1.0f));
    CHECK(out.shape == std::vector<int>{1, 64, 4, 4});
}

TEST_CASE("pretrained backbone weights restore through the export format") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "himfr_bbn_test";
    fs::create_directories(dir);
    const std::string path = (dir / "bbn.ckpt").string();

    const CnnBackbone original(BackboneSpec::parse("toy:8"), 16, 9);
    original.export_weights(path);
    const CnnBackbone restored(BackboneSpec::parse("pretrained:" + path), 16, 1234);
    CHECK(restored.params_hash() == original.params_hash());

    CHECK_THROWS_AS(CnnBackbone(BackboneSpec::parse("pretrained:" + path + ".nope"),
                                16, 0),
                    CheckpointError);
    fs::remove_all(dir);
}
