#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "himfr/detector.hpp"
#include "himfr/image_io.hpp"
#include "himfr/pipeline.hpp"
#include "support/toy_faces.hpp"

using namespace himfr;
using namespace himfr::pipeline;
namespace ts = himfr::testsupport;
namespace fs = std::filesystem;

namespace {

// Stub stages with call counting. Verdicts come from a pixel marker so the
// stub is a pure function of the image.
struct StubStages {
    int segment_calls = 0;
    int inpaint_calls = 0;
    int recognize_calls = 0;
    imaging::ImageBuffer last_recognized;

    StageFunctions make(int size) {
        StageFunctions stages;
        stages.inpaint_size = size;
        stages.recognize_size = size;  // equal sizes keep pixels comparable
        stages.detect = [](const imaging::ImageBuffer& img) {
            detector::DetectorVerdict v;
            v.probability = img.at(0, 0, 0) > 0.5f ? 0.9 : 0.1;
            v.is_masked = v.probability > 0.5;
            return v;
        };
        stages.segment = [this](const std::string&, const imaging::ImageBuffer& img) {
            ++segment_calls;
            imaging::BinaryMask mask(img.height, img.width, 0);
            for (int y = img.height / 2; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) mask.at(y, x) = 1;
            return mask;
        };
        stages.inpaint = [this](const imaging::ImageBuffer& img,
                                const imaging::BinaryMask& mask) {
            ++inpaint_calls;
            imaging::ImageBuffer fill(img.height, img.width, 3, 0.25f);
            return imaging::composite(img, fill, mask);
        };
        stages.recognize = [this](const imaging::ImageBuffer& img) {
            ++recognize_calls;
            last_recognized = img;
            return std::vector<double>{0.1, 0.7, 0.2};
        };
        return stages;
    }
};

imaging::ImageBuffer marked_image(int size, bool masked, std::uint64_t seed) {
    auto img = ts::toy_face(size, 0, seed);
    img.at(0, 0, 0) = masked ? 1.0f : 0.0f;
    return img;
}

}  // namespace

TEST_CASE("routing: inpainter runs exactly once per masked verdict") {
    StubStages stub;
    const auto stages = stub.make(32);

    std::vector<std::pair<std::string, imaging::ImageBuffer>> batch;
    for (int i = 0; i < 25; ++i)
        batch.emplace_back("m" + std::to_string(i), marked_image(32, true, i));
    for (int i = 0; i < 25; ++i)
        batch.emplace_back("u" + std::to_string(i), marked_image(32, false, 100 + i));

    const RunReport report = run_batch(batch, stages);
    CHECK(report.records.size() == 50);
    CHECK(report.masked_count() == 25);
    CHECK(report.inpainted_count() == 25);
    CHECK(stub.inpaint_calls == 25);
    CHECK(stub.segment_calls == 25);
    CHECK(stub.recognize_calls == 50);
    CHECK(report.failure_count() == 0);

    // unmasked-only batch never touches the inpainter
    StubStages clean;
    const auto clean_stages = clean.make(32);
    std::vector<std::pair<std::string, imaging::ImageBuffer>> unmasked;
    for (int i = 0; i < 10; ++i)
        unmasked.emplace_back("u" + std::to_string(i), marked_image(32, false, i));
    run_batch(unmasked, clean_stages);
    CHECK(clean.inpaint_calls == 0);
}

TEST_CASE("masked path hands the recognizer the composited image") {
    StubStages stub;
    const auto stages = stub.make(32);
    const auto img = marked_image(32, true, 3);
    const RunRecord rec = run_pipeline("x", img, stages);
    REQUIRE(rec.ok);
    CHECK(rec.masked);
    CHECK(rec.inpainted);
    // outside the mask the recognizer input equals the original pixels
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 32; ++x)
            for (int c = 0; c < 3; ++c)
                REQUIRE(stub.last_recognized.at(y, x, c) == img.at(y, x, c));
    // inside the mask it equals the stub completion
    CHECK(stub.last_recognized.at(20, 5, 0) == 0.25f);
    CHECK(rec.predicted == 1);
}

TEST_CASE("per-image failures never abort the batch") {
    StubStages stub;
    auto stages = stub.make(32);
    stages.recognize = [&stub](const imaging::ImageBuffer& img) -> std::vector<double> {
        ++stub.recognize_calls;
        if (img.at(0, 1, 0) > 0.9f) throw DataError("poisoned sample");
        return {0.5, 0.5};
    };

    std::vector<std::pair<std::string, imaging::ImageBuffer>> batch;
    for (int i = 0; i < 6; ++i) {
        auto img = marked_image(32, false, i);
        if (i == 2 || i == 4) img.at(0, 1, 0) = 1.0f;
        batch.emplace_back("img" + std::to_string(i), img);
    }
    const RunReport report = run_batch(batch, stages);
    CHECK(report.records.size() == 6);
    CHECK(report.failure_count() == 2);
    std::size_t ok = 0;
    for (const auto& r : report.records)
        if (r.ok) ++ok;
    CHECK(ok + report.failure_count() == batch.size());
    for (const auto& r : report.records)
        if (!r.ok) CHECK(r.error.find("poisoned") != std::string::npos);
}

TEST_CASE("records come back sorted by path regardless of input order") {
    StubStages stub;
    const auto stages = stub.make(32);
    std::vector<std::pair<std::string, imaging::ImageBuffer>> batch = {
        {"c.png", marked_image(32, false, 1)},
        {"a.png", marked_image(32, false, 2)},
        {"b.png", marked_image(32, false, 3)},
    };
    const RunReport report = run_batch(batch, stages);
    CHECK(report.records[0].path == "a.png");
    CHECK(report.records[1].path == "b.png");
    CHECK(report.records[2].path == "c.png");
}

TEST_CASE("run reports round-trip through their own csv reader") {
    StubStages stub;
    const auto stages = stub.make(32);
    std::vector<std::pair<std::string, imaging::ImageBuffer>> batch = {
        {"a.png", marked_image(32, true, 1)},
        {"b.png", marked_image(32, false, 2)},
    };
    const RunReport report = run_batch(batch, stages);
    const RunReport back = RunReport::from_csv(report.to_csv());
    REQUIRE(back.records.size() == report.records.size());
    for (std::size_t i = 0; i < back.records.size(); ++i) {
        CHECK(back.records[i].path == report.records[i].path);
        CHECK(back.records[i].masked == report.records[i].masked);
        CHECK(back.records[i].inpainted == report.records[i].inpainted);
        CHECK(back.records[i].predicted == report.records[i].predicted);
    }
    CHECK(back.masked_count() == report.masked_count());
    CHECK_THROWS_AS(RunReport::from_csv("garbage\n"), DataError);

    // json emission parses as json and records both stage resolutions
    const std::string json = report.to_json();
    CHECK(json.find("\"records\"") != std::string::npos);
    CHECK(json.find("\"inpaint_size\": 32") != std::string::npos);
    CHECK(json.find("\"recognize_size\": 32") != std::string::npos);
}

TEST_CASE("pipeline config files parse, override, and reject unknown keys") {
    const fs::path dir = fs::temp_directory_path() / "himfr_cfg_test";
    fs::create_directories(dir);
    const std::string path = (dir / "pipeline.cfg").string();
    {
        std::ofstream out(path);
        out << "# pipeline config\n"
            << "detector_checkpoint = det.ckpt\n"
            << "candidates = 5\n"
            << "segmentation = ground_truth\n"
            << "tau = 0.1\n"
            << "seed = 99\n";
    }
    PipelineConfig cfg = PipelineConfig::from_file(path);
    CHECK(cfg.detector_checkpoint == "det.ckpt");
    CHECK(cfg.candidates == 5);
    CHECK(cfg.segmentation == "ground_truth");
    CHECK(cfg.tau == doctest::Approx(0.1f));
    CHECK(cfg.seed == 99);

    cfg.set("candidates", "7");  // flag override path
    CHECK(cfg.candidates == 7);
    CHECK_THROWS_AS(cfg.set("bogus_key", "1"), InputError);
    CHECK_THROWS_AS(cfg.set("segmentation", "magic"), InputError);
    CHECK_THROWS_AS(cfg.set("candidates", "0"), InputError);

    {
        std::ofstream out(path);
        out << "not a key value line\n";
    }
    CHECK_THROWS_AS(PipelineConfig::from_file(path), DataError);

    // to_text round-trips through the parser
    PipelineConfig base;
    base.candidates = 9;
    const std::string text_path = (dir / "echo.cfg").string();
    {
        std::ofstream out(text_path);
        out << base.to_text();
    }
    CHECK(PipelineConfig::from_file(text_path).candidates == 9);
    fs::remove_all(dir);
}

TEST_CASE("HIMFR_SEED sets the global default seed") {
    setenv("HIMFR_SEED", "12345", 1);
    CHECK(default_seed() == 12345);
    setenv("HIMFR_SEED", "not-a-number", 1);
    CHECK(default_seed() == 42);  // malformed values fall back with a warning
    unsetenv("HIMFR_SEED");
    CHECK(default_seed() == 42);
}

TEST_CASE("registry records stage metadata with verified hashes") {
    const fs::path dir = fs::temp_directory_path() / "himfr_registry_test";
    fs::create_directories(dir);
    const std::string path = (dir / "det.ckpt").string();

    detector::DetectorConfig cfg;
    cfg.backbone_spec = "toy:8";
    cfg.train.input_size = 56;
    const detector::DetectorModel model(cfg);
    const std::uint64_t written_hash = model.save(path);

    ModelRegistry registry;
    registry.register_stage("detector", path, detector::kCheckpointMagic);
    CHECK(registry.info("detector").content_hash == written_hash);
    CHECK(registry.info("detector").magic == detector::kCheckpointMagic);
    CHECK(registry.info("detector").config_json.find("toy:8") != std::string::npos);
    CHECK_THROWS_AS(registry.info("recognizer"), CheckpointError);
    CHECK_THROWS_AS(registry.register_stage("x", path, "HIMFR-REC v1"), CheckpointError);
    fs::remove_all(dir);
}

#ifdef HIMFR_CLI
namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(HIMFR_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("cli exit codes: 0 success, 1 usage, 2 data, 3 checkpoint") {
    const fs::path dir = fs::temp_directory_path() / "himfr_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir / "faces" / "p0");
    fs::create_directories(dir / "faces" / "p1");
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 3; ++i)
            imaging::save_image((dir / "faces" / ("p" + std::to_string(c)) /
                                 ("f" + std::to_string(i) + ".png"))
                                    .string(),
                                ts::toy_face(64, c, static_cast<std::uint64_t>(i)));

    CHECK(run_cli("") == 1);                 // missing subcommand
    CHECK(run_cli("definitely-not-a-command") == 1);
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("report") == 1);           // missing required option values
    CHECK(run_cli("report --targets") == 0);
    CHECK(run_cli("report --roc " + (dir / "missing.csv").string()) == 2);
    CHECK(run_cli("make-masked-dataset --root " + (dir / "nowhere").string()) == 2);
    CHECK(run_cli("make-masked-dataset --root " + (dir / "faces").string()) == 0);
    CHECK(fs::exists(dir / "faces_masked" / "p0" / "f0.png"));

    // checkpoint errors exit 3
    CHECK(run_cli("eval-recognizer --checkpoint " + (dir / "missing.ckpt").string() +
                  " --data " + (dir / "faces").string()) == 3);
    // a detector checkpoint fed to the recognizer stage is a version error
    detector::DetectorConfig det_cfg;
    det_cfg.backbone_spec = "toy:8";
    det_cfg.train.input_size = 56;
    detector::DetectorModel(det_cfg).save((dir / "det.ckpt").string());
    CHECK(run_cli("eval-recognizer --checkpoint " + (dir / "det.ckpt").string() +
                  " --data " + (dir / "faces").string()) == 3);
    fs::remove_all(dir);
}
#endif
