#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "himfr/detector.hpp"
#include "himfr/image.hpp"

namespace himfr::pipeline {

using imaging::BinaryMask;
using imaging::ImageBuffer;

/// Flat key=value configuration for the end-to-end pipeline. CLI flags
/// override file values.
struct PipelineConfig {
    std::string detector_checkpoint;
    std::string inpainter_checkpoint;
    std::string recognizer_checkpoint;
    double detector_threshold = 0.5;
    int candidates = 3;  // completions generated per masked face
    std::string segmentation = "color_threshold";  // or "ground_truth"
    float fill[3] = {0.35f, 0.55f, 0.85f};
    float tau = 0.05f;
    std::uint64_t seed = 42;

    static PipelineConfig from_file(const std::string& path);
    void set(const std::string& key, const std::string& value);
    std::string to_text() const;
};

/// Metadata of each stage checkpoint; hashes are recomputed and verified
/// when the file is read.
struct StageInfo {
    std::string magic;
    std::string config_json;
    std::uint64_t content_hash = 0;
};

class ModelRegistry {
public:
    void register_stage(const std::string& stage, const std::string& checkpoint_path,
                        const std::string& expected_magic);
    const StageInfo& info(const std::string& stage) const;
    const std::map<std::string, StageInfo>& stages() const { return stages_; }

private:
    std::map<std::string, StageInfo> stages_;
};

/// Stage callables; production wires these to the three models, tests may
/// substitute instrumented stubs. segment receives the input path so
/// ground-truth masks can be resolved from a parallel mask tree.
struct StageFunctions {
    std::function<detector::DetectorVerdict(const ImageBuffer&)> detect;
    std::function<BinaryMask(const std::string& path, const ImageBuffer&)> segment;
    std::function<ImageBuffer(const ImageBuffer&, const BinaryMask&)> inpaint;
    std::function<std::vector<double>(const ImageBuffer&)> recognize;
    int inpaint_size = 256;    // restoration resolution
    int recognize_size = 224;  // identification resolution
};

struct RunRecord {
    std::string path;
    bool ok = true;
    std::string error;
    bool masked = false;
    double masked_probability = 0.0;
    bool inpainted = false;
    int predicted = -1;
    double predicted_probability = 0.0;
    std::vector<double> probabilities;
    double millis = 0.0;
};

struct RunReport {
    std::vector<RunRecord> records;  // sorted by path
    int inpaint_size = 0;    // restoration resolution used for this run
    int recognize_size = 0;  // identification resolution used for this run

    std::size_t failure_count() const;
    std::size_t masked_count() const;
    std::size_t inpainted_count() const;

    std::string to_csv() const;
    std::string to_json() const;
    static RunReport from_csv(const std::string& text);
};

/// One image through detect -> (segment -> inpaint ->) recognize. The
/// inpainting branch runs only on a masked verdict; the restored image is
/// resized between the inpainting and recognition resolutions.
RunRecord run_pipeline(const std::string& path, const ImageBuffer& img,
                       const StageFunctions& stages);

/// Batch version: per-image failures become failure records and never abort
/// the run; records come back sorted by path.
RunReport run_batch(const std::vector<std::pair<std::string, ImageBuffer>>& images,
                    const StageFunctions& stages);

}  // namespace himfr::pipeline
