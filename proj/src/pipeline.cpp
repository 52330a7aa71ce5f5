#include "himfr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "himfr/nn/checkpoint.hpp"

namespace himfr::pipeline {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

PipelineConfig PipelineConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read pipeline config: " + path);
    PipelineConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw DataError("config line " + std::to_string(lineno) +
                            " is not key = value: " + line);
        cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
    if (key == "detector_checkpoint") detector_checkpoint = value;
    else if (key == "inpainter_checkpoint") inpainter_checkpoint = value;
    else if (key == "recognizer_checkpoint") recognizer_checkpoint = value;
    else if (key == "detector_threshold") detector_threshold = std::stod(value);
    else if (key == "candidates") {
        candidates = std::stoi(value);
        if (candidates < 1) throw InputError("candidates must be >= 1");
    } else if (key == "segmentation") {
        if (value != "ground_truth" && value != "color_threshold")
            throw InputError("segmentation must be ground_truth or color_threshold");
        segmentation = value;
    } else if (key == "fill_r") fill[0] = std::stof(value);
    else if (key == "fill_g") fill[1] = std::stof(value);
    else if (key == "fill_b") fill[2] = std::stof(value);
    else if (key == "tau") tau = std::stof(value);
    else if (key == "seed") seed = std::stoull(value);
    else throw InputError("unknown pipeline config key: " + key);
}

std::string PipelineConfig::to_text() const {
    std::ostringstream out;
    out << "detector_checkpoint = " << detector_checkpoint << "\n"
        << "inpainter_checkpoint = " << inpainter_checkpoint << "\n"
        << "recognizer_checkpoint = " << recognizer_checkpoint << "\n"
        << "detector_threshold = " << detector_threshold << "\n"
        << "candidates = " << candidates << "\n"
        << "segmentation = " << segmentation << "\n"
        << "fill_r = " << fill[0] << "\n"
        << "fill_g = " << fill[1] << "\n"
        << "fill_b = " << fill[2] << "\n"
        << "tau = " << tau << "\n"
        << "seed = " << seed << "\n";
    return out.str();
}

void ModelRegistry::register_stage(const std::string& stage,
                                   const std::string& checkpoint_path,
                                   const std::string& expected_magic) {
    const auto reader = nn::CheckpointReader::open(checkpoint_path, expected_magic);
    stages_[stage] = {expected_magic, reader.config_json(), reader.content_hash()};
}

const StageInfo& ModelRegistry::info(const std::string& stage) const {
    const auto it = stages_.find(stage);
    if (it == stages_.end())
        throw CheckpointError("registry has no stage: " + stage);
    return it->second;
}

std::size_t RunReport::failure_count() const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(),
                      [](const RunRecord& r) { return !r.ok; }));
}

std::size_t RunReport::masked_count() const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(),
                      [](const RunRecord& r) { return r.ok && r.masked; }));
}

std::size_t RunReport::inpainted_count() const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(),
                      [](const RunRecord& r) { return r.ok && r.inpainted; }));
}

namespace {

std::string sanitize(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

std::string RunReport::to_csv() const {
    std::ostringstream out;
    out << "path,status,error,masked,masked_probability,inpainted,predicted,"
           "predicted_probability,millis\n";
    for (const auto& r : records) {
        out << r.path << "," << (r.ok ? "ok" : "failed") << "," << sanitize(r.error)
            << "," << (r.masked ? 1 : 0) << "," << fmt6(r.masked_probability) << ","
            << (r.inpainted ? 1 : 0) << "," << r.predicted << ","
            << fmt6(r.predicted_probability) << "," << fmt6(r.millis) << "\n";
    }
    return out.str();
}

std::string RunReport::to_json() const {
    json j;
    j["inpaint_size"] = inpaint_size;
    j["recognize_size"] = recognize_size;
    j["total"] = records.size();
    j["failed"] = failure_count();
    j["masked"] = masked_count();
    j["inpainted"] = inpainted_count();
    json rows = json::array();
    for (const auto& r : records) {
        json row;
        row["path"] = r.path;
        row["ok"] = r.ok;
        row["error"] = r.error;
        row["masked"] = r.masked;
        row["masked_probability"] = r.masked_probability;
        row["inpainted"] = r.inpainted;
        row["predicted"] = r.predicted;
        row["predicted_probability"] = r.predicted_probability;
        row["probabilities"] = r.probabilities;
        row["millis"] = r.millis;
        rows.push_back(row);
    }
    j["records"] = rows;
    return j.dump(2);
}

RunReport RunReport::from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) ||
        line != "path,status,error,masked,masked_probability,inpainted,predicted,"
                "predicted_probability,millis")
        throw DataError("run report csv has an unexpected header");
    RunReport report;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) cols.push_back(col);
        if (cols.size() < 9) throw DataError("malformed run report row: " + line);
        RunRecord r;
        r.path = cols[0];
        r.ok = cols[1] == "ok";
        r.error = cols[2];
        r.masked = cols[3] == "1";
        r.masked_probability = std::stod(cols[4]);
        r.inpainted = cols[5] == "1";
        r.predicted = std::stoi(cols[6]);
        r.predicted_probability = std::stod(cols[7]);
        r.millis = std::stod(cols[8]);
        report.records.push_back(std::move(r));
    }
    return report;
}

RunRecord run_pipeline(const std::string& path, const ImageBuffer& img,
                       const StageFunctions& stages) {
    RunRecord rec;
    rec.path = path;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const auto verdict = stages.detect(img);
        rec.masked = verdict.is_masked;
        rec.masked_probability = verdict.probability;

        ImageBuffer to_recognize = img;
        if (verdict.is_masked) {
            const BinaryMask mask = stages.segment(path, img);
            // restoration runs at its own resolution
            const ImageBuffer sized = imaging::resize_bilinear(img, stages.inpaint_size,
                                                               stages.inpaint_size);
            const BinaryMask sized_mask = imaging::resize_mask_nearest(
                mask, stages.inpaint_size, stages.inpaint_size);
            to_recognize = stages.inpaint(sized, sized_mask);
            rec.inpainted = true;
        }
        // recognizer input resolution differs from the restoration resolution
        if (to_recognize.height != stages.recognize_size ||
            to_recognize.width != stages.recognize_size)
            to_recognize = imaging::resize_bilinear(to_recognize, stages.recognize_size,
                                                    stages.recognize_size);

        rec.probabilities = stages.recognize(to_recognize);
        const auto best = std::max_element(rec.probabilities.begin(),
                                           rec.probabilities.end());
        rec.predicted = static_cast<int>(best - rec.probabilities.begin());
        rec.predicted_probability = *best;
    } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
    }
    rec.millis = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
    return rec;
}

RunReport run_batch(const std::vector<std::pair<std::string, ImageBuffer>>& images,
                    const StageFunctions& stages) {
    RunReport report;
    report.inpaint_size = stages.inpaint_size;
    report.recognize_size = stages.recognize_size;
    report.records.reserve(images.size());
    for (const auto& [path, img] : images)
        report.records.push_back(run_pipeline(path, img, stages));
    std::sort(report.records.begin(), report.records.end(),
              [](const RunRecord& a, const RunRecord& b) { return a.path < b.path; });
    return report;
}

}  // namespace himfr::pipeline
