#include "himfr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "himfr/image_io.hpp"

namespace fs = std::filesystem;

namespace himfr::imaging {

void DatasetIndex::validate() const {
    std::set<std::string> seen;
    for (const auto& s : samples) {
        if (s.label < 0 || s.label >= static_cast<int>(class_names.size()))
            throw DataError("sample label out of range: " + s.path);
        if (!seen.insert(s.path).second)
            throw DataError("duplicate sample path: " + s.path);
    }
}

namespace {

bool is_image_file(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

DatasetIndex scan_directory(const std::string& root, bool masked) {
    if (!fs::is_directory(root)) throw DataError("not a dataset directory: " + root);
    DatasetIndex idx;
    std::vector<std::string> class_dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) class_dirs.push_back(e.path().filename().string());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) throw DataError("dataset has no class directories: " + root);

    idx.class_names = class_dirs;
    for (std::size_t label = 0; label < class_dirs.size(); ++label) {
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(fs::path(root) / class_dirs[label]))
            if (e.is_regular_file() && is_image_file(e.path()))
                files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        for (auto& f : files)
            idx.samples.push_back({std::move(f), static_cast<int>(label), masked});
    }
    if (idx.samples.empty()) throw DataError("dataset has no images: " + root);
    return idx;
}

DatasetIndex merge(const DatasetIndex& a, const DatasetIndex& b) {
    if (a.class_names != b.class_names)
        throw DataError("cannot merge indexes with different class vocabularies");
    DatasetIndex out = a;
    out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
    out.validate();
    return out;
}

int stratified_train_count(int class_size, double ratio) {
    int n = static_cast<int>(std::floor(class_size * ratio + 0.5));
    return std::clamp(n, 1, class_size - 1);
}

std::pair<DatasetIndex, DatasetIndex> split_dataset(const DatasetIndex& idx,
                                                    double ratio,
                                                    std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw InputError("split ratio must lie strictly between 0 and 1");
    idx.validate();

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < idx.samples.size(); ++i)
        by_class[idx.samples[i].label].push_back(i);

    DatasetIndex train, test;
    train.class_names = idx.class_names;
    test.class_names = idx.class_names;

    for (auto& [label, members] : by_class) {
        if (members.size() < 2)
            throw DataError("class " + idx.class_names[label] +
                            " has fewer than 2 samples; cannot stratify");
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(label)));
        std::shuffle(members.begin(), members.end(), rng);
        const int n_train =
            stratified_train_count(static_cast<int>(members.size()), ratio);
        for (std::size_t k = 0; k < members.size(); ++k) {
            auto& dst = k < static_cast<std::size_t>(n_train) ? train : test;
            dst.samples.push_back(idx.samples[members[k]]);
        }
    }
    return {std::move(train), std::move(test)};
}

void write_split_manifest(const std::string& csv_path,
                          const DatasetIndex& train, const DatasetIndex& test) {
    std::ofstream out(csv_path);
    if (!out) throw IoError("cannot write manifest: " + csv_path);
    out << "path,label,split\n";
    for (const auto& s : train.samples)
        out << s.path << "," << s.label << ",train\n";
    for (const auto& s : test.samples)
        out << s.path << "," << s.label << ",test\n";
}

std::vector<ManifestRow> read_split_manifest(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw IoError("cannot read manifest: " + csv_path);
    std::vector<ManifestRow> rows;
    std::string line;
    if (!std::getline(in, line) || line != "path,label,split")
        throw DataError("manifest missing path,label,split header: " + csv_path);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c1 = line.rfind(',');
        const auto c0 = line.rfind(',', c1 - 1);
        if (c0 == std::string::npos || c1 == std::string::npos)
            throw DataError("malformed manifest row: " + line);
        ManifestRow r;
        r.path = line.substr(0, c0);
        r.label = std::stoi(line.substr(c0 + 1, c1 - c0 - 1));
        r.split = line.substr(c1 + 1);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::size_t make_masked_dataset(const std::string& root,
                                const MaskedDatasetOptions& opts,
                                std::string masked_root,
                                std::string masks_root) {
    DatasetIndex idx = scan_directory(root);
    if (masked_root.empty()) masked_root = root + "_masked";
    if (masks_root.empty()) masks_root = root + "_masks";

    std::size_t written = 0;
    for (std::size_t i = 0; i < idx.samples.size(); ++i) {
        const auto& s = idx.samples[i];
        const ImageBuffer img = load_image(s.path);
        const MaskedPair pair = synthesize_mask(
            img, opts.geometry, mix_seed(opts.seed, i), opts.jitter);

        const fs::path rel = fs::relative(s.path, root);
        // Masked variants are always stored as PNG so fills stay exact.
        const fs::path masked_path = (fs::path(masked_root) / rel).replace_extension(".png");
        const fs::path mask_path = (fs::path(masks_root) / rel).replace_extension(".png");
        fs::create_directories(masked_path.parent_path());
        fs::create_directories(mask_path.parent_path());
        save_image(masked_path.string(), pair.masked_image);
        save_mask(mask_path.string(), pair.mask);
        ++written;
    }
    return written;
}

}  // namespace himfr::imaging
