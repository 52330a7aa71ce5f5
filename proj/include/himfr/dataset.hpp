#pragma once

#include <string>
#include <utility>
#include <vector>

#include "himfr/image.hpp"

namespace himfr::imaging {

struct Sample {
    std::string path;
    int label = 0;
    bool masked = false;
};

/// Index over a directory-tree dataset: <root>/<class_name>/<image>.{png,jpg}.
/// Class names are kept in sorted order so labels are stable across runs.
struct DatasetIndex {
    std::vector<Sample> samples;
    std::vector<std::string> class_names;

    std::size_t size() const { return samples.size(); }
    void validate() const;  // labels in range, paths unique
};

/// Scans a dataset root. Classes and files are enumerated in sorted order.
/// `masked` tags every sample (masked trees live in a parallel root).
DatasetIndex scan_directory(const std::string& root, bool masked = false);

/// Merges two indexes over the same class vocabulary (e.g. a clean tree and
/// its masked counterpart).
DatasetIndex merge(const DatasetIndex& a, const DatasetIndex& b);

/// Deterministic per-class stratified split. Each class is shuffled with its
/// own seeded stream and the first round(n * ratio) samples go to train; a
/// class with fewer than 2 samples cannot be split and is an error.
std::pair<DatasetIndex, DatasetIndex> split_dataset(const DatasetIndex& idx,
                                                    double ratio,
                                                    std::uint64_t seed);

/// Number of training samples a class of size n receives at `ratio`
/// (round-half-up, clamped so both partitions stay non-empty).
int stratified_train_count(int class_size, double ratio);

/// Writes `path,label,split` CSV rows (header included) for both partitions.
void write_split_manifest(const std::string& csv_path,
                          const DatasetIndex& train, const DatasetIndex& test);

struct ManifestRow {
    std::string path;
    int label = 0;
    std::string split;
};

std::vector<ManifestRow> read_split_manifest(const std::string& csv_path);

struct MaskedDatasetOptions {
    MaskGeometry geometry = MaskGeometry::default_face_mask();
    float jitter = 0.05f;
    std::uint64_t seed = 0;
};

/// Emits masked variants of every image under `root` into `<root>_masked/`
/// plus the binary masks into `<root>_masks/` (255 = occluded), mirroring
/// the class-directory layout. Returns the number of images written.
std::size_t make_masked_dataset(const std::string& root,
                                const MaskedDatasetOptions& opts,
                                std::string masked_root = "",
                                std::string masks_root = "");

}  // namespace himfr::imaging
