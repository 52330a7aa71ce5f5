#pragma once

#include <map>
#include <string>
#include <vector>

#include "himfr/nn/layers.hpp"

namespace himfr::nn {

// Versioned binary parameter container:
//   magic line ("HIMFR-DET v1\n" etc.)
//   u32 config length, config JSON bytes
//   u32 blob count, then per blob: u32 name length, name, u32 ndim,
//   i32 dims..., u64 float count, raw float32 data
//   trailing u64 FNV-1a hash over everything after the magic line
// Little-endian throughout. Loading verifies magic, version, and hash.

struct CheckpointBlob {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

class CheckpointWriter {
public:
    explicit CheckpointWriter(std::string magic) : magic_(std::move(magic)) {}

    void set_config_json(std::string json) { config_json_ = std::move(json); }
    void add_blob(const std::string& name, const std::vector<int>& shape,
                  const std::vector<float>& data);
    void add_params(const ParamRefs& params);

    /// Serializes to bytes / file; the content hash is returned for registry
    /// bookkeeping.
    std::vector<unsigned char> serialize(std::uint64_t* content_hash = nullptr) const;
    std::uint64_t write(const std::string& path) const;

private:
    std::string magic_;
    std::string config_json_;
    std::vector<CheckpointBlob> blobs_;
};

class CheckpointReader {
public:
    /// Parses and validates a checkpoint. Throws CheckpointError on missing
    /// file, wrong magic/stage, truncation, or hash mismatch.
    static CheckpointReader open(const std::string& path,
                                 const std::string& expected_magic);

    const std::string& config_json() const { return config_json_; }
    std::uint64_t content_hash() const { return content_hash_; }
    const std::vector<CheckpointBlob>& blobs() const { return blobs_; }

    const CheckpointBlob& blob(const std::string& name) const;

    /// Copies blob contents into the given params, matching by name and size.
    void restore_params(const ParamRefs& params) const;

    /// Reads only the magic line of a checkpoint file.
    static std::string peek_magic(const std::string& path);

private:
    std::string config_json_;
    std::vector<CheckpointBlob> blobs_;
    std::map<std::string, std::size_t> index_;
    std::uint64_t content_hash_ = 0;
};

/// FNV-1a over all parameter bytes; used by the frozen-backbone checks.
std::uint64_t hash_params(const ParamRefs& params);

}  // namespace himfr::nn
