#include "himfr/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace himfr::nn {

namespace {

template <typename T>
void put(std::vector<unsigned char>& out, T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.insert(out.end(), b, b + sizeof(T));
}

void put_bytes(std::vector<unsigned char>& out, const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out.insert(out.end(), b, b + n);
}

class Cursor {
public:
    Cursor(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}

    template <typename T>
    T get() {
        if (pos_ + sizeof(T) > n_) throw CheckpointError("checkpoint truncated");
        T v;
        std::memcpy(&v, p_ + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string get_string(std::size_t len) {
        if (pos_ + len > n_) throw CheckpointError("checkpoint truncated");
        std::string s(reinterpret_cast<const char*>(p_ + pos_), len);
        pos_ += len;
        return s;
    }

    void get_floats(float* dst, std::size_t count) {
        const std::size_t bytes = count * sizeof(float);
        if (pos_ + bytes > n_) throw CheckpointError("checkpoint truncated");
        std::memcpy(dst, p_ + pos_, bytes);
        pos_ += bytes;
    }

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return n_ - pos_; }

private:
    const unsigned char* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

}  // namespace

void CheckpointWriter::add_blob(const std::string& name,
                                const std::vector<int>& shape,
                                const std::vector<float>& data) {
    if (Tensor::numel_of(shape) != static_cast<std::int64_t>(data.size()))
        throw InputError("checkpoint blob shape/data mismatch: " + name);
    blobs_.push_back({name, shape, data});
}

void CheckpointWriter::add_params(const ParamRefs& params) {
    for (const Param* p : params) add_blob(p->name, p->shape, p->value);
}

std::vector<unsigned char> CheckpointWriter::serialize(
    std::uint64_t* content_hash) const {
    std::vector<unsigned char> out;
    put_bytes(out, magic_.data(), magic_.size());
    out.push_back('\n');
    const std::size_t payload_start = out.size();

    put<std::uint32_t>(out, static_cast<std::uint32_t>(config_json_.size()));
    put_bytes(out, config_json_.data(), config_json_.size());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(blobs_.size()));
    for (const auto& blob : blobs_) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(blob.name.size()));
        put_bytes(out, blob.name.data(), blob.name.size());
        put<std::uint32_t>(out, static_cast<std::uint32_t>(blob.shape.size()));
        for (int d : blob.shape) put<std::int32_t>(out, d);
        put<std::uint64_t>(out, blob.data.size());
        put_bytes(out, blob.data.data(), blob.data.size() * sizeof(float));
    }

    const std::uint64_t hash =
        fnv1a64(out.data() + payload_start, out.size() - payload_start);
    put<std::uint64_t>(out, hash);
    if (content_hash) *content_hash = hash;
    return out;
}

std::uint64_t CheckpointWriter::write(const std::string& path) const {
    std::uint64_t hash = 0;
    const auto bytes = serialize(&hash);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write on checkpoint: " + path);
    return hash;
}

CheckpointReader CheckpointReader::open(const std::string& path,
                                        const std::string& expected_magic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());

    const std::string magic_line = expected_magic + "\n";
    if (bytes.size() < magic_line.size() ||
        std::memcmp(bytes.data(), magic_line.data(), magic_line.size()) != 0) {
        // Distinguish wrong stage from garbage for better diagnostics.
        const auto nl = std::find(bytes.begin(), bytes.end(), '\n');
        if (nl != bytes.end() && nl - bytes.begin() < 64) {
            const std::string found(bytes.begin(), nl);
            if (found.rfind("HIMFR-", 0) == 0)
                throw CheckpointError("checkpoint stage/version mismatch: expected '" +
                                      expected_magic + "', found '" + found + "'");
        }
        throw CheckpointError("not a checkpoint file: " + path);
    }

    if (bytes.size() < magic_line.size() + sizeof(std::uint64_t))
        throw CheckpointError("checkpoint truncated");
    const std::size_t payload_start = magic_line.size();
    const std::size_t payload_end = bytes.size() - sizeof(std::uint64_t);

    std::uint64_t stored_hash = 0;
    std::memcpy(&stored_hash, bytes.data() + payload_end, sizeof(stored_hash));
    const std::uint64_t actual_hash =
        fnv1a64(bytes.data() + payload_start, payload_end - payload_start);
    if (stored_hash != actual_hash)
        throw CheckpointError("checkpoint hash mismatch (corrupt file): " + path);

    Cursor cur(bytes.data() + payload_start, payload_end - payload_start);
    CheckpointReader reader;
    reader.content_hash_ = stored_hash;
    reader.config_json_ = cur.get_string(cur.get<std::uint32_t>());
    const auto nblobs = cur.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < nblobs; ++i) {
        CheckpointBlob blob;
        blob.name = cur.get_string(cur.get<std::uint32_t>());
        const auto ndim = cur.get<std::uint32_t>();
        for (std::uint32_t d = 0; d < ndim; ++d)
            blob.shape.push_back(cur.get<std::int32_t>());
        const auto count = cur.get<std::uint64_t>();
        if (count != static_cast<std::uint64_t>(Tensor::numel_of(blob.shape)))
            throw CheckpointError("checkpoint blob count mismatch: " + blob.name);
        blob.data.resize(count);
        cur.get_floats(blob.data.data(), count);
        reader.index_[blob.name] = reader.blobs_.size();
        reader.blobs_.push_back(std::move(blob));
    }
    if (cur.remaining() != 0)
        throw CheckpointError("trailing bytes in checkpoint: " + path);
    return reader;
}

const CheckpointBlob& CheckpointReader::blob(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end())
        throw CheckpointError("checkpoint missing blob: " + name);
    return blobs_[it->second];
}

void CheckpointReader::restore_params(const ParamRefs& params) const {
    for (Param* p : params) {
        const auto& b = blob(p->name);
        if (b.data.size() != p->value.size())
            throw CheckpointError("checkpoint blob size mismatch: " + p->name);
        p->value = b.data;
        p->zero_grad();
    }
}

std::string CheckpointReader::peek_magic(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line) || line.empty() || line.size() > 64)
        throw CheckpointError("not a checkpoint file: " + path);
    return line;
}

std::uint64_t hash_params(const ParamRefs& params) {
    Fnv1a64 h;
    for (const Param* p : params)
        h.update(p->value.data(), p->value.size() * sizeof(float));
    return h.digest();
}

}  // namespace himfr::nn
