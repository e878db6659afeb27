// GROKCKPT1 checkpoint container.
//
//   bytes 0..8   "GROKCKPT1"
//   u64 LE       header length H
//   H bytes      UTF-8 JSON: {"format", "dims", "freeze", "layout": "row-major",
//                "tensors": [{"name", "shape": [rows, cols], "dtype": "f64", "offset"}]}
//   payload      little-endian f64 tensors in header order, row-major
//   u64 LE       FNV-1a 64 of the payload
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "grok/io.hpp"
#include "grok/model.hpp"

namespace grok {

class CheckpointError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class BadMagic : public CheckpointError {
    using CheckpointError::CheckpointError;
};
class ChecksumMismatch : public CheckpointError {
    using CheckpointError::CheckpointError;
};
class CheckpointShapeMismatch : public CheckpointError {
    using CheckpointError::CheckpointError;
};

inline constexpr char kCheckpointMagic[] = "GROKCKPT1";
inline constexpr std::size_t kMagicSize = 9;

inline std::uint64_t fnv1a64(const unsigned char* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace detail {

inline void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

inline void put_f64_le(std::string& out, double x) { put_u64_le(out, std::bit_cast<std::uint64_t>(x)); }

inline nlohmann::json dims_to_json(const ModelDims& d) {
    return {{"p", d.p},
            {"n_op", d.n_op},
            {"d_emb", d.d_emb},
            {"d_mlp", d.d_mlp},
            {"n_heads", d.n_heads},
            {"d_head", d.d_head},
            {"context", ModelDims::context},
            {"scale_attention", d.scale_attention},
            {"fan_in_init", d.fan_in_init}};
}

inline ModelDims dims_from_json(const nlohmann::json& j) {
    ModelDims d;
    d.p = j.at("p").get<int>();
    d.n_op = j.at("n_op").get<int>();
    d.d_emb = j.at("d_emb").get<int>();
    d.d_mlp = j.at("d_mlp").get<int>();
    d.n_heads = j.at("n_heads").get<int>();
    d.d_head = j.at("d_head").get<int>();
    d.scale_attention = j.value("scale_attention", true);
    d.fan_in_init = j.value("fan_in_init", false);
    return d;
}

}  // namespace detail

inline std::string encode_checkpoint(const ModelParams& params) {
    nlohmann::json header;
    header["format"] = "GROKCKPT1";
    header["dims"] = detail::dims_to_json(params.dims);
    header["freeze"] = to_string(params.freeze.mode);
    header["layout"] = "row-major";
    header["tensors"] = nlohmann::json::array();
    std::string payload;
    params.for_each([&](const std::string& name, const Matrix& w) {
        header["tensors"].push_back({{"name", name},
                                     {"shape", {w.rows(), w.cols()}},
                                     {"dtype", "f64"},
                                     {"offset", payload.size()}});
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) detail::put_f64_le(payload, w(r, c));
    });
    const std::string h = header.dump();
    std::string out(kCheckpointMagic, kMagicSize);
    detail::put_u64_le(out, h.size());
    out += h;
    out += payload;
    detail::put_u64_le(out, fnv1a64(reinterpret_cast<const unsigned char*>(payload.data()), payload.size()));
    return out;
}

inline void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(params));
}

inline ModelParams decode_checkpoint(const std::string& bytes) {
    const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < kMagicSize || std::memcmp(bytes.data(), kCheckpointMagic, kMagicSize) != 0)
        throw BadMagic("not a GROKCKPT1 checkpoint");
    if (bytes.size() < kMagicSize + 16) throw ChecksumMismatch("checkpoint truncated");
    const std::uint64_t hlen = detail::get_u64_le(data + kMagicSize);
    const std::size_t payload_begin = kMagicSize + 8 + hlen;
    if (hlen > bytes.size() || payload_begin + 8 > bytes.size()) throw ChecksumMismatch("checkpoint truncated");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(kMagicSize + 8, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw ChecksumMismatch(std::string("corrupt checkpoint header: ") + e.what());
    }
    const std::size_t payload_size = bytes.size() - payload_begin - 8;
    const std::uint64_t stored = detail::get_u64_le(data + bytes.size() - 8);
    if (fnv1a64(data + payload_begin, payload_size) != stored) throw ChecksumMismatch("payload checksum mismatch");

    ModelParams m;
    try {
        m = ModelParams::zeros(detail::dims_from_json(header.at("dims")));
        m.freeze.mode = freeze_mode_from_string(header.value("freeze", "none"));
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("invalid checkpoint dims: ") + e.what());
    }
    const auto& tensors = header.at("tensors");
    std::size_t idx = 0;
    std::size_t expected_offset = 0;
    m.for_each([&](const std::string& name, Matrix& w) {
        if (idx >= tensors.size()) throw CheckpointShapeMismatch("checkpoint is missing tensor " + name);
        const auto& t = tensors[idx++];
        if (t.at("name").get<std::string>() != name)
            throw CheckpointShapeMismatch("expected tensor " + name + ", found " + t.at("name").get<std::string>());
        if (t.at("dtype").get<std::string>() != "f64") throw CheckpointError("unsupported dtype for " + name);
        const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
        if (shape.size() != 2 || shape[0] != w.rows() || shape[1] != w.cols())
            throw CheckpointShapeMismatch("tensor " + name + " has the wrong shape");
        const auto offset = t.at("offset").get<std::size_t>();
        if (offset != expected_offset) throw ChecksumMismatch("tensor offsets are not contiguous");
        const std::size_t nbytes = static_cast<std::size_t>(w.size()) * 8;
        if (offset + nbytes > payload_size) throw ChecksumMismatch("payload shorter than header claims");
        const unsigned char* src = data + payload_begin + offset;
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c, src += 8)
                w(r, c) = std::bit_cast<double>(detail::get_u64_le(src));
        expected_offset += nbytes;
    });
    if (idx != tensors.size() || expected_offset != payload_size)
        throw ChecksumMismatch("payload size does not match header");
    return m;
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

// Loads and checks every tensor shape against the requested dimensions.
inline ModelParams load_checkpoint(const std::filesystem::path& path, const ModelDims& expected) {
    ModelParams m = load_checkpoint(path);
    if (!m.dims.same_shapes(expected))
        throw CheckpointShapeMismatch("checkpoint dims (p=" + std::to_string(m.dims.p) + ", n_op=" +
                                      std::to_string(m.dims.n_op) + ") differ from requested (p=" +
                                      std::to_string(expected.p) + ", n_op=" + std::to_string(expected.n_op) + ")");
    return m;
}

}  // namespace grok
