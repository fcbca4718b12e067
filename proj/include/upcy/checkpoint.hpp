#pragma once

// Named-tensor checkpoint container and the UPCY on-disk format.
//
// Layout: magic "UPCY" | u32 LE version | u64 LE header length | UTF-8 JSON
// header (space-padded so the payload starts 64-byte aligned) | raw LE f32
// tensor payloads. Tensor offsets in the header index are relative to the
// payload section start and are multiples of 64. Identical inputs always
// produce byte-identical files: the index is name-sorted and the JSON
// serialization is canonical.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "upcy/config.hpp"
#include "upcy/core.hpp"

namespace upcy {

static_assert(std::endian::native == std::endian::little,
              "UPCY payloads are little-endian; big-endian hosts are unsupported");

constexpr std::uint32_t kUpcyVersion = 1;
constexpr std::size_t kUpcyAlign = 64;

struct checkpoint_meta {
    std::uint64_t seed = 0;
    std::uint64_t tokens_trained = 0;
    std::optional<std::string> parent_hash;  // content hash of the parent file

    bool operator==(const checkpoint_meta&) const = default;
};

struct checkpoint {
    model_config config;
    std::map<std::string, tensor> tensors;  // name-sorted by construction
    checkpoint_meta meta;

    // tensor set and shapes must be exactly those implied by the config
    void validate() const {
        const auto specs = tensor_schema(config);
        if (specs.size() != tensors.size()) {
            throw state_error("checkpoint: tensor count " + std::to_string(tensors.size()) +
                              " does not match schema (" + std::to_string(specs.size()) + ")");
        }
        for (const auto& s : specs) {
            const auto it = tensors.find(s.name);
            if (it == tensors.end()) throw state_error("checkpoint: missing tensor " + s.name);
            if (it->second.rows() != s.rows || it->second.cols() != s.cols) {
                throw state_error("checkpoint: tensor " + s.name + " has wrong shape");
            }
            if (!it->second.all_finite()) {
                throw numeric_error("checkpoint: tensor " + s.name + " contains non-finite values");
            }
        }
    }

    bool operator==(const checkpoint&) const = default;
};

// ----------------------------------------------------------------------
// serialization
// ----------------------------------------------------------------------

namespace detail {

inline std::size_t align_up(std::size_t n, std::size_t a) { return (n + a - 1) / a * a; }

inline nlohmann::json meta_to_json(const checkpoint_meta& m) {
    nlohmann::json j;
    j["seed"] = m.seed;
    j["tokens_trained"] = m.tokens_trained;
    if (m.parent_hash) {
        j["parent_hash"] = *m.parent_hash;
    } else {
        j["parent_hash"] = nullptr;
    }
    return j;
}

inline checkpoint_meta meta_from_json(const nlohmann::json& j) {
    checkpoint_meta m;
    m.seed = j.value("seed", 0ull);
    m.tokens_trained = j.value("tokens_trained", 0ull);
    if (j.contains("parent_hash") && !j.at("parent_hash").is_null()) {
        m.parent_hash = j.at("parent_hash").get<std::string>();
    }
    return m;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const checkpoint& ckpt) {
    ckpt.validate();

    nlohmann::json index;
    std::size_t payload_cursor = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        const std::size_t nbytes = t.size() * sizeof(float);
        index[name] = {{"dtype", "f32"},
                       {"shape", {t.rows(), t.cols()}},
                       {"offset", payload_cursor},
                       {"nbytes", nbytes}};
        payload_cursor = detail::align_up(payload_cursor + nbytes, kUpcyAlign);
    }

    nlohmann::json header;
    header["config"] = ckpt.config;
    header["index"] = index;
    header["meta"] = detail::meta_to_json(ckpt.meta);
    std::string header_str = header.dump();

    // pad header with spaces so the payload section starts 64-byte aligned
    const std::size_t preamble = 4 + sizeof(std::uint32_t) + sizeof(std::uint64_t);
    const std::size_t padded = detail::align_up(preamble + header_str.size(), kUpcyAlign) - preamble;
    header_str.resize(padded, ' ');

    std::vector<std::uint8_t> out;
    out.reserve(preamble + padded + payload_cursor);
    out.insert(out.end(), {'U', 'P', 'C', 'Y'});
    const std::uint32_t version = kUpcyVersion;
    const std::uint64_t header_len = header_str.size();
    out.resize(out.size() + sizeof(version));
    std::memcpy(out.data() + 4, &version, sizeof(version));
    out.resize(out.size() + sizeof(header_len));
    std::memcpy(out.data() + 8, &header_len, sizeof(header_len));
    out.insert(out.end(), header_str.begin(), header_str.end());

    const std::size_t payload_base = out.size();
    out.resize(payload_base + payload_cursor, 0);
    for (const auto& [name, t] : ckpt.tensors) {
        const std::size_t off = index[name]["offset"].get<std::size_t>();
        std::memcpy(out.data() + payload_base + off, t.data(), t.size() * sizeof(float));
    }
    return out;
}

inline checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    const std::size_t preamble = 16;
    if (bytes.size() < preamble || std::memcmp(bytes.data(), "UPCY", 4) != 0) {
        throw format_error("not a UPCY checkpoint (bad magic)");
    }
    std::uint32_t version = 0;
    std::uint64_t header_len = 0;
    std::memcpy(&version, bytes.data() + 4, sizeof(version));
    std::memcpy(&header_len, bytes.data() + 8, sizeof(header_len));
    if (version != kUpcyVersion) {
        throw format_error("unsupported UPCY version " + std::to_string(version));
    }
    if (bytes.size() < preamble + header_len) throw format_error("truncated UPCY header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + preamble,
                                       bytes.begin() + preamble + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("bad UPCY header: ") + e.what());
    }

    checkpoint ckpt;
    ckpt.config = header.at("config").get<model_config>();
    ckpt.meta = detail::meta_from_json(header.at("meta"));

    const std::size_t payload_base = preamble + header_len;
    for (const auto& [name, entry] : header.at("index").items()) {
        if (entry.at("dtype").get<std::string>() != "f32") {
            throw format_error("tensor " + name + ": unsupported dtype");
        }
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        const std::size_t nbytes = entry.at("nbytes").get<std::size_t>();
        if (shape.size() != 2 || shape[0] * shape[1] * sizeof(float) != nbytes) {
            throw format_error("tensor " + name + ": shape/nbytes mismatch");
        }
        if (offset % kUpcyAlign != 0) {
            throw format_error("tensor " + name + ": misaligned payload offset");
        }
        if (payload_base + offset + nbytes > bytes.size()) {
            throw format_error("tensor " + name + ": payload out of bounds");
        }
        tensor t(shape[0], shape[1]);
        std::memcpy(t.data(), bytes.data() + payload_base + offset, nbytes);
        ckpt.tensors.emplace(name, std::move(t));
    }
    ckpt.validate();
    return ckpt;
}

// ----------------------------------------------------------------------
// content hashing (FNV-1a over the serialized bytes; a provenance
// fingerprint, not a cryptographic digest)
// ----------------------------------------------------------------------

inline std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

inline std::string content_hash(const std::vector<std::uint8_t>& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return hash_hex(h);
}

inline std::string content_hash(const checkpoint& ckpt) {
    return content_hash(serialize_checkpoint(ckpt));
}

// ----------------------------------------------------------------------
// file IO
// ----------------------------------------------------------------------

inline void write_checkpoint(const checkpoint& ckpt, const std::string& path) {
    const auto bytes = serialize_checkpoint(ckpt);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw io_error("short write to " + path);
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path);
    f.seekg(0, std::ios::end);
    const auto n = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
    f.read(reinterpret_cast<char*>(bytes.data()), n);
    if (!f) throw io_error("short read from " + path);
    return bytes;
}

inline checkpoint read_checkpoint(const std::string& path) {
    return deserialize_checkpoint(read_file_bytes(path));
}

inline std::string file_content_hash(const std::string& path) {
    return content_hash(read_file_bytes(path));
}

}  // namespace upcy
