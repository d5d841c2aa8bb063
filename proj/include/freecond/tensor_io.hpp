#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iterator>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "freecond/errors.hpp"
#include "freecond/toynet.hpp"
#include "freecond/util.hpp"

namespace freecond {

inline constexpr int kTensorFormatVersion = 1;

/*===================================== single tensor =====================================*/

// File layout: one line of JSON (shape, dtype, layout, endianness, version),
// then the raw float32 little-endian payload. Values are float32 on disk;
// everything in memory is double, but generated data is float32-quantized at
// birth, so save -> load is bit-exact for it.
inline void save_tensor(const std::filesystem::path& path, const std::vector<int>& shape,
                        std::span<const double> values) {
    std::size_t expect = 1;
    for (int d : shape) {
        if (d < 1) throw DimensionError("save_tensor: non-positive shape entry");
        expect *= static_cast<std::size_t>(d);
    }
    if (expect != values.size())
        throw DimensionError("save_tensor: shape wants " + std::to_string(expect) +
                             " values, got " + std::to_string(values.size()));
    nlohmann::json header;
    header["dtype"] = "float32";
    header["endianness"] = "little";
    header["layout"] = "row-major";
    header["shape"] = shape;
    header["version"] = kTensorFormatVersion;

    std::string head = header.dump();
    head += '\n';
    std::vector<unsigned char> payload = pack_f32_le(values);
    std::vector<unsigned char> blob(head.begin(), head.end());
    blob.insert(blob.end(), payload.begin(), payload.end());
    write_file_atomic(path, std::span<const unsigned char>(blob));
}

struct Tensor {
    std::vector<int> shape;
    std::vector<double> values;
};

inline Tensor load_tensor(const std::filesystem::path& path) {
    std::vector<unsigned char> bytes = read_file_bytes(path);
    auto nl = std::find(bytes.begin(), bytes.end(), static_cast<unsigned char>('\n'));
    if (nl == bytes.end())
        throw IntegrityError("tensor " + path.string() + ": missing header line");
    std::string head(bytes.begin(), nl);

    nlohmann::json header = nlohmann::json::parse(head, nullptr, false);
    if (header.is_discarded())
        throw IntegrityError("tensor " + path.string() + ": unparseable header");
    if (!header.is_object() || !header.contains("shape") || !header.contains("dtype"))
        throw IntegrityError("tensor " + path.string() + ": incomplete header");
    if (header["dtype"] != "float32" || header.value("endianness", "") != "little" ||
        header.value("layout", "") != "row-major")
        throw IntegrityError("tensor " + path.string() + ": unsupported dtype/layout");
    if (header.value("version", 0) != kTensorFormatVersion)
        throw IntegrityError("tensor " + path.string() + ": unsupported format version");

    Tensor t;
    for (const auto& d : header["shape"]) {
        if (!d.is_number_integer() || d.get<int>() < 1)
            throw IntegrityError("tensor " + path.string() + ": bad shape entry");
        t.shape.push_back(d.get<int>());
    }
    std::size_t expect = 1;
    for (int d : t.shape) expect *= static_cast<std::size_t>(d);
    std::size_t payload = bytes.size() - (std::distance(bytes.begin(), nl) + 1);
    if (payload != expect * 4)
        throw IntegrityError("tensor " + path.string() + ": payload is " +
                             std::to_string(payload) + " bytes, header shape wants " +
                             std::to_string(expect * 4));
    t.values = unpack_f32_le(std::span<const unsigned char>(
        bytes.data() + (std::distance(bytes.begin(), nl) + 1), payload));
    return t;
}

/*===================================== weights set =====================================*/

namespace detail {

inline nlohmann::json net_config_json(const NetConfig& c) {
    nlohmann::json j;
    j["latent_channels"] = c.latent_channels;
    j["feature_channels"] = c.feature_channels;
    j["text_len"] = c.text_len;
    j["latent_factor"] = c.latent_factor;
    j["latent_height"] = c.latent_height;
    j["latent_width"] = c.latent_width;
    j["timesteps"] = c.timesteps;
    j["seed"] = c.seed;
    return j;
}

inline NetConfig net_config_from_json(const nlohmann::json& j, const std::string& what) {
    NetConfig c;
    try {
        c.latent_channels = j.at("latent_channels").get<int>();
        c.feature_channels = j.at("feature_channels").get<int>();
        c.text_len = j.at("text_len").get<int>();
        c.latent_factor = j.at("latent_factor").get<int>();
        c.latent_height = j.at("latent_height").get<int>();
        c.latent_width = j.at("latent_width").get<int>();
        c.timesteps = j.at("timesteps").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(what + ": bad config block (" + e.what() + ")");
    }
    return c;
}

}  // namespace detail

// One tensor file per weight plus manifest.json recording the config, the
// seed, and per-file checksums. The manifest is the integrity anchor: loads
// verify every checksum, so silent corruption cannot slip into a run.
inline void save_weights(const std::filesystem::path& dir, const NetWeights& w) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["format_version"] = kTensorFormatVersion;
    manifest["config"] = detail::net_config_json(w.config);
    manifest["tensors"] = nlohmann::json::array();
    w.for_each_tensor([&](const std::string& name, const std::vector<int>& shape,
                          const std::vector<double>& values) {
        std::string file = name + ".tensor";
        save_tensor(dir / file, shape, values);
        nlohmann::json entry;
        entry["name"] = name;
        entry["file"] = file;
        entry["shape"] = shape;
        entry["fnv1a64"] = to_hex16(checksum_file(dir / file));
        manifest["tensors"].push_back(entry);
    });
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline NetWeights load_weights(const std::filesystem::path& dir) {
    nlohmann::json manifest =
        nlohmann::json::parse(read_file_text(dir / "manifest.json"), nullptr, false);
    if (manifest.is_discarded())
        throw IntegrityError("weights " + dir.string() + ": unparseable manifest.json");
    if (manifest.value("format_version", 0) != kTensorFormatVersion)
        throw IntegrityError("weights " + dir.string() + ": unsupported format version");

    NetWeights w;
    w.config = detail::net_config_from_json(manifest["config"], "weights " + dir.string());
    w.config.validate();
    w.allocate();

    std::map<std::string, nlohmann::json> entries;
    for (const auto& e : manifest["tensors"]) entries[e.value("name", "")] = e;

    w.for_each_tensor([&](const std::string& name, const std::vector<int>& shape,
                          std::vector<double>& values) {
        auto it = entries.find(name);
        if (it == entries.end())
            throw IntegrityError("weights " + dir.string() + ": manifest missing tensor '" +
                                 name + "'");
        const nlohmann::json& e = it->second;
        std::filesystem::path file = dir / e.value("file", name + ".tensor");
        std::string want = e.value("fnv1a64", "");
        if (to_hex16(checksum_file(file)) != want)
            throw IntegrityError("weights: checksum mismatch for " + file.string());
        Tensor t = load_tensor(file);
        if (t.shape != shape)
            throw IntegrityError("weights: tensor '" + name + "' has unexpected shape");
        if (t.values.size() != values.size())
            throw IntegrityError("weights: tensor '" + name + "' has unexpected size");
        values = std::move(t.values);
    });
    return w;
}

/*===================================== grid helpers =====================================*/

inline void save_latent(const std::filesystem::path& path, const LatentGrid& z) {
    save_tensor(path, {z.channels, z.height, z.width},
                std::span<const double>(z.values.data(), z.values.size()));
}

inline LatentGrid load_latent(const std::filesystem::path& path) {
    Tensor t = load_tensor(path);
    if (t.shape.size() != 3)
        throw IntegrityError("latent " + path.string() + ": expected rank 3, got rank " +
                             std::to_string(t.shape.size()));
    LatentGrid z(t.shape[0], t.shape[1], t.shape[2]);
    z.values = std::move(t.values);
    return z;
}

inline void save_mask_tensor(const std::filesystem::path& path, const MaskGrid& m) {
    save_tensor(path, {m.height, m.width},
                std::span<const double>(m.values.data(), m.values.size()));
}

inline MaskGrid load_mask_tensor(const std::filesystem::path& path) {
    Tensor t = load_tensor(path);
    if (t.shape.size() != 2)
        throw IntegrityError("mask " + path.string() + ": expected rank 2, got rank " +
                             std::to_string(t.shape.size()));
    MaskGrid m(t.shape[0], t.shape[1]);
    m.values = std::move(t.values);
    return m;
}

// FNV over the float32 byte stream of all tensors in declaration order; the
// same digest whether the weights came from gen_weights or from disk.
inline std::uint64_t weight_stream_checksum(const NetWeights& w) {
    Fnv1a64 h;
    w.for_each_tensor([&](const std::string&, const std::vector<int>&,
                          const std::vector<double>& values) {
        std::vector<unsigned char> bytes = pack_f32_le(values);
        h.update(bytes.data(), bytes.size());
    });
    return h.digest();
}

}  // namespace freecond
