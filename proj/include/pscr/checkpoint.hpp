#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pscr/model.hpp"

// Checkpoint layout (all integers little-endian):
//   magic "PSCR" | u32 version | u32 header_len | header JSON (UTF-8)
//   then per parameter: u32 name_len | name | u32 rank | rank * u64 dims
//   | numel * f64 payload
// The JSON header carries the architecture and preprocessor so evaluation
// never needs the training config. See docs/checkpoint_format.md.

namespace pscr {

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_f64(std::ostream& out, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    write_u64(out, v);
}

inline std::uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw FormatError("checkpoint: truncated file " + path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t read_u64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (in.gcount() != 8) throw FormatError("checkpoint: truncated file " + path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline double read_f64(std::istream& in, const std::string& path) {
    std::uint64_t v = read_u64(in, path);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

}  // namespace detail

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(ModelBundle& bundle, const std::filesystem::path& path) {
    nlohmann::json header;
    header["backbone"] = {
        {"kind", bundle.backbone_spec.kind == BackboneKind::SmallCnn ? "smallcnn" : "precomputed"},
        {"channels", bundle.backbone_spec.channels},
        {"feature_dim", bundle.backbone_spec.feature_dim},
        {"input_window", bundle.backbone_spec.input_window}};
    header["preprocessor"] = preprocessor_to_string(bundle.preprocessor);
    header["mode"] = mode_to_string(bundle.mode);
    header["hidden"] = bundle.hidden;
    std::string hj = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("checkpoint: cannot write " + path.string());
    out.write("PSCR", 4);
    detail::write_u32(out, kCheckpointVersion);
    detail::write_u32(out, static_cast<std::uint32_t>(hj.size()));
    out.write(hj.data(), static_cast<std::streamsize>(hj.size()));
    for (Parameter* p : bundle.params()) {
        detail::write_u32(out, static_cast<std::uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        detail::write_u32(out, static_cast<std::uint32_t>(p->value.rank()));
        for (std::size_t d : p->value.shape) detail::write_u64(out, d);
        for (double v : p->value.data) detail::write_f64(out, v);
    }
}

inline ModelBundle load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("checkpoint: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, "PSCR", 4) != 0)
        throw FormatError("checkpoint: bad magic in " + path.string());
    std::uint32_t version = detail::read_u32(in, path.string());
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    std::uint32_t hlen = detail::read_u32(in, path.string());
    std::string hj(hlen, '\0');
    in.read(hj.data(), hlen);
    if (in.gcount() != static_cast<std::streamsize>(hlen))
        throw FormatError("checkpoint: truncated header in " + path.string());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hj);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint: bad header JSON: " + std::string(e.what()));
    }

    BackboneSpec bspec;
    bspec.kind = header["backbone"]["kind"] == "smallcnn" ? BackboneKind::SmallCnn
                                                          : BackboneKind::Precomputed;
    bspec.channels = header["backbone"]["channels"].get<std::vector<int>>();
    bspec.feature_dim = header["backbone"]["feature_dim"].get<int>();
    bspec.input_window = header["backbone"]["input_window"].get<int>();
    Preprocessor pp = preprocessor_from_string(header["preprocessor"].get<std::string>());
    Mode mode = mode_from_string(header["mode"].get<std::string>());
    int hidden = header["hidden"].get<int>();

    ModelBundle bundle = make_bundle(bspec, pp, mode, hidden, 0);
    for (Parameter* p : bundle.params()) {
        std::uint32_t nlen = detail::read_u32(in, path.string());
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        if (name != p->name)
            throw FormatError("checkpoint: expected parameter '" + p->name + "', found '" + name +
                              "'");
        std::uint32_t rank = detail::read_u32(in, path.string());
        std::vector<std::size_t> dims(rank);
        for (auto& d : dims) d = static_cast<std::size_t>(detail::read_u64(in, path.string()));
        if (dims != p->value.shape)
            throw FormatError("checkpoint: shape mismatch for '" + name + "'");
        for (double& v : p->value.data) v = detail::read_f64(in, path.string());
    }
    return bundle;
}

}  // namespace pscr
