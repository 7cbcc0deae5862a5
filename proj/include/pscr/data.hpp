#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pscr/rng.hpp"
#include "pscr/tensor.hpp"

namespace pscr {

namespace fs = std::filesystem;

struct ManifestRow {
    std::string rel_path;
    std::vector<double> scores;
};

struct Manifest {
    fs::path root;
    std::vector<std::string> dimension_names;
    std::vector<ManifestRow> rows;

    std::size_t dimensions() const { return dimension_names.size(); }
    std::size_t size() const { return rows.size(); }
    fs::path resolve(std::size_t i) const { return root / rows[i].rel_path; }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

inline double parse_score(const std::string& tok, std::size_t lineno) {
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        throw FormatError("manifest line " + std::to_string(lineno) + ": non-numeric score '" +
                          tok + "'");
    }
    if (pos != tok.size() || !std::isfinite(v))
        throw FormatError("manifest line " + std::to_string(lineno) + ": bad score '" + tok + "'");
    return v;
}

}  // namespace detail

// CSV with header `path,<dim1>[,<dim2>,...]`. Image paths must resolve under
// the manifest's directory.
inline Manifest load_manifest(const fs::path& path, bool check_paths = true) {
    std::ifstream in(path);
    if (!in) throw FormatError("manifest: cannot open " + path.string());
    Manifest m;
    m.root = path.parent_path();
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw FormatError("manifest: empty file " + path.string());
    ++lineno;
    auto header = detail::split_csv_line(line);
    if (header.size() < 2 || header[0] != "path")
        throw FormatError("manifest line 1: header must be path,<dim>[,...]");
    m.dimension_names.assign(header.begin() + 1, header.end());
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cols = detail::split_csv_line(line);
        if (cols.size() != header.size())
            throw FormatError("manifest line " + std::to_string(lineno) + ": expected " +
                              std::to_string(header.size()) + " columns, got " +
                              std::to_string(cols.size()));
        ManifestRow row;
        row.rel_path = cols[0];
        for (std::size_t i = 1; i < cols.size(); ++i)
            row.scores.push_back(detail::parse_score(cols[i], lineno));
        if (check_paths && !fs::exists(m.root / row.rel_path))
            throw FormatError("manifest line " + std::to_string(lineno) +
                              ": image path does not resolve: " + (m.root / row.rel_path).string());
        m.rows.push_back(std::move(row));
    }
    return m;
}

inline void save_manifest(const Manifest& m, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("manifest: cannot write " + path.string());
    out << "path";
    for (const auto& d : m.dimension_names) out << "," << d;
    out << "\n";
    out.precision(17);
    for (const auto& row : m.rows) {
        out << row.rel_path;
        for (double s : row.scores) out << "," << s;
        out << "\n";
    }
}

// ---- PPM (P6, maxval 255) ----

namespace detail {

inline int ppm_next_int(std::istream& in, const std::string& path) {
    // skips whitespace and '#' comments
    int c;
    for (;;) {
        c = in.peek();
        if (c == '#') {
            std::string junk;
            std::getline(in, junk);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v;
    if (!(in >> v)) throw FormatError("ppm: malformed header in " + path);
    return v;
}

}  // namespace detail

// Channels-first [3,H,W] float tensor scaled to [0,1].
inline Tensor load_image(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("ppm: cannot open " + path.string());
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '6') throw FormatError("ppm: bad magic in " + path.string());
    int w = detail::ppm_next_int(in, path.string());
    int h = detail::ppm_next_int(in, path.string());
    int maxval = detail::ppm_next_int(in, path.string());
    if (maxval != 255) throw FormatError("ppm: only maxval 255 supported: " + path.string());
    in.get();  // single whitespace after header
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw FormatError("ppm: truncated pixel data in " + path.string());
    Tensor t = Tensor::zeros({3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    for (std::size_t y = 0; y < static_cast<std::size_t>(h); ++y)
        for (std::size_t x = 0; x < static_cast<std::size_t>(w); ++x)
            for (std::size_t c = 0; c < 3; ++c)
                t.at3(c, y, x) = raw[(y * w + x) * 3 + c] / 255.0;
    return t;
}

// Quantizes [0,1] floats to 8 bits (round-half-up, clamped).
inline void save_image(const Tensor& image, const fs::path& path) {
    require_rank(image, 3, "save_image input");
    if (image.shape[0] != 3) throw DimensionError("save_image: expected 3 channels");
    std::size_t h = image.shape[1], w = image.shape[2];
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("ppm: cannot write " + path.string());
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> raw(h * w * 3);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double v = std::clamp(image.at3(c, y, x), 0.0, 1.0);
                raw[(y * w + x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

// ---- synthetic dataset ----

enum class ScoreFn { BlurLevel, NoiseLevel, Mixed };

inline std::string score_fn_to_string(ScoreFn f) {
    switch (f) {
        case ScoreFn::BlurLevel: return "blur";
        case ScoreFn::NoiseLevel: return "noise";
        default: return "mixed";
    }
}

inline ScoreFn score_fn_from_string(const std::string& s) {
    if (s == "blur") return ScoreFn::BlurLevel;
    if (s == "noise") return ScoreFn::NoiseLevel;
    if (s == "mixed") return ScoreFn::Mixed;
    throw ValidationError("unknown score function '" + s + "'");
}

struct SyntheticSpec {
    int count = 64;
    int side = 64;
    std::uint64_t seed = 0;
    ScoreFn score_fn = ScoreFn::BlurLevel;
};

namespace detail {

// Separable box blur with windows clamped at the borders.
inline Tensor box_blur(const Tensor& img, int radius) {
    if (radius <= 0) return img;
    std::size_t c = img.shape[0], h = img.shape[1], w = img.shape[2];
    Tensor tmp = Tensor::zeros(img.shape);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                int lo = std::max<int>(0, static_cast<int>(x) - radius);
                int hi = std::min<int>(static_cast<int>(w) - 1, static_cast<int>(x) + radius);
                double acc = 0.0;
                for (int xx = lo; xx <= hi; ++xx) acc += img.at3(ch, y, xx);
                tmp.at3(ch, y, x) = acc / (hi - lo + 1);
            }
    Tensor out = Tensor::zeros(img.shape);
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                int lo = std::max<int>(0, static_cast<int>(y) - radius);
                int hi = std::min<int>(static_cast<int>(h) - 1, static_cast<int>(y) + radius);
                double acc = 0.0;
                for (int yy = lo; yy <= hi; ++yy) acc += tmp.at3(ch, yy, x);
                out.at3(ch, y, x) = acc / (hi - lo + 1);
            }
    return out;
}

}  // namespace detail

// Degradation level in [0,1] maps linearly to score in [5,1]; level 0 is
// pristine (score 5.0). Blur arm blends toward a box-blurred copy, noise arm
// adds uniform noise over a smooth base.
inline Manifest gen_synthetic(const SyntheticSpec& spec, const fs::path& out_dir) {
    if (spec.count < 4) throw ValidationError("gen_synthetic: count must be >= 4");
    if (spec.side < 16) throw ValidationError("gen_synthetic: side must be >= 16");
    fs::create_directories(out_dir);
    Manifest m;
    m.root = out_dir;
    m.dimension_names = {"MOS"};
    Rng level_rng(mix_seed(spec.seed, 0x1e5e1));
    auto perm = level_rng.permutation(static_cast<std::size_t>(spec.count));
    int blur_radius = std::max(2, spec.side / 16);
    for (int i = 0; i < spec.count; ++i) {
        double level = static_cast<double>(perm[i]) / static_cast<double>(spec.count - 1);
        double score = 5.0 - 4.0 * level;
        Rng rng(mix_seed(spec.seed, 0x1000 + static_cast<std::uint64_t>(i)));
        std::size_t side = static_cast<std::size_t>(spec.side);
        Tensor img = Tensor::zeros({3, side, side});
        bool blur_arm = spec.score_fn == ScoreFn::BlurLevel ||
                        (spec.score_fn == ScoreFn::Mixed && i % 2 == 0);
        if (blur_arm) {
            for (double& v : img.data) v = rng.uniform();
            Tensor blurred = detail::box_blur(img, blur_radius);
            for (std::size_t k = 0; k < img.numel(); ++k)
                img.data[k] = (1.0 - level) * img.data[k] + level * blurred.data[k];
        } else {
            // smooth base: per-channel sinusoidal gradient
            for (std::size_t c = 0; c < 3; ++c) {
                double fy = rng.uniform(0.5, 2.0), fx = rng.uniform(0.5, 2.0);
                double ph = rng.uniform(0.0, 6.283185307179586);
                for (std::size_t y = 0; y < side; ++y)
                    for (std::size_t x = 0; x < side; ++x)
                        img.at3(c, y, x) =
                            0.5 + 0.35 * std::sin(fy * y * 6.283185307179586 / side +
                                                  fx * x * 6.283185307179586 / side + ph);
            }
            for (double& v : img.data)
                v = std::clamp(v + level * 0.5 * (2.0 * rng.uniform() - 1.0), 0.0, 1.0);
        }
        char name[32];
        std::snprintf(name, sizeof(name), "img_%04d.ppm", i);
        save_image(img, out_dir / name);
        m.rows.push_back({name, {score}});
    }
    save_manifest(m, out_dir / "manifest.csv");
    std::ofstream echo(out_dir / "spec.txt");
    echo << "count = " << spec.count << "\nside = " << spec.side << "\nseed = " << spec.seed
         << "\nscore_fn = " << score_fn_to_string(spec.score_fn) << "\n";
    return m;
}

// ---- deterministic split ----

inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw ValidationError("split: ratio must be in (0,1)");
    Rng rng(mix_seed(seed, 0x5911));
    auto perm = rng.permutation(n);
    std::size_t n_train = static_cast<std::size_t>(std::floor(ratio * n + 0.5));
    if (n_train == 0 || n_train == n)
        throw ValidationError("split: degenerate split (one side empty)");
    return {{perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train)},
            {perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end()}};
}

inline std::pair<Manifest, Manifest> split(const Manifest& m, double ratio, std::uint64_t seed) {
    auto [train_idx, test_idx] = split_indices(m.size(), ratio, seed);
    Manifest train{m.root, m.dimension_names, {}}, test{m.root, m.dimension_names, {}};
    for (std::size_t i : train_idx) train.rows.push_back(m.rows[i]);
    for (std::size_t i : test_idx) test.rows.push_back(m.rows[i]);
    return {train, test};
}

// Split by explicit row indices into the source manifest.
inline Manifest select_rows(const Manifest& m, const std::vector<std::size_t>& idx) {
    Manifest out{m.root, m.dimension_names, {}};
    for (std::size_t i : idx) {
        if (i >= m.size()) throw ValidationError("select_rows: index out of range");
        out.rows.push_back(m.rows[i]);
    }
    return out;
}

// ---- precomputed feature table ----

inline std::map<std::string, Tensor> load_features(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("features: cannot open " + path.string());
    std::map<std::string, Tensor> out;
    std::string line;
    std::size_t lineno = 0, dim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cols = detail::split_csv_line(line);
        if (lineno == 1 && cols.size() >= 2 && cols[0] == "path") continue;  // optional header
        if (cols.size() < 2)
            throw FormatError("features line " + std::to_string(lineno) + ": need path,f1,...");
        std::vector<double> vals;
        for (std::size_t i = 1; i < cols.size(); ++i)
            vals.push_back(detail::parse_score(cols[i], lineno));
        if (dim == 0) dim = vals.size();
        if (vals.size() != dim)
            throw FormatError("features line " + std::to_string(lineno) +
                              ": inconsistent dimension " + std::to_string(vals.size()) +
                              " (expected " + std::to_string(dim) + ")");
        out[cols[0]] = Tensor::vector1d(std::move(vals));
    }
    if (out.empty()) throw FormatError("features: no rows in " + path.string());
    return out;
}

inline void save_features(const std::map<std::string, Tensor>& feats, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("features: cannot write " + path.string());
    out.precision(17);
    for (const auto& [k, v] : feats) {
        out << k;
        for (double x : v.data) out << "," << x;
        out << "\n";
    }
}

}  // namespace pscr
