#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "pscr/tensor.hpp"

namespace pscr {

// Start-index list S and window size s for the overlapping sliding-window grid.
struct SamplerSpec {
    std::vector<int> start_indices;
    int window = 0;

    void validate(std::size_t side) const {
        if (start_indices.empty())
            throw ValidationError("sampler: start-index list is empty");
        if (window <= 0) throw ValidationError("sampler: window must be positive");
        int prev = -1;
        for (int s : start_indices) {
            if (s < 0) throw ValidationError("sampler: negative start index " + std::to_string(s));
            if (s <= prev)
                throw ValidationError("sampler: start indices must be strictly increasing");
            prev = s;
            if (static_cast<std::size_t>(s + window) > side)
                throw ValidationError("sampler: start index " + std::to_string(s) + " + window " +
                                      std::to_string(window) + " exceeds image side " +
                                      std::to_string(side));
        }
    }
};

struct PatchSet {
    std::vector<Tensor> patches;
    std::vector<std::pair<int, int>> origins;  // (row, col)
    std::array<std::size_t, 3> source_shape;
};

struct Resize {
    int target = 0;
};
struct NonOverlapGrid {
    int patch = 0;
};
struct OverlapSample {
    SamplerSpec spec;
};

using Preprocessor = std::variant<Resize, NonOverlapGrid, OverlapSample>;

// Algorithm: for i in S, for j in S, append I[:, i:i+s, j:j+s]. Bit-exact copies.
inline PatchSet sample_patches(const Tensor& image, const SamplerSpec& spec) {
    require_rank(image, 3, "sample_patches input");
    std::size_t c = image.shape[0], h = image.shape[1], w = image.shape[2];
    if (h != w)
        throw ValidationError("sample_patches: image must be square, got " +
                              shape_str(image.shape));
    spec.validate(h);
    std::size_t s = static_cast<std::size_t>(spec.window);
    PatchSet out;
    out.source_shape = {c, h, w};
    for (int i : spec.start_indices) {
        for (int j : spec.start_indices) {
            Tensor p = Tensor::zeros({c, s, s});
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t y = 0; y < s; ++y)
                    for (std::size_t x = 0; x < s; ++x)
                        p.at3(ch, y, x) = image.at3(ch, i + y, j + x);
            out.patches.push_back(std::move(p));
            out.origins.emplace_back(i, j);
        }
    }
    return out;
}

// Disjoint tiles in row-major order; requires exact divisibility.
inline PatchSet nonoverlap_grid(const Tensor& image, int patch) {
    require_rank(image, 3, "nonoverlap_grid input");
    if (patch <= 0) throw ValidationError("nonoverlap_grid: patch must be positive");
    std::size_t c = image.shape[0], h = image.shape[1], w = image.shape[2];
    std::size_t p = static_cast<std::size_t>(patch);
    if (h % p != 0 || w % p != 0)
        throw DimensionError("nonoverlap_grid: patch " + std::to_string(patch) +
                             " does not divide image dims " + shape_str(image.shape));
    PatchSet out;
    out.source_shape = {c, h, w};
    for (std::size_t i = 0; i < h; i += p) {
        for (std::size_t j = 0; j < w; j += p) {
            Tensor t = Tensor::zeros({c, p, p});
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t y = 0; y < p; ++y)
                    for (std::size_t x = 0; x < p; ++x)
                        t.at3(ch, y, x) = image.at3(ch, i + y, j + x);
            out.patches.push_back(std::move(t));
            out.origins.emplace_back(static_cast<int>(i), static_cast<int>(j));
        }
    }
    return out;
}

// Separable bilinear resize with corner-aligned sampling.
inline Tensor resize_bilinear(const Tensor& image, int target) {
    require_rank(image, 3, "resize_bilinear input");
    if (target < 1) throw ValidationError("resize_bilinear: target must be >= 1");
    std::size_t c = image.shape[0], h = image.shape[1], w = image.shape[2];
    if (h < 2 || w < 2)
        throw ValidationError("resize_bilinear: source must be at least 2x2");
    std::size_t t = static_cast<std::size_t>(target);
    Tensor out = Tensor::zeros({c, t, t});
    double sy = t > 1 ? static_cast<double>(h - 1) / static_cast<double>(t - 1) : 0.0;
    double sx = t > 1 ? static_cast<double>(w - 1) / static_cast<double>(t - 1) : 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t oy = 0; oy < t; ++oy) {
            double fy = oy * sy;
            std::size_t y0 = static_cast<std::size_t>(fy);
            std::size_t y1 = std::min(y0 + 1, h - 1);
            double wy = fy - y0;
            for (std::size_t ox = 0; ox < t; ++ox) {
                double fx = ox * sx;
                std::size_t x0 = static_cast<std::size_t>(fx);
                std::size_t x1 = std::min(x0 + 1, w - 1);
                double wx = fx - x0;
                double v = (1 - wy) * ((1 - wx) * image.at3(ch, y0, x0) +
                                       wx * image.at3(ch, y0, x1)) +
                           wy * ((1 - wx) * image.at3(ch, y1, x0) +
                                 wx * image.at3(ch, y1, x1));
                out.at3(ch, oy, ox) = v;
            }
        }
    }
    return out;
}

struct CoverageReport {
    double covered_fraction = 0.0;
    int max_multiplicity = 0;
};

// Brute-force pixel coverage of the sampling grid.
inline CoverageReport coverage_report(const SamplerSpec& spec, int side) {
    spec.validate(static_cast<std::size_t>(side));
    std::vector<int> mult(static_cast<std::size_t>(side) * side, 0);
    for (int i : spec.start_indices)
        for (int j : spec.start_indices)
            for (int y = i; y < i + spec.window; ++y)
                for (int x = j; x < j + spec.window; ++x) mult[y * side + x] += 1;
    CoverageReport r;
    std::size_t covered = 0;
    for (int m : mult) {
        if (m > 0) ++covered;
        r.max_multiplicity = std::max(r.max_multiplicity, m);
    }
    r.covered_fraction = static_cast<double>(covered) / static_cast<double>(mult.size());
    return r;
}

// Runs the configured preprocessor; resize yields a single "patch".
inline std::vector<Tensor> apply_preprocessor(const Tensor& image, const Preprocessor& pp) {
    if (std::holds_alternative<Resize>(pp))
        return {resize_bilinear(image, std::get<Resize>(pp).target)};
    if (std::holds_alternative<NonOverlapGrid>(pp))
        return nonoverlap_grid(image, std::get<NonOverlapGrid>(pp).patch).patches;
    return sample_patches(image, std::get<OverlapSample>(pp).spec).patches;
}

// Side length the backbone sees after preprocessing.
inline int preprocessor_window(const Preprocessor& pp) {
    if (std::holds_alternative<Resize>(pp)) return std::get<Resize>(pp).target;
    if (std::holds_alternative<NonOverlapGrid>(pp)) return std::get<NonOverlapGrid>(pp).patch;
    return std::get<OverlapSample>(pp).spec.window;
}

inline std::string preprocessor_to_string(const Preprocessor& pp) {
    std::ostringstream os;
    if (std::holds_alternative<Resize>(pp)) {
        os << "resize:" << std::get<Resize>(pp).target;
    } else if (std::holds_alternative<NonOverlapGrid>(pp)) {
        os << "grid:" << std::get<NonOverlapGrid>(pp).patch;
    } else {
        const auto& s = std::get<OverlapSample>(pp).spec;
        os << "overlap:";
        for (std::size_t i = 0; i < s.start_indices.size(); ++i) {
            if (i) os << ",";
            os << s.start_indices[i];
        }
        os << "x" << s.window;
    }
    return os.str();
}

inline Preprocessor preprocessor_from_string(const std::string& text) {
    auto colon = text.find(':');
    if (colon == std::string::npos)
        throw ValidationError("preprocessor: expected kind:params, got '" + text + "'");
    std::string kind = text.substr(0, colon);
    std::string rest = text.substr(colon + 1);
    try {
        if (kind == "resize") return Resize{std::stoi(rest)};
        if (kind == "grid") return NonOverlapGrid{std::stoi(rest)};
        if (kind == "overlap") {
            auto xpos = rest.find('x');
            if (xpos == std::string::npos)
                throw ValidationError("preprocessor: overlap needs 'indices x window'");
            SamplerSpec spec;
            spec.window = std::stoi(rest.substr(xpos + 1));
            std::istringstream is(rest.substr(0, xpos));
            std::string tok;
            while (std::getline(is, tok, ',')) spec.start_indices.push_back(std::stoi(tok));
            return OverlapSample{spec};
        }
    } catch (const std::invalid_argument&) {
        throw ValidationError("preprocessor: bad number in '" + text + "'");
    }
    throw ValidationError("preprocessor: unknown kind '" + kind + "'");
}

}  // namespace pscr
