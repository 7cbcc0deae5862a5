#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "pscr/errors.hpp"

namespace pscr {

// Dense row-major tensor of 64-bit floats.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {}

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (auto s : shape) n *= s;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> shape) {
        std::size_t n = count(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0));
    }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        std::size_t n = count(shape);
        return Tensor(std::move(shape), std::vector<double>(n, v));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor vector1d(std::vector<double> d) {
        std::size_t n = d.size();
        return Tensor({n}, std::move(d));
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    // [C,H,W] indexing
    double& at3(std::size_t c, std::size_t h, std::size_t w) {
        return data[(c * shape[1] + h) * shape[2] + w];
    }
    double at3(std::size_t c, std::size_t h, std::size_t w) const {
        return data[(c * shape[1] + h) * shape[2] + w];
    }

    // [R,C] indexing
    double& at2(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at2(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const Tensor& o) const { return shape == o.shape && data == o.data; }
};

inline std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

inline void require_shape(const Tensor& t, const std::vector<std::size_t>& shape,
                          const std::string& what) {
    if (t.shape != shape)
        throw DimensionError(what + ": expected shape " + shape_str(shape) + ", got " +
                             shape_str(t.shape));
}

inline void require_rank(const Tensor& t, std::size_t rank, const std::string& what) {
    if (t.rank() != rank)
        throw DimensionError(what + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_str(t.shape));
}

}  // namespace pscr
