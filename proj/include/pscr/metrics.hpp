#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "pscr/errors.hpp"

namespace pscr {

struct ScorePairs {
    std::vector<double> truths;
    std::vector<double> preds;
};

// 1-based ranks; ties get the mean of the rank positions they occupy.
inline std::vector<double> rank_average(const std::vector<double>& values) {
    if (values.empty()) throw ValidationError("rank_average: empty input");
    std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        double r = 0.5 * static_cast<double>(i + 1 + j + 1);  // mean of positions i+1..j+1
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

namespace detail {

inline bool all_equal(const std::vector<double>& v) {
    for (double x : v)
        if (x != v.front()) return false;
    return true;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    std::size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        throw UndefinedCorrelationError("pearson: zero-variance input vector");
    return sab / std::sqrt(saa * sbb);
}

inline void check_pairs(const ScorePairs& p) {
    if (p.truths.size() != p.preds.size())
        throw DimensionError("score pairs: length mismatch");
    if (p.truths.size() < 2) throw ValidationError("score pairs: need at least 2 entries");
    if (all_equal(p.truths))
        throw UndefinedCorrelationError("srcc/plcc: all truths identical");
    if (all_equal(p.preds))
        throw UndefinedCorrelationError("srcc/plcc: all predictions identical");
}

}  // namespace detail

// Spearman rank correlation: Pearson of average ranks. Equals the
// 1 - 6*sum(d^2)/(N(N^2-1)) closed form exactly when there are no ties.
inline double srcc(const ScorePairs& pairs) {
    detail::check_pairs(pairs);
    return detail::pearson(rank_average(pairs.truths), rank_average(pairs.preds));
}

// Closed-form Spearman; valid only for tie-free inputs. Kept as an
// independent cross-check route for srcc.
inline double srcc_closed_form(const ScorePairs& pairs) {
    detail::check_pairs(pairs);
    auto rt = rank_average(pairs.truths);
    auto rp = rank_average(pairs.preds);
    double n = static_cast<double>(rt.size());
    double sd2 = 0.0;
    for (std::size_t i = 0; i < rt.size(); ++i) {
        double d = rt[i] - rp[i];
        sd2 += d * d;
    }
    return 1.0 - 6.0 * sd2 / (n * (n * n - 1.0));
}

// Pearson linear correlation.
inline double plcc(const ScorePairs& pairs) {
    detail::check_pairs(pairs);
    return detail::pearson(pairs.truths, pairs.preds);
}

}  // namespace pscr
