#pragma once

#include <algorithm>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "pscr/metrics.hpp"
#include "pscr/trainer.hpp"

namespace pscr {

enum class ExemplarSelection { UniformRandom, ScoreStratified };

inline std::string selection_to_string(ExemplarSelection s) {
    return s == ExemplarSelection::UniformRandom ? "uniform" : "stratified";
}
inline ExemplarSelection selection_from_string(const std::string& s) {
    if (s == "uniform") return ExemplarSelection::UniformRandom;
    if (s == "stratified") return ExemplarSelection::ScoreStratified;
    throw ValidationError("unknown exemplar selection '" + s + "'");
}

struct VoteConfig {
    int num_exemplars = 10;
    std::uint64_t exemplar_seed = 0;
    ExemplarSelection selection = ExemplarSelection::UniformRandom;
    // Default redraws exemplars per test image from a per-image seed; the
    // shared-set variant uses one draw for all test images.
    bool shared_set = false;
};

inline double reconstruct_score(double delta, double exemplar_score) {
    return delta + exemplar_score;
}

// Exemplar indices into the training set, without replacement.
inline std::vector<std::size_t> select_exemplars(std::size_t train_size,
                                                 const std::vector<double>& train_scores,
                                                 const VoteConfig& cfg,
                                                 std::size_t image_index = 0) {
    if (cfg.num_exemplars < 1 ||
        static_cast<std::size_t>(cfg.num_exemplars) > train_size)
        throw ValidationError("vote: num_exemplars must be in [1, train size]");
    std::size_t n = static_cast<std::size_t>(cfg.num_exemplars);
    if (cfg.selection == ExemplarSelection::ScoreStratified) {
        // quantile-spread picks over the score-sorted training set
        std::vector<std::size_t> order(train_size);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return train_scores[a] < train_scores[b];
        });
        std::vector<std::size_t> out;
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t pos = (n == 1) ? train_size / 2 : k * (train_size - 1) / (n - 1);
            out.push_back(order[pos]);
        }
        return out;
    }
    std::uint64_t seed = cfg.shared_set ? mix_seed(cfg.exemplar_seed, 0xe0e0)
                                        : mix_seed(cfg.exemplar_seed, 0xa000 + image_index);
    Rng rng(seed);
    auto perm = rng.permutation(train_size);
    return std::vector<std::size_t>(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n));
}

struct VoteTerm {
    std::size_t exemplar_index;
    double exemplar_score;
    double delta;
};

struct VoteResult {
    double score = 0.0;
    std::vector<VoteTerm> terms;
};

// Caches exemplar features once per run; the backbone is pure, so cached and
// recomputed features are identical.
class Voter {
  public:
    Voter(const ModelBundle& bundle, const LoadedDataset& train_set, std::size_t dimension)
        : bundle_(bundle), train_set_(train_set), dimension_(dimension) {
        if (bundle.mode != Mode::Contrastive)
            throw ConfigError("vote requires a Contrastive bundle");
        for (std::size_t i = 0; i < train_set.size(); ++i) {
            features_.push_back(extract_image_feature(train_set.images[i], bundle));
            scores_.push_back(train_set.score(i, dimension));
        }
    }

    VoteResult vote(const Tensor& test_image, const VoteConfig& cfg,
                    std::size_t image_index = 0) const {
        auto exemplars = select_exemplars(train_set_.size(), scores_, cfg, image_index);
        Tensor ftest = extract_image_feature(test_image, bundle_);
        VoteResult r;
        double acc = 0.0;
        for (std::size_t j : exemplars) {
            double delta = regress(fuse(ftest, features_[j]), bundle_.head);
            r.terms.push_back({j, scores_[j], delta});
            acc += reconstruct_score(delta, scores_[j]);
        }
        r.score = acc / static_cast<double>(r.terms.size());
        return r;
    }

    const std::vector<double>& train_scores() const { return scores_; }

  private:
    const ModelBundle& bundle_;
    const LoadedDataset& train_set_;
    std::size_t dimension_;
    std::vector<Tensor> features_;
    std::vector<double> scores_;
};

// Convenience single-image entry point.
inline VoteResult vote(const Tensor& test_image, const LoadedDataset& train_set,
                       const ModelBundle& bundle, const VoteConfig& cfg,
                       std::size_t dimension = 0, std::size_t image_index = 0) {
    Voter voter(bundle, train_set, dimension);
    return voter.vote(test_image, cfg, image_index);
}

struct EvalRow {
    std::string path;
    std::vector<double> truths;
    double prediction = 0.0;
    std::vector<VoteTerm> terms;
};

struct DimensionMetrics {
    std::string name;
    double srcc = 0.0;
    double plcc = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::vector<DimensionMetrics> metrics;  // prediction vs each truth dimension
    std::size_t trained_dimension = 0;
};

// Per-test-image voted (or direct) scores plus SRCC/PLCC against every truth
// dimension. Train and test splits must be disjoint.
inline EvalReport evaluate_split(const LoadedDataset& test_set, const LoadedDataset& train_set,
                                 const ModelBundle& bundle, const VoteConfig& cfg,
                                 std::size_t dimension = 0) {
    std::set<std::string> train_paths;
    for (const auto& row : train_set.manifest.rows) train_paths.insert(row.rel_path);
    for (const auto& row : test_set.manifest.rows)
        if (train_paths.count(row.rel_path))
            throw ValidationError("evaluate_split: train/test overlap on '" + row.rel_path + "'");

    EvalReport report;
    report.trained_dimension = dimension;
    if (bundle.mode == Mode::Contrastive) {
        Voter voter(bundle, train_set, dimension);
        for (std::size_t i = 0; i < test_set.size(); ++i) {
            VoteResult r = voter.vote(test_set.images[i], cfg, i);
            report.rows.push_back(
                {test_set.manifest.rows[i].rel_path, test_set.manifest.rows[i].scores, r.score,
                 std::move(r.terms)});
        }
    } else {
        for (std::size_t i = 0; i < test_set.size(); ++i) {
            double s = predict_direct(test_set.images[i], bundle);
            report.rows.push_back(
                {test_set.manifest.rows[i].rel_path, test_set.manifest.rows[i].scores, s, {}});
        }
    }
    for (std::size_t d = 0; d < test_set.manifest.dimensions(); ++d) {
        ScorePairs pairs;
        for (const auto& row : report.rows) {
            pairs.truths.push_back(row.truths[d]);
            pairs.preds.push_back(row.prediction);
        }
        report.metrics.push_back(
            {test_set.manifest.dimension_names[d], srcc(pairs), plcc(pairs)});
    }
    return report;
}

inline void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("report: cannot write " + path.string());
    out.precision(17);
    std::size_t nterms = report.rows.empty() ? 0 : report.rows.front().terms.size();
    out << "path";
    for (std::size_t d = 0; d < report.metrics.size(); ++d)
        out << ",truth_" << report.metrics[d].name;
    out << ",prediction";
    for (std::size_t j = 0; j < nterms; ++j)
        out << ",ex" << j << "_index,ex" << j << "_score,ex" << j << "_delta";
    out << "\n";
    for (const auto& row : report.rows) {
        out << row.path;
        for (double t : row.truths) out << "," << t;
        out << "," << row.prediction;
        for (const auto& t : row.terms)
            out << "," << t.exemplar_index << "," << t.exemplar_score << "," << t.delta;
        out << "\n";
    }
    for (const auto& m : report.metrics)
        out << "# " << m.name << ",SRCC," << m.srcc << ",PLCC," << m.plcc << "\n";
}

}  // namespace pscr
