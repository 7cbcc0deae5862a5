#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "pscr/checkpoint.hpp"
#include "pscr/data.hpp"
#include "pscr/model.hpp"

namespace pscr {

// The four method variants: direct regression baseline, plus patch sampling,
// plus contrastive regression, plus both.
enum class Arm { FR, FR_PS, FR_CR, FR_PSCR };

inline std::string arm_to_string(Arm a) {
    switch (a) {
        case Arm::FR: return "FR";
        case Arm::FR_PS: return "FR_PS";
        case Arm::FR_CR: return "FR_CR";
        default: return "FR_PSCR";
    }
}

inline Arm arm_from_string(const std::string& s) {
    if (s == "FR") return Arm::FR;
    if (s == "FR_PS") return Arm::FR_PS;
    if (s == "FR_CR") return Arm::FR_CR;
    if (s == "FR_PSCR") return Arm::FR_PSCR;
    throw ValidationError("unknown arm '" + s + "' (expected FR|FR_PS|FR_CR|FR_PSCR)");
}

inline Mode arm_mode(Arm a) {
    return (a == Arm::FR_CR || a == Arm::FR_PSCR) ? Mode::Contrastive : Mode::Direct;
}

inline bool arm_uses_sampling(Arm a) { return a == Arm::FR_PS || a == Arm::FR_PSCR; }

struct TrainConfig {
    int batch_size = 8;
    int epochs = 200;
    std::uint64_t seed = 0;
    AdamConfig adam;
    Arm arm = Arm::FR_PSCR;
    int exemplars_per_query = 1;
    std::size_t dimension = 0;
    int early_stop_patience = 20;
    bool train_backbone = true;  // fine-tune vs freeze; the method fixes neither

    void validate() const {
        if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
        if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
        if (exemplars_per_query < 1)
            throw ValidationError("train: exemplars_per_query must be >= 1");
    }
};

// Manifest rows plus their decoded tensors (pixel images, or feature vectors
// for a Precomputed backbone).
struct LoadedDataset {
    Manifest manifest;
    std::vector<Tensor> images;

    std::size_t size() const { return images.size(); }
    double score(std::size_t i, std::size_t dim) const { return manifest.rows[i].scores[dim]; }
};

inline LoadedDataset load_dataset(const Manifest& m,
                                  const std::map<std::string, Tensor>* features = nullptr) {
    LoadedDataset ds;
    ds.manifest = m;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (features) {
            auto it = features->find(m.rows[i].rel_path);
            if (it == features->end())
                throw ValidationError("no precomputed feature for '" + m.rows[i].rel_path + "'");
            ds.images.push_back(it->second);
        } else {
            ds.images.push_back(load_image(m.resolve(i)));
        }
    }
    return ds;
}

struct QueryExemplarPair {
    std::size_t query;
    std::size_t exemplar;
};

struct PairBatch {
    std::vector<QueryExemplarPair> pairs;
};

// Every image appears exactly once per epoch as a query (in seeded shuffled
// order); exemplars are drawn uniformly excluding the query itself.
inline std::vector<QueryExemplarPair> make_pairs(std::size_t n, std::uint64_t epoch_seed,
                                                 int exemplars_per_query = 1) {
    if (n < 2) throw ValidationError("make_pairs: need at least 2 training images");
    Rng rng(epoch_seed);
    auto order = rng.permutation(n);
    std::vector<QueryExemplarPair> out;
    for (std::size_t q : order) {
        for (int k = 0; k < exemplars_per_query; ++k) {
            std::size_t e = rng.index(n - 1);
            if (e >= q) ++e;  // skip the query itself
            out.push_back({q, e});
        }
    }
    return out;
}

inline std::vector<PairBatch> batch_pairs(const std::vector<QueryExemplarPair>& pairs,
                                          int batch_size) {
    std::vector<PairBatch> out;
    for (std::size_t i = 0; i < pairs.size(); i += batch_size) {
        PairBatch b;
        for (std::size_t j = i; j < std::min(pairs.size(), i + batch_size); ++j)
            b.pairs.push_back(pairs[j]);
        out.push_back(std::move(b));
    }
    return out;
}

// Forward-only loss evaluation; used by tests and for loss reporting.

inline double contrastive_loss(const PairBatch& batch, const LoadedDataset& ds,
                               const ModelBundle& bundle, std::size_t dim) {
    double acc = 0.0;
    for (const auto& p : batch.pairs) {
        double delta = predict_relative(ds.images[p.query], ds.images[p.exemplar], bundle);
        double target = ds.score(p.query, dim) - ds.score(p.exemplar, dim);
        acc += (delta - target) * (delta - target);
    }
    return acc / static_cast<double>(batch.pairs.size());
}

inline double direct_loss(const std::vector<std::size_t>& batch, const LoadedDataset& ds,
                          const ModelBundle& bundle, std::size_t dim) {
    double acc = 0.0;
    for (std::size_t i : batch) {
        double s = predict_direct(ds.images[i], bundle);
        double d = s - ds.score(i, dim);
        acc += d * d;
    }
    return acc / static_cast<double>(batch.size());
}

struct TrainResult {
    ModelBundle bundle;
    std::vector<double> history;  // mean train loss per epoch
};

// Seeded end-to-end training; (seed, data, config) fully determine the
// parameter trajectory.
inline TrainResult train(const LoadedDataset& train_set, const TrainConfig& cfg,
                         const BackboneSpec& bspec, const Preprocessor& pp, int hidden = 64) {
    cfg.validate();
    if (train_set.size() < 2) throw ValidationError("train: need at least 2 training images");
    if (cfg.dimension >= train_set.manifest.dimensions())
        throw ValidationError("train: score dimension out of range");
    Mode mode = arm_mode(cfg.arm);
    TrainResult result;
    result.bundle = make_bundle(bspec, pp, mode, hidden, cfg.seed);
    ModelBundle& bundle = result.bundle;
    auto params = bundle.params();

    double best = std::numeric_limits<double>::infinity();
    int stale = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::uint64_t epoch_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch));
        double epoch_loss = 0.0;
        std::size_t epoch_terms = 0;
        if (mode == Mode::Contrastive) {
            auto pairs = make_pairs(train_set.size(), epoch_seed, cfg.exemplars_per_query);
            auto batches = batch_pairs(pairs, cfg.batch_size);
            for (std::size_t bi = 0; bi < batches.size(); ++bi) {
                const auto& batch = batches[bi];
                zero_grads(params);
                double bn = static_cast<double>(batch.pairs.size());
                for (const auto& pr : batch.pairs) {
                    PairTrace tr;
                    double delta = predict_relative(train_set.images[pr.query],
                                                    train_set.images[pr.exemplar], bundle, &tr);
                    double target = train_set.score(pr.query, cfg.dimension) -
                                    train_set.score(pr.exemplar, cfg.dimension);
                    double diff = delta - target;
                    epoch_loss += diff * diff;
                    ++epoch_terms;
                    predict_relative_backward(bundle, tr, 2.0 * diff / bn, cfg.train_backbone);
                }
                if (!std::isfinite(epoch_loss))
                    throw ValidationError("train: non-finite loss at epoch " +
                                          std::to_string(epoch) + ", batch " +
                                          std::to_string(bi));
                adam_step(params, cfg.adam);
            }
        } else {
            Rng rng(epoch_seed);
            auto order = rng.permutation(train_set.size());
            for (std::size_t i0 = 0; i0 < order.size();
                 i0 += static_cast<std::size_t>(cfg.batch_size)) {
                std::size_t i1 =
                    std::min(order.size(), i0 + static_cast<std::size_t>(cfg.batch_size));
                zero_grads(params);
                double bn = static_cast<double>(i1 - i0);
                for (std::size_t i = i0; i < i1; ++i) {
                    DirectTrace tr;
                    double s = predict_direct(train_set.images[order[i]], bundle, &tr);
                    double diff = s - train_set.score(order[i], cfg.dimension);
                    epoch_loss += diff * diff;
                    ++epoch_terms;
                    predict_direct_backward(bundle, tr, 2.0 * diff / bn, cfg.train_backbone);
                }
                if (!std::isfinite(epoch_loss))
                    throw ValidationError("train: non-finite loss at epoch " +
                                          std::to_string(epoch) + ", item " + std::to_string(i0));
                adam_step(params, cfg.adam);
            }
        }
        epoch_loss /= static_cast<double>(epoch_terms);
        result.history.push_back(epoch_loss);
        if (epoch_loss < best - 1e-15) {
            best = epoch_loss;
            stale = 0;
        } else if (++stale >= cfg.early_stop_patience) {
            break;
        }
    }
    return result;
}

}  // namespace pscr
