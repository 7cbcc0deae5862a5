#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pscr/ops.hpp"
#include "pscr/preprocessing.hpp"
#include "pscr/rng.hpp"

namespace pscr {

enum class BackboneKind { SmallCnn, Precomputed };
enum class Mode { Direct, Contrastive };

inline std::string mode_to_string(Mode m) {
    return m == Mode::Direct ? "direct" : "contrastive";
}
inline Mode mode_from_string(const std::string& s) {
    if (s == "direct") return Mode::Direct;
    if (s == "contrastive") return Mode::Contrastive;
    throw ValidationError("unknown mode '" + s + "'");
}

struct BackboneSpec {
    BackboneKind kind = BackboneKind::SmallCnn;
    std::vector<int> channels = {8, 16, 32};
    int feature_dim = 32;  // == channels.back() for SmallCnn
    int input_window = 30;

    void validate() const {
        if (feature_dim <= 0) throw ValidationError("backbone: feature_dim must be positive");
        if (kind == BackboneKind::SmallCnn) {
            if (channels.empty()) throw ValidationError("backbone: channel list is empty");
            if (feature_dim != channels.back())
                throw ValidationError("backbone: feature_dim must equal last channel count");
        }
    }
};

// Blocks of (3x3 conv -> ReLU -> 2x2 maxpool), then global average pool.
class SmallCnn {
  public:
    SmallCnn() = default;

    SmallCnn(const std::vector<int>& channels, int window) {
        // Check the spatial chain up front: each block needs >= 3 pixels for
        // the conv and an even size for the pool.
        int size = window;
        for (std::size_t i = 0; i < channels.size(); ++i) {
            if (size < 3)
                throw DimensionError("SmallCnn: window " + std::to_string(window) +
                                     " too small for block " + std::to_string(i + 1));
            size -= 2;
            if (size % 2 != 0)
                throw DimensionError("SmallCnn: window " + std::to_string(window) +
                                     " gives odd size " + std::to_string(size) +
                                     " before pool in block " + std::to_string(i + 1));
            size /= 2;
        }
        int cin = 3;
        for (std::size_t i = 0; i < channels.size(); ++i) {
            int cout = channels[i];
            std::string tag = "cnn.block" + std::to_string(i + 1);
            conv_w_.emplace_back(tag + ".w",
                                 Tensor::zeros({static_cast<std::size_t>(cout),
                                                static_cast<std::size_t>(cin), 3, 3}));
            conv_b_.emplace_back(tag + ".b", Tensor::zeros({static_cast<std::size_t>(cout)}));
            cin = cout;
        }
        window_ = window;
    }

    void init(std::uint64_t seed) {
        Rng rng(mix_seed(seed, 0xcc11));
        for (std::size_t i = 0; i < conv_w_.size(); ++i) {
            auto& w = conv_w_[i].value;
            double fan_in = static_cast<double>(w.shape[1] * 9);
            double fan_out = static_cast<double>(w.shape[0] * 9);
            double bound = std::sqrt(6.0 / (fan_in + fan_out));
            for (double& v : w.data) v = rng.uniform(-bound, bound);
            conv_b_[i].value.fill(0.0);
        }
    }

    struct Trace {
        std::vector<Tensor> conv_in;   // input of each conv
        std::vector<Tensor> conv_out;  // pre-activation
        std::vector<Tensor> relu_out;  // pool input
        Tensor gap_in;                 // last pool output
    };

    Tensor forward(const Tensor& patch, Trace* trace = nullptr) const {
        Tensor x = patch;
        Trace local;
        Trace& tr = trace ? *trace : local;
        tr.conv_in.clear();
        tr.conv_out.clear();
        tr.relu_out.clear();
        for (std::size_t i = 0; i < conv_w_.size(); ++i) {
            tr.conv_in.push_back(x);
            Tensor c = conv2d(x, conv_w_[i].value, conv_b_[i].value, 1);
            Tensor r = relu(c);
            x = maxpool2(r);
            if (trace) {
                tr.conv_out.push_back(std::move(c));
                tr.relu_out.push_back(std::move(r));
            }
        }
        tr.gap_in = x;
        return global_avg_pool(x);
    }

    // Accumulates parameter grads; returns nothing (input grad unused).
    void backward(const Trace& tr, const Tensor& gfeat) {
        Tensor g = Tensor::zeros(tr.gap_in.shape);
        global_avg_pool_backward(tr.gap_in, gfeat, g);
        for (std::size_t ii = conv_w_.size(); ii-- > 0;) {
            Tensor gr = Tensor::zeros(tr.relu_out[ii].shape);
            maxpool2_backward(tr.relu_out[ii], g, gr);
            Tensor gc = Tensor::zeros(tr.conv_out[ii].shape);
            relu_backward(tr.conv_out[ii], gr, gc);
            Tensor gx = Tensor::zeros(tr.conv_in[ii].shape);
            conv2d_backward(tr.conv_in[ii], conv_w_[ii].value, 1, gc, gx, conv_w_[ii].grad,
                            conv_b_[ii].grad);
            g = std::move(gx);
        }
    }

    std::vector<Parameter*> params() {
        std::vector<Parameter*> out;
        for (std::size_t i = 0; i < conv_w_.size(); ++i) {
            out.push_back(&conv_w_[i]);
            out.push_back(&conv_b_[i]);
        }
        return out;
    }

    int window() const { return window_; }

  private:
    std::vector<Parameter> conv_w_;
    std::vector<Parameter> conv_b_;
    int window_ = 0;
};

// FC(hidden) -> ReLU -> FC(1).
class RegressionHead {
  public:
    RegressionHead() = default;

    RegressionHead(int input_dim, int hidden)
        : fc1_w_("head.fc1.w", Tensor::zeros({static_cast<std::size_t>(hidden),
                                              static_cast<std::size_t>(input_dim)})),
          fc1_b_("head.fc1.b", Tensor::zeros({static_cast<std::size_t>(hidden)})),
          fc2_w_("head.fc2.w", Tensor::zeros({1, static_cast<std::size_t>(hidden)})),
          fc2_b_("head.fc2.b", Tensor::zeros({1})),
          input_dim_(input_dim),
          hidden_(hidden) {}

    void init(std::uint64_t seed) {
        Rng rng(mix_seed(seed, 0x4ead));
        auto glorot = [&](Tensor& w) {
            double bound = std::sqrt(6.0 / static_cast<double>(w.shape[0] + w.shape[1]));
            for (double& v : w.data) v = rng.uniform(-bound, bound);
        };
        glorot(fc1_w_.value);
        glorot(fc2_w_.value);
        fc1_b_.value.fill(0.0);
        fc2_b_.value.fill(0.0);
    }

    struct Trace {
        Tensor input;
        Tensor fc1_out;
        Tensor relu_out;
    };

    double forward(const Tensor& fused, Trace* trace = nullptr) const {
        if (fused.rank() != 1 || fused.shape[0] != static_cast<std::size_t>(input_dim_))
            throw DimensionError("head: input width " + shape_str(fused.shape) + " != " +
                                 std::to_string(input_dim_));
        Tensor h = fully_connected(fused, fc1_w_.value, fc1_b_.value);
        Tensor r = relu(h);
        Tensor o = fully_connected(r, fc2_w_.value, fc2_b_.value);
        if (trace) {
            trace->input = fused;
            trace->fc1_out = std::move(h);
            trace->relu_out = std::move(r);
        }
        return o.data[0];
    }

    // Returns dL/dinput; accumulates parameter grads.
    Tensor backward(const Trace& tr, double gout) {
        Tensor go = Tensor::vector1d({gout});
        Tensor gr = Tensor::zeros(tr.relu_out.shape);
        fully_connected_backward(tr.relu_out, fc2_w_.value, go, gr, fc2_w_.grad, fc2_b_.grad);
        Tensor gh = Tensor::zeros(tr.fc1_out.shape);
        relu_backward(tr.fc1_out, gr, gh);
        Tensor gin = Tensor::zeros(tr.input.shape);
        fully_connected_backward(tr.input, fc1_w_.value, gh, gin, fc1_w_.grad, fc1_b_.grad);
        return gin;
    }

    std::vector<Parameter*> params() { return {&fc1_w_, &fc1_b_, &fc2_w_, &fc2_b_}; }
    int input_dim() const { return input_dim_; }
    int hidden() const { return hidden_; }

  private:
    Parameter fc1_w_, fc1_b_, fc2_w_, fc2_b_;
    int input_dim_ = 0;
    int hidden_ = 0;
};

// Shared-weights backbone + regression head + preprocessing config.
struct ModelBundle {
    BackboneSpec backbone_spec;
    Preprocessor preprocessor = Resize{30};
    Mode mode = Mode::Contrastive;
    int hidden = 64;
    SmallCnn cnn;
    RegressionHead head;

    std::vector<Parameter*> params() {
        std::vector<Parameter*> out;
        if (backbone_spec.kind == BackboneKind::SmallCnn)
            for (Parameter* p : cnn.params()) out.push_back(p);
        for (Parameter* p : head.params()) out.push_back(p);
        return out;
    }
};

inline ModelBundle make_bundle(const BackboneSpec& bspec, const Preprocessor& pp, Mode mode,
                               int hidden, std::uint64_t seed) {
    bspec.validate();
    ModelBundle b;
    b.backbone_spec = bspec;
    b.preprocessor = pp;
    b.mode = mode;
    b.hidden = hidden;
    if (bspec.kind == BackboneKind::SmallCnn) {
        int window = preprocessor_window(pp);
        if (window != bspec.input_window)
            throw ConfigError("bundle: preprocessor window " + std::to_string(window) +
                              " != backbone input window " + std::to_string(bspec.input_window));
        b.cnn = SmallCnn(bspec.channels, window);
        b.cnn.init(seed);
    }
    int head_in = mode == Mode::Contrastive ? 2 * bspec.feature_dim : bspec.feature_dim;
    b.head = RegressionHead(head_in, hidden);
    b.head.init(seed);
    return b;
}

struct FeatureTrace {
    std::vector<SmallCnn::Trace> patch_traces;
};

// Preprocess into patches, run the shared-weights backbone on each, return the
// mean of the per-patch features. A Precomputed backbone takes the feature
// vector itself as "image" and passes it through.
inline Tensor extract_image_feature(const Tensor& image, const ModelBundle& bundle,
                                    FeatureTrace* trace = nullptr) {
    if (bundle.backbone_spec.kind == BackboneKind::Precomputed) {
        if (image.rank() != 1 ||
            image.shape[0] != static_cast<std::size_t>(bundle.backbone_spec.feature_dim))
            throw DimensionError("precomputed backbone expects a feature vector of dim " +
                                 std::to_string(bundle.backbone_spec.feature_dim));
        return image;
    }
    std::vector<Tensor> patches = apply_preprocessor(image, bundle.preprocessor);
    Tensor mean = Tensor::zeros({static_cast<std::size_t>(bundle.backbone_spec.feature_dim)});
    if (trace) trace->patch_traces.resize(patches.size());
    for (std::size_t i = 0; i < patches.size(); ++i) {
        Tensor f = bundle.cnn.forward(patches[i], trace ? &trace->patch_traces[i] : nullptr);
        for (std::size_t k = 0; k < mean.numel(); ++k) mean.data[k] += f.data[k];
    }
    for (double& v : mean.data) v /= static_cast<double>(patches.size());
    return mean;
}

inline void extract_image_feature_backward(ModelBundle& bundle, const FeatureTrace& trace,
                                           const Tensor& gfeat) {
    if (bundle.backbone_spec.kind == BackboneKind::Precomputed) return;
    std::size_t n = trace.patch_traces.size();
    Tensor g = gfeat;
    for (double& v : g.data) v /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) bundle.cnn.backward(trace.patch_traces[i], g);
}

// Concatenation fusion, query first.
inline Tensor fuse(const Tensor& query_feat, const Tensor& exemplar_feat) {
    if (query_feat.shape != exemplar_feat.shape || query_feat.rank() != 1)
        throw DimensionError("fuse: feature dims differ: " + shape_str(query_feat.shape) +
                             " vs " + shape_str(exemplar_feat.shape));
    Tensor out = Tensor::zeros({2 * query_feat.shape[0]});
    std::copy(query_feat.data.begin(), query_feat.data.end(), out.data.begin());
    std::copy(exemplar_feat.data.begin(), exemplar_feat.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(query_feat.shape[0]));
    return out;
}

inline double regress(const Tensor& fused, const RegressionHead& head,
                      RegressionHead::Trace* trace = nullptr) {
    return head.forward(fused, trace);
}

struct PairTrace {
    FeatureTrace query, exemplar;
    RegressionHead::Trace head;
    double delta = 0.0;
};

// Predicted relative score for a (query, exemplar) pair.
inline double predict_relative(const Tensor& query, const Tensor& exemplar,
                               const ModelBundle& bundle, PairTrace* trace = nullptr) {
    if (bundle.mode != Mode::Contrastive)
        throw ConfigError("predict_relative requires Contrastive mode");
    Tensor fq = extract_image_feature(query, bundle, trace ? &trace->query : nullptr);
    Tensor fe = extract_image_feature(exemplar, bundle, trace ? &trace->exemplar : nullptr);
    Tensor fused = fuse(fq, fe);
    double delta = regress(fused, bundle.head, trace ? &trace->head : nullptr);
    if (trace) trace->delta = delta;
    return delta;
}

inline void predict_relative_backward(ModelBundle& bundle, const PairTrace& trace, double gdelta,
                                      bool train_backbone = true) {
    Tensor gfused = bundle.head.backward(trace.head, gdelta);
    if (!train_backbone) return;
    std::size_t d = gfused.shape[0] / 2;
    Tensor gq = Tensor::zeros({d}), ge = Tensor::zeros({d});
    std::copy(gfused.data.begin(), gfused.data.begin() + static_cast<std::ptrdiff_t>(d),
              gq.data.begin());
    std::copy(gfused.data.begin() + static_cast<std::ptrdiff_t>(d), gfused.data.end(),
              ge.data.begin());
    extract_image_feature_backward(bundle, trace.query, gq);
    extract_image_feature_backward(bundle, trace.exemplar, ge);
}

struct DirectTrace {
    FeatureTrace feature;
    RegressionHead::Trace head;
    double score = 0.0;
};

inline double predict_direct(const Tensor& image, const ModelBundle& bundle,
                             DirectTrace* trace = nullptr) {
    if (bundle.mode != Mode::Direct)
        throw ConfigError("predict_direct requires Direct mode");
    Tensor f = extract_image_feature(image, bundle, trace ? &trace->feature : nullptr);
    double s = regress(f, bundle.head, trace ? &trace->head : nullptr);
    if (trace) trace->score = s;
    return s;
}

inline void predict_direct_backward(ModelBundle& bundle, const DirectTrace& trace, double gscore,
                                    bool train_backbone = true) {
    Tensor gfeat = bundle.head.backward(trace.head, gscore);
    if (!train_backbone) return;
    extract_image_feature_backward(bundle, trace.feature, gfeat);
}

}  // namespace pscr
