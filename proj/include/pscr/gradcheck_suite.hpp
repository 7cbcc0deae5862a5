#pragma once

#include <string>
#include <vector>

#include "pscr/model.hpp"
#include "pscr/ops.hpp"

// Finite-difference checks for every differentiable op and for the full
// contrastive pipeline. Shared by the gradcheck CLI subcommand and the
// acceptance suite.

namespace pscr {

struct OpCheck {
    std::string name;
    double max_rel_error;
    double threshold;

    bool passed() const { return max_rel_error < threshold; }
};

namespace detail {

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Linear probe loss sum(c_i * y_i); its backward is just the probe vector.
inline Tensor probe(const Tensor& y, Rng& rng) {
    return random_tensor(y.shape, rng);
}

inline double dot(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += a.data[i] * b.data[i];
    return acc;
}

}  // namespace detail

inline std::vector<OpCheck> run_gradcheck_suite(std::uint64_t seed = 0, bool sabotage = false) {
    const double h = 1e-5;
    std::vector<OpCheck> results;
    Rng rng(mix_seed(seed, 0x9cde));

    // conv2d: random 1x2x5x5 case probed linearly
    {
        Parameter x("x", detail::random_tensor({2, 5, 5}, rng));
        Parameter w("w", detail::random_tensor({3, 2, 3, 3}, rng));
        Parameter b("b", detail::random_tensor({3}, rng));
        Tensor c = detail::probe(conv2d(x.value, w.value, b.value, 1), rng);
        auto loss = [&] { return detail::dot(conv2d(x.value, w.value, b.value, 1), c); };
        conv2d_backward(x.value, w.value, 1, c, x.grad, w.grad, b.grad);
        results.push_back({"conv2d", gradcheck(loss, {&x, &w, &b}, h), 1e-4});
    }

    // relu, away from the kink
    {
        Parameter x("x", detail::random_tensor({4, 6}, rng));
        for (double& v : x.value.data)
            if (std::fabs(v) < 0.05) v = v < 0 ? v - 0.1 : v + 0.1;
        Tensor c = detail::probe(x.value, rng);
        auto loss = [&] { return detail::dot(relu(x.value), c); };
        relu_backward(x.value, c, x.grad);
        results.push_back({"relu", gradcheck(loss, {&x}, h), 1e-4});
    }

    // maxpool2, random values make ties vanishingly unlikely
    {
        Parameter x("x", detail::random_tensor({2, 4, 4}, rng));
        Tensor c = detail::probe(maxpool2(x.value), rng);
        auto loss = [&] { return detail::dot(maxpool2(x.value), c); };
        maxpool2_backward(x.value, c, x.grad);
        results.push_back({"maxpool2", gradcheck(loss, {&x}, h), 1e-4});
    }

    // global_avg_pool
    {
        Parameter x("x", detail::random_tensor({3, 4, 5}, rng));
        Tensor c = detail::probe(global_avg_pool(x.value), rng);
        auto loss = [&] { return detail::dot(global_avg_pool(x.value), c); };
        global_avg_pool_backward(x.value, c, x.grad);
        results.push_back({"global_avg_pool", gradcheck(loss, {&x}, h), 1e-4});
    }

    // fully_connected 8 -> 4
    {
        Parameter x("x", detail::random_tensor({8}, rng));
        Parameter w("w", detail::random_tensor({4, 8}, rng));
        Parameter b("b", detail::random_tensor({4}, rng));
        Tensor c = detail::probe(fully_connected(x.value, w.value, b.value), rng);
        auto loss = [&] { return detail::dot(fully_connected(x.value, w.value, b.value), c); };
        fully_connected_backward(x.value, w.value, c, x.grad, w.grad, b.grad);
        results.push_back({"fully_connected", gradcheck(loss, {&x, &w, &b}, h), 1e-4});
    }

    // mse_loss
    {
        Parameter pred("pred", detail::random_tensor({6}, rng));
        Tensor target = detail::random_tensor({6}, rng);
        auto loss = [&] { return mse_loss(pred.value, target); };
        pred.grad = mse_loss_backward(pred.value, target);
        results.push_back({"mse_loss", gradcheck(loss, {&pred}, h), 1e-4});
    }

    // regression head (FC -> ReLU -> FC)
    {
        RegressionHead head(16, 8);
        head.init(mix_seed(seed, 0x77));
        Tensor x = detail::random_tensor({16}, rng);
        auto params = head.params();
        auto loss = [&] { return head.forward(x); };
        RegressionHead::Trace tr;
        head.forward(x, &tr);
        head.backward(tr, 1.0);
        results.push_back({"regress", gradcheck(loss, params, h), 1e-4});
    }

    // full contrastive pipeline: 2 images, 4 overlapping patches each
    {
        SamplerSpec samp{{0, 4}, 30};
        BackboneSpec bspec;  // smallcnn [8,16,32], window 30
        ModelBundle bundle =
            make_bundle(bspec, OverlapSample{samp}, Mode::Contrastive, 64, mix_seed(seed, 0x88));
        Tensor q = detail::random_tensor({3, 34, 34}, rng, 0.0, 1.0);
        Tensor e = detail::random_tensor({3, 34, 34}, rng, 0.0, 1.0);
        double target = 0.7;
        auto params = bundle.params();
        auto loss = [&] {
            double d = predict_relative(q, e, bundle) - target;
            return d * d;
        };
        PairTrace tr;
        double delta = predict_relative(q, e, bundle, &tr);
        predict_relative_backward(bundle, tr, 2.0 * (delta - target));
        if (sabotage) params.back()->grad.data[0] += 1.0;  // output bias, always probed
        results.push_back(
            {"pipeline_fr_pscr", gradcheck(loss, params, h, 24, mix_seed(seed, 0x99)), 1e-4});
    }

    return results;
}

}  // namespace pscr
