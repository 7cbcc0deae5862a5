#include <catch_amalgamated.hpp>

#include "pscr/preprocessing.hpp"
#include "pscr/rng.hpp"

using namespace pscr;

namespace {

Tensor random_image(std::size_t c, std::size_t h, std::size_t w, Rng& rng) {
    Tensor t = Tensor::zeros({c, h, w});
    for (double& v : t.data) v = rng.uniform();
    return t;
}

bool patch_matches_slice(const Tensor& img, const Tensor& patch, int row, int col) {
    for (std::size_t ch = 0; ch < patch.shape[0]; ++ch)
        for (std::size_t y = 0; y < patch.shape[1]; ++y)
            for (std::size_t x = 0; x < patch.shape[2]; ++x)
                if (patch.at3(ch, y, x) != img.at3(ch, row + y, col + x)) return false;
    return true;
}

}  // namespace

TEST_CASE("reference config [0,150,288]/224 on 512x512") {
    Rng rng(21);
    Tensor img = random_image(3, 512, 512, rng);
    SamplerSpec spec{{0, 150, 288}, 224};
    PatchSet ps = sample_patches(img, spec);
    REQUIRE(ps.patches.size() == 9);
    // nested-loop order: outer row, inner col
    std::vector<std::pair<int, int>> expected;
    for (int i : {0, 150, 288})
        for (int j : {0, 150, 288}) expected.emplace_back(i, j);
    CHECK(ps.origins == expected);
    for (std::size_t k = 0; k < 9; ++k)
        CHECK(patch_matches_slice(img, ps.patches[k], ps.origins[k].first, ps.origins[k].second));
    // last patch spans rows/cols 288..511
    CHECK(ps.origins.back() == std::pair<int, int>{288, 288});
    CHECK(288 + 224 == 512);

    CHECK(coverage_report(spec, 512).covered_fraction == 1.0);
}

TEST_CASE("reference config [0,100,213]/299 overlaps and coverage") {
    SamplerSpec spec{{0, 100, 213}, 299};
    Rng rng(22);
    Tensor img = random_image(1, 512, 512, rng);
    PatchSet ps = sample_patches(img, spec);
    REQUIRE(ps.patches.size() == 9);
    // adjacent windows overlap by s - gap: 299-100=199 and 299-113=186 columns
    CHECK(spec.window - (100 - 0) == 199);
    CHECK(spec.window - (213 - 100) == 186);
    CHECK(coverage_report(spec, 512).covered_fraction == 1.0);
}

TEST_CASE("whole-image window returns the input") {
    Rng rng(23);
    Tensor img = random_image(3, 40, 40, rng);
    PatchSet ps = sample_patches(img, SamplerSpec{{0}, 40});
    REQUIRE(ps.patches.size() == 1);
    CHECK(ps.patches[0] == img);
}

TEST_CASE("sample_patches validation errors") {
    Tensor img = Tensor::zeros({1, 32, 32});
    CHECK_THROWS_AS(sample_patches(img, SamplerSpec{{}, 8}), ValidationError);
    try {
        sample_patches(img, SamplerSpec{{0, 28}, 8});
        FAIL("expected bounds error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("28") != std::string::npos);
    }
    CHECK_THROWS_AS(sample_patches(Tensor::zeros({1, 16, 32}), SamplerSpec{{0}, 8}),
                    ValidationError);
    CHECK_THROWS_AS(sample_patches(img, SamplerSpec{{4, 4}, 8}), ValidationError);
}

TEST_CASE("property: random valid specs produce bit-exact slices") {
    Rng rng(24);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t side = 8 + rng.index(40);
        int window = 1 + static_cast<int>(rng.index(side));
        SamplerSpec spec;
        spec.window = window;
        int limit = static_cast<int>(side) - window;
        int prev = -1;
        for (int k = 0; k < 4 && prev < limit; ++k) {
            int step = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(limit - prev) + 1));
            int next = prev < 0 ? static_cast<int>(rng.index(limit + 1)) : prev + step;
            if (next > limit) break;
            spec.start_indices.push_back(next);
            prev = next;
        }
        if (spec.start_indices.empty()) spec.start_indices.push_back(0);
        Tensor img = random_image(2, side, side, rng);
        PatchSet ps = sample_patches(img, spec);
        REQUIRE(ps.patches.size() == spec.start_indices.size() * spec.start_indices.size());
        for (std::size_t k = 0; k < ps.patches.size(); ++k)
            REQUIRE(patch_matches_slice(img, ps.patches[k], ps.origins[k].first,
                                        ps.origins[k].second));
    }
}

TEST_CASE("nonoverlap_grid tiles exactly") {
    Rng rng(25);
    Tensor img = random_image(3, 64, 64, rng);
    PatchSet ps = nonoverlap_grid(img, 32);
    REQUIRE(ps.patches.size() == 4);
    // reassembly reproduces the source bit-exactly
    Tensor rebuilt = Tensor::zeros(img.shape);
    for (std::size_t k = 0; k < ps.patches.size(); ++k)
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t y = 0; y < 32; ++y)
                for (std::size_t x = 0; x < 32; ++x)
                    rebuilt.at3(ch, ps.origins[k].first + y, ps.origins[k].second + x) =
                        ps.patches[k].at3(ch, y, x);
    CHECK(rebuilt == img);
}

TEST_CASE("nonoverlap_grid whole-image tile and divisibility error") {
    Rng rng(26);
    Tensor img = random_image(3, 32, 32, rng);
    PatchSet ps = nonoverlap_grid(img, 32);
    REQUIRE(ps.patches.size() == 1);
    CHECK(ps.patches[0] == img);
    CHECK_THROWS_AS(nonoverlap_grid(img, 12), DimensionError);
}

TEST_CASE("grid-spaced sampler matches nonoverlap_grid") {
    Rng rng(27);
    Tensor img = random_image(2, 48, 48, rng);
    PatchSet a = sample_patches(img, SamplerSpec{{0, 16, 32}, 16});
    PatchSet b = nonoverlap_grid(img, 16);
    REQUIRE(a.patches.size() == b.patches.size());
    for (std::size_t k = 0; k < a.patches.size(); ++k) {
        CHECK(a.origins[k] == b.origins[k]);
        CHECK(a.patches[k] == b.patches[k]);
    }
}

TEST_CASE("resize_bilinear identity and constants") {
    Rng rng(28);
    Tensor img = random_image(3, 17, 17, rng);
    Tensor same = resize_bilinear(img, 17);
    for (std::size_t i = 0; i < img.numel(); ++i)
        CHECK(same.data[i] == Catch::Approx(img.data[i]).margin(1e-12));

    Tensor c = Tensor::full({3, 8, 8}, 0.42);
    Tensor rc = resize_bilinear(c, 5);
    for (double v : rc.data) CHECK(v == Catch::Approx(0.42).margin(1e-12));

    CHECK_THROWS_AS(resize_bilinear(img, 0), ValidationError);
}

TEST_CASE("resize_bilinear checkerboard center") {
    Tensor img({1, 2, 2}, {0, 1, 1, 0});
    Tensor up = resize_bilinear(img, 3);
    CHECK(up.at3(0, 1, 1) == Catch::Approx(0.5).margin(1e-12));
    CHECK(up.at3(0, 0, 0) == 0.0);
    CHECK(up.at3(0, 2, 2) == 0.0);
}

TEST_CASE("coverage_report corner cases") {
    auto r = coverage_report(SamplerSpec{{0}, 20}, 20);
    CHECK(r.covered_fraction == 1.0);
    CHECK(r.max_multiplicity == 1);
    auto q = coverage_report(SamplerSpec{{0}, 10}, 20);
    CHECK(q.covered_fraction == 0.25);
    CHECK(q.max_multiplicity == 1);
}

TEST_CASE("preprocessor string round trip") {
    for (const char* s : {"resize:30", "grid:32", "overlap:0,17,34x30"})
        CHECK(preprocessor_to_string(preprocessor_from_string(s)) == s);
    CHECK_THROWS_AS(preprocessor_from_string("bogus:1"), ValidationError);
}
