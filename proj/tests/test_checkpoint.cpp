#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pscr/checkpoint.hpp"

using namespace pscr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("pscr_ckpt_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ModelBundle sample_bundle(std::uint64_t seed) {
    BackboneSpec spec;
    spec.channels = {4, 8};
    spec.feature_dim = 8;
    spec.input_window = 14;
    return make_bundle(spec, OverlapSample{{{0, 4}, 14}}, Mode::Contrastive, 16, seed);
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("checkpoint round trip restores every parameter exactly") {
    TempDir dir("rt");
    ModelBundle b = sample_bundle(42);
    save_checkpoint(b, dir.path / "m.pscr");
    ModelBundle back = load_checkpoint(dir.path / "m.pscr");
    CHECK(back.mode == b.mode);
    CHECK(back.hidden == b.hidden);
    CHECK(back.backbone_spec.channels == b.backbone_spec.channels);
    CHECK(back.backbone_spec.feature_dim == b.backbone_spec.feature_dim);
    CHECK(preprocessor_to_string(back.preprocessor) == preprocessor_to_string(b.preprocessor));
    auto pa = b.params();
    auto pb = back.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i]->name == pb[i]->name);
        CHECK(pa[i]->value.shape == pb[i]->value.shape);
        CHECK(pa[i]->value.data == pb[i]->value.data);
    }
}

TEST_CASE("restored bundle predicts identically") {
    TempDir dir("pred");
    ModelBundle b = sample_bundle(7);
    Rng rng(1);
    Tensor q = Tensor::zeros({3, 18, 18}), e = Tensor::zeros({3, 18, 18});
    for (double& v : q.data) v = rng.uniform();
    for (double& v : e.data) v = rng.uniform();
    double before = predict_relative(q, e, b);
    save_checkpoint(b, dir.path / "m.pscr");
    ModelBundle back = load_checkpoint(dir.path / "m.pscr");
    CHECK(predict_relative(q, e, back) == before);
}

TEST_CASE("checkpoint file starts with the magic and version") {
    TempDir dir("magic");
    ModelBundle b = sample_bundle(3);
    save_checkpoint(b, dir.path / "m.pscr");
    std::string bytes = read_bytes(dir.path / "m.pscr");
    REQUIRE(bytes.size() > 8);
    CHECK(bytes.substr(0, 4) == "PSCR");
    CHECK(bytes[4] == 1);  // version 1, little-endian u32
    CHECK(bytes[5] == 0);
    CHECK(bytes[6] == 0);
    CHECK(bytes[7] == 0);
}

TEST_CASE("saving twice yields identical bytes") {
    TempDir dir("bytes");
    ModelBundle b = sample_bundle(9);
    save_checkpoint(b, dir.path / "a.pscr");
    save_checkpoint(b, dir.path / "b.pscr");
    CHECK(read_bytes(dir.path / "a.pscr") == read_bytes(dir.path / "b.pscr"));
}

TEST_CASE("tampered files are rejected") {
    TempDir dir("tamper");
    ModelBundle b = sample_bundle(4);
    save_checkpoint(b, dir.path / "m.pscr");
    std::string bytes = read_bytes(dir.path / "m.pscr");

    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    std::ofstream(dir.path / "bad_magic.pscr", std::ios::binary) << bad_magic;
    CHECK_THROWS_AS(load_checkpoint(dir.path / "bad_magic.pscr"), FormatError);

    std::string bad_version = bytes;
    bad_version[4] = 9;
    std::ofstream(dir.path / "bad_version.pscr", std::ios::binary) << bad_version;
    CHECK_THROWS_AS(load_checkpoint(dir.path / "bad_version.pscr"), FormatError);

    std::ofstream(dir.path / "trunc.pscr", std::ios::binary)
        << bytes.substr(0, bytes.size() - 5);
    CHECK_THROWS_AS(load_checkpoint(dir.path / "trunc.pscr"), FormatError);

    CHECK_THROWS_AS(load_checkpoint(dir.path / "absent.pscr"), FormatError);
}
