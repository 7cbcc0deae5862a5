// pscr: patch-sampling contrastive regression toolkit CLI.
//
// Subcommands: train, eval, ablate, gradcheck, gen-synthetic, sample-patches.
// Exit codes: 0 ok, 1 validation error, 2 runtime failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pscr/checkpoint.hpp"
#include "pscr/config.hpp"
#include "pscr/data.hpp"
#include "pscr/gradcheck_suite.hpp"
#include "pscr/inference.hpp"
#include "pscr/metrics.hpp"
#include "pscr/trainer.hpp"

namespace fs = std::filesystem;
using namespace pscr;

namespace {

struct CommonOpts {
    std::string config_file;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string manifest;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_file, "flat key = value config file");
    cmd->add_option("--set", opts.sets, "override a config key, key=value")->take_all();
    cmd->add_option("--seed", opts.seed, "training seed (overrides config)");
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--manifest", opts.manifest, "dataset manifest CSV");
}

RunConfig build_config(const CommonOpts& opts) {
    RunConfig cfg;
    if (!opts.config_file.empty()) cfg.load_file(opts.config_file);
    if (opts.seed) cfg.set("train.seed", std::to_string(*opts.seed));
    if (!opts.out_dir.empty()) cfg.set("out.dir", opts.out_dir);
    if (!opts.manifest.empty()) cfg.set("data.manifest", opts.manifest);
    for (const auto& s : opts.sets) {
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ValidationError("--set expects key=value, got '" + s + "'");
        cfg.set(RunConfig::trim(s.substr(0, eq)), RunConfig::trim(s.substr(eq + 1)));
    }
    return cfg;
}

LoadedDataset load_split_dataset(const Manifest& full, const std::vector<std::size_t>& idx,
                                 const RunConfig& cfg) {
    Manifest part = select_rows(full, idx);
    if (cfg.get("backbone.kind") == "precomputed") {
        if (cfg.get("data.features").empty())
            throw ValidationError("precomputed backbone requires data.features");
        auto feats = load_features(cfg.get("data.features"));
        return load_dataset(part, &feats);
    }
    return load_dataset(part);
}

struct TrainedRun {
    TrainResult result;
    RunInfo info;
    fs::path checkpoint_path;
};

// Split, train, and persist checkpoint + run manifest + loss log into out_dir.
TrainedRun run_train(const RunConfig& cfg, const fs::path& out_dir, bool quiet = false) {
    if (cfg.get("data.manifest").empty())
        throw ValidationError("train: data.manifest is required");
    Manifest full = load_manifest(cfg.get("data.manifest"));
    TrainConfig tcfg = cfg.train();
    auto [train_idx, test_idx] =
        split_indices(full.size(), cfg.get_double("data.split_ratio"), tcfg.seed);
    LoadedDataset train_set = load_split_dataset(full, train_idx, cfg);

    TrainResult result = train(train_set, tcfg, cfg.backbone(), cfg.preprocessor(),
                               cfg.get_int("head.hidden"));

    fs::create_directories(out_dir);
    TrainedRun run;
    run.checkpoint_path = out_dir / "checkpoint.pscr";
    save_checkpoint(result.bundle, run.checkpoint_path);
    run.info = {cfg, train_idx, test_idx, result.history};
    save_run_manifest(run.info, out_dir / "run_manifest.txt");
    {
        std::ofstream losses(out_dir / "losses.txt");
        losses.precision(17);
        for (std::size_t i = 0; i < result.history.size(); ++i)
            losses << (i + 1) << " " << result.history[i] << "\n";
    }
    if (!quiet) {
        std::printf("trained %s: %zu epochs, final loss %.6f\n",
                    arm_to_string(tcfg.arm).c_str(), result.history.size(),
                    result.history.back());
        std::printf("checkpoint: %s\n", run.checkpoint_path.string().c_str());
    }
    run.result = std::move(result);
    return run;
}

EvalReport run_eval(ModelBundle& bundle, const RunInfo& info, const fs::path& manifest_path,
                    const VoteConfig& vcfg, const fs::path& out_dir, bool quiet = false) {
    Manifest full = load_manifest(manifest_path);
    const RunConfig& rcfg = info.config;
    LoadedDataset train_set = load_split_dataset(full, info.train_indices, rcfg);
    LoadedDataset test_set = load_split_dataset(full, info.test_indices, rcfg);
    std::size_t dim = static_cast<std::size_t>(rcfg.get_int("data.dimension"));
    EvalReport report = evaluate_split(test_set, train_set, bundle, vcfg, dim);
    fs::create_directories(out_dir);
    write_report_csv(report, out_dir / "report.csv");
    if (!quiet) {
        std::printf("%-18s %8s %8s\n", "dimension", "SRCC", "PLCC");
        for (const auto& m : report.metrics)
            std::printf("%-18s %8.4f %8.4f\n", m.name.c_str(), m.srcc, m.plcc);
        std::printf("report: %s\n", (out_dir / "report.csv").string().c_str());
    }
    return report;
}

VoteConfig vote_from(const RunConfig& cfg, const std::optional<int>& n,
                     const std::optional<std::uint64_t>& seed, const std::string& selection,
                     const std::optional<bool>& shared) {
    VoteConfig v = cfg.vote();
    if (n) v.num_exemplars = *n;
    if (seed) v.exemplar_seed = *seed;
    if (!selection.empty()) v.selection = selection_from_string(selection);
    if (shared) v.shared_set = *shared;
    return v;
}

int cmd_gradcheck(std::uint64_t seed, bool sabotage) {
    auto checks = run_gradcheck_suite(seed, sabotage);
    bool ok = true;
    for (const auto& c : checks) {
        std::printf("%-18s max_rel_err %.3e  %s\n", c.name.c_str(), c.max_rel_error,
                    c.passed() ? "PASS" : "FAIL");
        ok = ok && c.passed();
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"patch-sampling contrastive regression toolkit"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
    CommonOpts train_opts;
    add_common(train_cmd, train_opts);
    std::string train_arm, train_lr;
    std::optional<int> train_epochs, train_dim;
    train_cmd->add_option("--arm", train_arm, "FR|FR_PS|FR_CR|FR_PSCR");
    train_cmd->add_option("--epochs", train_epochs, "epoch budget");
    train_cmd->add_option("--lr", train_lr, "Adam learning rate");
    train_cmd->add_option("--dimension", train_dim, "score dimension index");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the held-out split");
    std::string eval_checkpoint, eval_manifest, eval_out = "out", eval_selection;
    std::optional<int> eval_n;
    std::optional<std::uint64_t> eval_seed;
    std::optional<bool> eval_shared;
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--manifest", eval_manifest, "dataset manifest CSV")->required();
    eval_cmd->add_option("--out", eval_out, "output directory");
    eval_cmd->add_option("--num-exemplars", eval_n, "exemplars per test image");
    eval_cmd->add_option("--exemplar-seed", eval_seed, "exemplar selection seed");
    eval_cmd->add_option("--selection", eval_selection, "uniform|stratified");
    eval_cmd->add_option("--shared-set", eval_shared, "one exemplar set for all test images");

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "train+eval a grid of arms/preprocessors");
    CommonOpts ablate_opts;
    add_common(ablate_cmd, ablate_opts);
    std::string ablate_arms = "FR,FR_PS,FR_CR,FR_PSCR", ablate_lists, ablate_pps;
    ablate_cmd->add_option("--arms", ablate_arms, "comma list of arms");
    ablate_cmd->add_option("--start-lists", ablate_lists,
                           "semicolon list of overlap specs, e.g. 0,17,34x30;0,34x30");
    ablate_cmd->add_option("--preprocessors", ablate_pps,
                           "semicolon list for non-sampling arms, e.g. resize:30;grid:32");

    // gradcheck
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    bool gc_sabotage = false;
    std::uint64_t gc_seed = 0;
    gc_cmd->add_option("--seed", gc_seed, "suite seed");
    gc_cmd->add_flag("--sabotage", gc_sabotage, "corrupt one gradient (self-test of detection)")
        ->group("");

    // gen-synthetic
    auto* gen_cmd = app.add_subcommand("gen-synthetic", "generate a synthetic scored dataset");
    int gen_count = 64, gen_side = 64;
    std::uint64_t gen_seed = 0;
    std::string gen_fn = "blur", gen_out = "synthetic";
    gen_cmd->add_option("--count", gen_count, "number of images");
    gen_cmd->add_option("--side", gen_side, "image side length");
    gen_cmd->add_option("--seed", gen_seed, "generator seed");
    gen_cmd->add_option("--score-fn", gen_fn, "blur|noise|mixed");
    gen_cmd->add_option("--out", gen_out, "output directory");

    // sample-patches
    auto* sp_cmd = app.add_subcommand("sample-patches", "dump overlapping patches of one image");
    std::string sp_image, sp_indices = "0,150,288", sp_out = "patches";
    int sp_window = 224;
    sp_cmd->add_option("--image", sp_image, "input PPM image")->required();
    sp_cmd->add_option("--start-indices", sp_indices, "comma list of start indices");
    sp_cmd->add_option("--window", sp_window, "sliding window size");
    sp_cmd->add_option("--out", sp_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (train_cmd->parsed()) {
            RunConfig cfg = build_config(train_opts);
            if (!train_arm.empty()) cfg.set("train.arm", train_arm);
            if (!train_lr.empty()) cfg.set("adam.learning_rate", train_lr);
            if (train_epochs) cfg.set("train.epochs", std::to_string(*train_epochs));
            if (train_dim) cfg.set("data.dimension", std::to_string(*train_dim));
            run_train(cfg, cfg.get("out.dir"));
            return 0;
        }
        if (eval_cmd->parsed()) {
            ModelBundle bundle = load_checkpoint(eval_checkpoint);
            RunInfo info =
                load_run_manifest(fs::path(eval_checkpoint).parent_path() / "run_manifest.txt");
            VoteConfig vcfg =
                vote_from(info.config, eval_n, eval_seed, eval_selection, eval_shared);
            run_eval(bundle, info, eval_manifest, vcfg, eval_out);
            return 0;
        }
        if (ablate_cmd->parsed()) {
            RunConfig base = build_config(ablate_opts);
            struct Cell {
                std::string arm, pp;
            };
            std::vector<Cell> cells;
            std::istringstream arms_in(ablate_arms);
            std::string arm_tok;
            while (std::getline(arms_in, arm_tok, ',')) {
                Arm arm = arm_from_string(RunConfig::trim(arm_tok));
                std::string variants =
                    arm_uses_sampling(arm) ? ablate_lists : ablate_pps;
                if (variants.empty()) {
                    cells.push_back({arm_to_string(arm), ""});
                } else {
                    std::istringstream vs(variants);
                    std::string v;
                    while (std::getline(vs, v, ';'))
                        cells.push_back({arm_to_string(arm), RunConfig::trim(v)});
                }
            }
            if (cells.empty()) throw ValidationError("ablate: no arms given");

            fs::path out_dir = base.get("out.dir");
            fs::create_directories(out_dir);
            std::ofstream csv(out_dir / "ablation.csv");
            std::ofstream txt(out_dir / "ablation.txt");
            csv.precision(17);
            bool any_failed = false;
            bool header_done = false;
            char buf[256];
            for (std::size_t ci = 0; ci < cells.size(); ++ci) {
                RunConfig cfg = base;
                cfg.set("train.arm", cells[ci].arm);
                std::string variant = cells[ci].pp;
                if (!variant.empty()) {
                    Preprocessor pp = preprocessor_from_string(
                        variant.find(':') != std::string::npos ? variant
                                                               : "overlap:" + variant);
                    if (std::holds_alternative<OverlapSample>(pp)) {
                        const auto& s = std::get<OverlapSample>(pp).spec;
                        std::string idx;
                        for (std::size_t i = 0; i < s.start_indices.size(); ++i)
                            idx += (i ? "," : "") + std::to_string(s.start_indices[i]);
                        cfg.set("sampler.start_indices", idx);
                        cfg.set("sampler.window", std::to_string(s.window));
                        cfg.set("preprocessor.kind", "overlap");
                    } else if (std::holds_alternative<Resize>(pp)) {
                        cfg.set("preprocessor.kind", "resize");
                        cfg.set("preprocessor.resize_target",
                                std::to_string(std::get<Resize>(pp).target));
                    } else {
                        cfg.set("preprocessor.kind", "grid");
                        cfg.set("preprocessor.grid_patch",
                                std::to_string(std::get<NonOverlapGrid>(pp).patch));
                    }
                }
                std::string label = cells[ci].arm + (variant.empty() ? "" : "/" + variant);
                fs::path cell_dir = out_dir / ("cell_" + std::to_string(ci));
                try {
                    TrainedRun run = run_train(cfg, cell_dir, true);
                    ModelBundle bundle = load_checkpoint(run.checkpoint_path);
                    EvalReport report = run_eval(bundle, run.info, cfg.get("data.manifest"),
                                                 cfg.vote(), cell_dir, true);
                    if (!header_done) {
                        csv << "arm,preprocessor,split_hash";
                        std::string head = "arm/preprocessor      split_hash       ";
                        for (const auto& m : report.metrics) {
                            csv << "," << m.name << "_srcc," << m.name << "_plcc";
                            std::snprintf(buf, sizeof(buf), " %12s", (m.name + " S/P").c_str());
                            head += buf;
                        }
                        csv << "\n";
                        txt << head << "\n";
                        header_done = true;
                    }
                    std::snprintf(buf, sizeof(buf), "%016llx",
                                  static_cast<unsigned long long>(
                                      split_hash(run.info.train_indices)));
                    csv << cells[ci].arm << "," << preprocessor_to_string(cfg.preprocessor())
                        << "," << buf;
                    std::snprintf(buf, sizeof(buf), "%-21s %016llx ", label.c_str(),
                                  static_cast<unsigned long long>(
                                      split_hash(run.info.train_indices)));
                    txt << buf;
                    for (const auto& m : report.metrics) {
                        csv << "," << m.srcc << "," << m.plcc;
                        std::snprintf(buf, sizeof(buf), " %.4f/%.4f", m.srcc, m.plcc);
                        txt << buf;
                    }
                    csv << "\n";
                    txt << "\n";
                    std::printf("cell %zu (%s): ok\n", ci, label.c_str());
                } catch (const std::exception& e) {
                    any_failed = true;
                    txt << label << "  FAILED: " << e.what() << "\n";
                    csv << cells[ci].arm << "," << variant << ",FAILED\n";
                    std::fprintf(stderr, "cell %zu (%s) failed: %s\n", ci, label.c_str(),
                                 e.what());
                }
            }
            std::printf("ablation table: %s\n", (out_dir / "ablation.txt").string().c_str());
            return any_failed ? 2 : 0;
        }
        if (gc_cmd->parsed()) return cmd_gradcheck(gc_seed, gc_sabotage);
        if (gen_cmd->parsed()) {
            SyntheticSpec spec{gen_count, gen_side, gen_seed, score_fn_from_string(gen_fn)};
            Manifest m = gen_synthetic(spec, gen_out);
            std::printf("wrote %zu images + manifest to %s\n", m.size(), gen_out.c_str());
            return 0;
        }
        if (sp_cmd->parsed()) {
            Tensor img = load_image(sp_image);
            SamplerSpec spec;
            std::istringstream is(sp_indices);
            std::string tok;
            while (std::getline(is, tok, ','))
                spec.start_indices.push_back(std::stoi(RunConfig::trim(tok)));
            spec.window = sp_window;
            PatchSet ps = sample_patches(img, spec);
            fs::create_directories(sp_out);
            std::ofstream offsets(fs::path(sp_out) / "offsets.csv");
            offsets << "file,row,col\n";
            for (std::size_t i = 0; i < ps.patches.size(); ++i) {
                char name[64];
                std::snprintf(name, sizeof(name), "patch_r%03d_c%03d.ppm", ps.origins[i].first,
                              ps.origins[i].second);
                save_image(ps.patches[i], fs::path(sp_out) / name);
                offsets << name << "," << ps.origins[i].first << "," << ps.origins[i].second
                        << "\n";
            }
            std::printf("wrote %zu patches to %s\n", ps.patches.size(), sp_out.c_str());
            return 0;
        }
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime failure: %s\n", e.what());
        return 2;
    }
    return 0;
}
