#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pscr/inference.hpp"
#include "pscr/trainer.hpp"

namespace pscr {

// Flat key=value configuration with defaults; precedence is
// CLI flags > config file > defaults. Unknown keys are rejected.
class RunConfig {
  public:
    RunConfig() : values_(defaults()) {}

    static const std::map<std::string, std::string>& defaults() {
        static const std::map<std::string, std::string> d = {
            {"data.manifest", ""},
            {"data.features", ""},
            {"data.dimension", "0"},
            {"data.split_ratio", "0.8"},
            {"out.dir", "out"},
            {"train.arm", "FR_PSCR"},
            {"train.batch_size", "8"},
            {"train.epochs", "200"},
            {"train.seed", "0"},
            {"train.exemplars_per_query", "1"},
            {"train.early_stop", "20"},
            {"train.finetune_backbone", "true"},
            {"adam.learning_rate", "0.0001"},
            {"adam.weight_decay", "0.00001"},
            {"adam.beta1", "0.9"},
            {"adam.beta2", "0.999"},
            {"adam.epsilon", "1e-8"},
            {"sampler.start_indices", "0,17,34"},
            {"sampler.window", "30"},
            {"backbone.kind", "smallcnn"},
            {"backbone.channels", "8,16,32"},
            {"backbone.feature_dim", "32"},
            {"head.hidden", "64"},
            {"preprocessor.kind", "auto"},
            {"preprocessor.resize_target", "0"},
            {"preprocessor.grid_patch", "0"},
            {"vote.num_exemplars", "10"},
            {"vote.exemplar_seed", "0"},
            {"vote.selection", "uniform"},
            {"vote.shared_set", "false"},
        };
        return d;
    }

    void set(const std::string& key, const std::string& value) {
        if (!defaults().count(key))
            throw ValidationError("config: unknown key '" + key + "'");
        values_[key] = value;
    }

    void load_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("config: cannot open " + path.string());
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ValidationError("config line " + std::to_string(lineno) +
                                      ": expected key = value");
            set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }

    const std::string& get(const std::string& key) const { return values_.at(key); }

    int get_int(const std::string& key) const {
        return static_cast<int>(parse_ll(key));
    }
    std::uint64_t get_u64(const std::string& key) const {
        return static_cast<std::uint64_t>(parse_ll(key));
    }
    double get_double(const std::string& key) const {
        try {
            return std::stod(values_.at(key));
        } catch (const std::exception&) {
            throw ValidationError("config: key '" + key + "' is not a number: '" +
                                  values_.at(key) + "'");
        }
    }
    bool get_bool(const std::string& key) const {
        const std::string& v = values_.at(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ValidationError("config: key '" + key + "' is not a bool: '" + v + "'");
    }
    std::vector<int> get_ints(const std::string& key) const {
        std::vector<int> out;
        std::istringstream is(values_.at(key));
        std::string tok;
        while (std::getline(is, tok, ',')) {
            try {
                out.push_back(std::stoi(trim(tok)));
            } catch (const std::exception&) {
                throw ValidationError("config: bad integer '" + tok + "' in key '" + key + "'");
            }
        }
        return out;
    }

    const std::map<std::string, std::string>& all() const { return values_; }

    // ---- typed views ----

    AdamConfig adam() const {
        AdamConfig a;
        a.learning_rate = get_double("adam.learning_rate");
        a.weight_decay = get_double("adam.weight_decay");
        a.beta1 = get_double("adam.beta1");
        a.beta2 = get_double("adam.beta2");
        a.epsilon = get_double("adam.epsilon");
        if (a.learning_rate < 0 || a.weight_decay < 0)
            throw ValidationError("config: adam rates must be non-negative");
        return a;
    }

    TrainConfig train() const {
        TrainConfig t;
        t.batch_size = get_int("train.batch_size");
        t.epochs = get_int("train.epochs");
        t.seed = get_u64("train.seed");
        t.adam = adam();
        t.arm = arm_from_string(get("train.arm"));
        t.exemplars_per_query = get_int("train.exemplars_per_query");
        t.dimension = static_cast<std::size_t>(get_int("data.dimension"));
        t.early_stop_patience = get_int("train.early_stop");
        t.train_backbone = get_bool("train.finetune_backbone");
        t.validate();
        return t;
    }

    SamplerSpec sampler() const {
        SamplerSpec s;
        s.start_indices = get_ints("sampler.start_indices");
        s.window = get_int("sampler.window");
        return s;
    }

    BackboneSpec backbone() const {
        BackboneSpec b;
        const std::string& kind = get("backbone.kind");
        if (kind == "smallcnn")
            b.kind = BackboneKind::SmallCnn;
        else if (kind == "precomputed")
            b.kind = BackboneKind::Precomputed;
        else
            throw ValidationError("config: unknown backbone.kind '" + kind + "'");
        b.channels = get_ints("backbone.channels");
        b.feature_dim = get_int("backbone.feature_dim");
        b.input_window = preprocessor_window(preprocessor());
        b.validate();
        return b;
    }

    // Arm picks the default preprocessor; explicit preprocessor.kind overrides.
    Preprocessor preprocessor() const {
        const std::string& kind = get("preprocessor.kind");
        SamplerSpec samp = sampler();
        if (kind == "overlap") return OverlapSample{samp};
        if (kind == "grid") return NonOverlapGrid{get_int("preprocessor.grid_patch")};
        if (kind == "resize") {
            int t = get_int("preprocessor.resize_target");
            return Resize{t > 0 ? t : samp.window};
        }
        if (kind != "auto")
            throw ValidationError("config: unknown preprocessor.kind '" + kind + "'");
        Arm arm = arm_from_string(get("train.arm"));
        if (arm_uses_sampling(arm)) return OverlapSample{samp};
        int t = get_int("preprocessor.resize_target");
        return Resize{t > 0 ? t : samp.window};
    }

    VoteConfig vote() const {
        VoteConfig v;
        v.num_exemplars = get_int("vote.num_exemplars");
        v.exemplar_seed = get_u64("vote.exemplar_seed");
        v.selection = selection_from_string(get("vote.selection"));
        v.shared_set = get_bool("vote.shared_set");
        return v;
    }

    static std::string trim(const std::string& s) {
        auto b = s.find_first_not_of(" \t\r");
        auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? "" : s.substr(b, e - b + 1);
    }

  private:
    long long parse_ll(const std::string& key) const {
        try {
            std::size_t pos = 0;
            long long v = std::stoll(values_.at(key), &pos);
            if (pos != values_.at(key).size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ValidationError("config: key '" + key + "' is not an integer: '" +
                                  values_.at(key) + "'");
        }
    }

    std::map<std::string, std::string> values_;
};

// ---- run manifest: seed, split, config echo, per-epoch losses ----

struct RunInfo {
    RunConfig config;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
    std::vector<double> epoch_losses;
};

inline std::uint64_t split_hash(const std::vector<std::size_t>& train_indices) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (std::size_t i : train_indices) {
        h ^= static_cast<std::uint64_t>(i);
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace detail {

template <typename T>
inline std::string join_indices(const std::vector<T>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ",";
        os << v[i];
    }
    return os.str();
}

}  // namespace detail

inline void save_run_manifest(const RunInfo& info, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("run manifest: cannot write " + path.string());
    out << "# pscr run manifest\n";
    for (const auto& [k, v] : info.config.all()) out << "config." << k << " = " << v << "\n";
    out << "split.train = " << detail::join_indices(info.train_indices) << "\n";
    out << "split.test = " << detail::join_indices(info.test_indices) << "\n";
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(split_hash(info.train_indices)));
    out << "split.hash = " << hex << "\n";
    out.precision(17);
    for (std::size_t i = 0; i < info.epoch_losses.size(); ++i)
        out << "epoch." << (i + 1) << " = " << info.epoch_losses[i] << "\n";
}

inline RunInfo load_run_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("run manifest: cannot open " + path.string());
    RunInfo info;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = RunConfig::trim(line.substr(0, eq));
        std::string val = RunConfig::trim(line.substr(eq + 1));
        if (key.rfind("config.", 0) == 0) {
            info.config.set(key.substr(7), val);
        } else if (key == "split.train" || key == "split.test") {
            auto& dst = key == "split.train" ? info.train_indices : info.test_indices;
            std::istringstream is(val);
            std::string tok;
            while (std::getline(is, tok, ',')) dst.push_back(std::stoull(tok));
        } else if (key.rfind("epoch.", 0) == 0) {
            info.epoch_losses.push_back(std::stod(val));
        }
    }
    return info;
}

}  // namespace pscr
