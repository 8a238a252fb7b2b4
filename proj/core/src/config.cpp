#include "iptdet/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "iptdet/errors.hpp"
#include "serialize.hpp"

namespace iptdet {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& origin, const std::string& section) {
    if (!j.is_object())
        throw ParseError(origin + ": " + section + " must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!allowed.contains(key))
            throw ParseError(origin + ": unknown key \"" + key + "\" in " + section);
}

} // namespace

void to_json(json& j, const TrainConfig& c) {
    j = json{{"momentum", c.momentum},     {"initial_lr", c.initial_lr},
             {"batch_size", c.batch_size}, {"grad_clip_l2", c.grad_clip_l2},
             {"epochs", c.epochs},         {"seed", c.seed},
             {"weight_max", c.weight_max}};
}

void from_json(const json& j, TrainConfig& c) {
    TrainConfig d;
    c.momentum = j.value("momentum", d.momentum);
    c.initial_lr = j.value("initial_lr", d.initial_lr);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.grad_clip_l2 = j.value("grad_clip_l2", d.grad_clip_l2);
    c.epochs = j.value("epochs", d.epochs);
    c.seed = j.value("seed", d.seed);
    c.weight_max = j.value("weight_max", d.weight_max);
}

void RunConfig::validate() const {
    for (int s : split_sizes)
        if (s < 0) throw ConfigError("split_sizes: counts must be non-negative");
    if (split_sizes[0] + split_sizes[1] + split_sizes[2] <= 0)
        throw ConfigError("split_sizes: at least one set must be non-empty");
    model.validate();
    train.validate();
}

RunConfig parse_run_config_text(std::string_view text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(origin + ": " + e.what());
    }
    check_keys(j,
               {"corpus_dir", "cache_dir", "output_dir", "model", "train", "split_sizes",
                "split_seed"},
               origin, "run config");

    RunConfig cfg;
    try {
        cfg.corpus_dir = std::filesystem::path(j.value("corpus_dir", std::string()));
        cfg.cache_dir = std::filesystem::path(j.value("cache_dir", std::string()));
        cfg.output_dir = std::filesystem::path(j.value("output_dir", std::string()));
        if (j.contains("model")) {
            check_keys(j["model"],
                       {"n_classes", "branch_count", "downsample_factor", "stage_count",
                        "channels_per_branch", "blocks_per_stage", "attention_blocks",
                        "attention_dim", "head_channels"},
                       origin, "model");
            cfg.model = j["model"].get<ModelConfig>();
        }
        if (j.contains("train")) {
            check_keys(j["train"],
                       {"momentum", "initial_lr", "batch_size", "grad_clip_l2", "epochs",
                        "seed", "weight_max"},
                       origin, "train");
            cfg.train = j["train"].get<TrainConfig>();
        }
        if (j.contains("split_sizes")) {
            const auto& s = j["split_sizes"];
            if (!s.is_array() || s.size() != 3)
                throw ParseError(origin + ": split_sizes must be a 3-element array");
            for (int i = 0; i < 3; ++i) cfg.split_sizes[static_cast<std::size_t>(i)] = s[static_cast<std::size_t>(i)].get<int>();
        }
        cfg.split_seed = j.value("split_seed", cfg.split_seed);
    } catch (const json::exception& e) {
        throw ParseError(origin + ": " + e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_run_config: cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_run_config_text(ss.str(), path.string());
}

std::string format_run_config(const RunConfig& cfg) {
    json j{{"corpus_dir", cfg.corpus_dir.string()},
           {"cache_dir", cfg.cache_dir.string()},
           {"output_dir", cfg.output_dir.string()},
           {"model", cfg.model},
           {"train", cfg.train},
           {"split_sizes", cfg.split_sizes},
           {"split_seed", cfg.split_seed}};
    return j.dump(2) + "\n";
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("save_run_config: cannot open " + path.string());
    os << format_run_config(cfg);
    if (!os) throw IoError("save_run_config: write failed for " + path.string());
}

} // namespace iptdet
