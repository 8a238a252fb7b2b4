// iptdet: dataset statistics, corpus splitting, training, evaluation,
// single-file prediction and fixture synthesis behind one executable.

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "iptdet/commands.hpp"
#include "iptdet/errors.hpp"

namespace {

std::optional<std::filesystem::path> opt_path(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return std::filesystem::path(s);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"frame-level detection of instrument playing techniques"};
    app.require_subcommand(1);
    std::function<int()> run;

    // stats
    auto* stats = app.add_subcommand("stats", "per-class note statistics of a corpus");
    std::string stats_corpus, stats_out;
    stats->add_option("corpus", stats_corpus, "corpus directory")->required();
    stats->add_option("--out", stats_out, "also write the table to this file");
    stats->callback([&] {
        run = [&] { return iptdet::cmd_stats(stats_corpus, opt_path(stats_out)); };
    });

    // split
    auto* split = app.add_subcommand("split", "partition a corpus into train/valid/test");
    std::string split_corpus_dir, split_out;
    std::vector<int> split_sizes{79, 10, 10};
    std::uint64_t split_seed = 0;
    split->add_option("corpus", split_corpus_dir, "corpus directory")->required();
    split->add_option("--sizes", split_sizes, "track counts: train valid test")
        ->expected(3);
    split->add_option("--seed", split_seed, "split seed");
    split->add_option("--out", split_out, "write the split JSON to this file");
    split->callback([&] {
        run = [&] {
            return iptdet::cmd_split(split_corpus_dir,
                                     {split_sizes[0], split_sizes[1], split_sizes[2]},
                                     split_seed, opt_path(split_out));
        };
    });

    // train
    auto* train = app.add_subcommand("train", "train a model from a run config");
    std::string train_config, train_out;
    std::int64_t train_seed = -1;
    train->add_option("--config", train_config, "run config JSON")->required();
    train->add_option("--seed", train_seed, "override the training seed");
    train->add_option("--out", train_out, "override the run directory");
    train->callback([&] {
        run = [&] {
            iptdet::RunConfig cfg = iptdet::load_run_config(train_config);
            if (train_seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(train_seed);
            if (!train_out.empty()) cfg.output_dir = train_out;
            return iptdet::cmd_train(cfg);
        };
    });

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    std::string eval_ckpt, eval_config, eval_out;
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--config", eval_config, "run config JSON naming the corpus and split")
        ->required();
    eval->add_option("--out", eval_out, "report directory")->required();
    eval->callback([&] {
        run = [&] {
            const iptdet::RunConfig cfg = iptdet::load_run_config(eval_config);
            return iptdet::cmd_eval(eval_ckpt, cfg, eval_out);
        };
    });

    // predict
    auto* predict = app.add_subcommand("predict", "frame-level activations for one audio file");
    std::string pred_ckpt, pred_audio, pred_out, pred_fig;
    predict->add_option("--checkpoint", pred_ckpt, "checkpoint file")->required();
    predict->add_option("audio", pred_audio, "input audio file")->required();
    predict->add_option("--out", pred_out, "output TSV path")->required();
    predict->add_option("--figure", pred_fig, "also render a piano-roll PNG here");
    predict->callback([&] {
        run = [&] {
            return iptdet::cmd_predict(pred_ckpt, pred_audio, pred_out, opt_path(pred_fig));
        };
    });

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic fixture corpus");
    std::string synth_out;
    int synth_tracks = 20;
    double synth_duration = 10.0;
    std::uint64_t synth_seed = 0;
    synth->add_option("out", synth_out, "output corpus directory")->required();
    synth->add_option("--tracks", synth_tracks, "number of tracks");
    synth->add_option("--duration", synth_duration, "seconds per track");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->callback([&] {
        run = [&] {
            return iptdet::cmd_synth(synth_out, synth_tracks, synth_duration, synth_seed);
        };
    });

    CLI11_PARSE(app, argc, argv);

    try {
        return run();
    } catch (const iptdet::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const iptdet::ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const iptdet::ValidationError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const iptdet::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const iptdet::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
