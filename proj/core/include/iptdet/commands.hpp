#pragma once

// Command implementations behind the CLI subcommands. Each returns a process
// exit code (0 on success) and reports through the given streams; errors in
// preconditions or inputs surface as the library's exception types, which the
// CLI maps to categorized exit codes.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "iptdet/audio.hpp"
#include "iptdet/config.hpp"
#include "iptdet/dataset.hpp"
#include "iptdet/evaluation.hpp"
#include "iptdet/features.hpp"
#include "iptdet/model.hpp"

namespace iptdet {

/// Output streams for a command; null members default to std::cout/std::cerr.
struct CommandIo {
    std::ostream* out = nullptr;
    std::ostream* err = nullptr;
};

/// Per-class note statistics of a corpus, printed and optionally written to
/// a file. An annotation-free corpus prints an empty table with a warning
/// and still succeeds.
int cmd_stats(const std::filesystem::path& corpus_dir,
              const std::optional<std::filesystem::path>& out_file, const CommandIo& io = {});

/// Partitions a corpus into train/valid/test and writes the id lists as JSON.
int cmd_split(const std::filesystem::path& corpus_dir, const std::array<int, 3>& sizes,
              std::uint64_t seed, const std::optional<std::filesystem::path>& out_file,
              const CommandIo& io = {});

/// Full training run into cfg.output_dir: resolves the split, extracts
/// features for the train and valid sets, trains, and leaves config.json,
/// split.json, log.csv, best.ckpt and last.ckpt behind. The output directory
/// must be new or empty. Returns nonzero if training diverged.
int cmd_train(const RunConfig& cfg, const CommandIo& io = {});

/// Evaluates a checkpoint on the test split of cfg's corpus and writes
/// report.txt, confusion.png and per-track piano-roll figures into out_dir
/// (which must be new or empty). When cfg carries a non-default model
/// section it must match the checkpoint's. Returns nonzero when any
/// annotated track had to be skipped.
int cmd_eval(const std::filesystem::path& checkpoint_path, const RunConfig& cfg,
             const std::filesystem::path& out_dir, const CommandIo& io = {});

/// Runs a checkpoint over one audio file and writes per-frame likelihoods
/// and binarized activations as TSV, plus an optional piano-roll figure.
/// Nothing is written unless prediction succeeds.
int cmd_predict(const std::filesystem::path& checkpoint_path,
                const std::filesystem::path& audio_path,
                const std::filesystem::path& out_tsv,
                const std::optional<std::filesystem::path>& figure,
                const CommandIo& io = {});

/// Generates a synthetic fixture corpus for desk-scale experiments.
int cmd_synth(const std::filesystem::path& out_dir, int n_tracks, double duration,
              std::uint64_t seed, const CommandIo& io = {});

/// Stitched whole-track prediction: cuts the waveform into 3 s clips,
/// predicts each, and concatenates the clips' owned columns so the result
/// has exactly one column per CQT frame of the track.
Prediction predict_track(MultiScaleNet& net, const Waveform& w, FeatureCache* cache = nullptr,
                         const std::string& source_id = "input");

/// The structured text report cmd_eval writes: config identity, split,
/// overall/per-class metrics, confusion counts and proportions, per-track
/// scores and any skipped tracks.
std::string format_report(const EvaluationReport& report, const RunConfig& cfg,
                          const std::string& checkpoint_hash, const CorpusSplit& split);

} // namespace iptdet
