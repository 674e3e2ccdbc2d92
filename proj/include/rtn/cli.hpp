#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "rtn/run_config.hpp"

namespace rtn::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kInternal = 3 };

/// Entry point of the `rtn` tool. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct DataBundle {
    Vocab vocab;
    std::uint64_t seed = 0;
    std::vector<SceneRecord> train, val, test;

    const std::vector<SceneRecord>& split(const std::string& name) const;
};

/// Writes train/val/test .jsonl plus manifest.json into `dir`.
DataBundle generate_data(const RunConfig& cfg, const std::filesystem::path& dir);
DataBundle load_data(const std::filesystem::path& dir);

/// Model config for this dataset: counts and feature dimensions come from the data.
ModelConfig model_config_for(const RunConfig& cfg, const DataBundle& data);
RtnModel make_model(const RunConfig& cfg, const DataBundle& data);
/// Rebuilds a model from a checkpoint; the vocab hash must match the data.
RtnModel load_model(const std::filesystem::path& checkpoint, const RunConfig& cfg, const DataBundle& data);

struct Variant {
    std::string name;
    std::vector<std::pair<std::string, std::string>> settings;
};

/// `name: key=value key=value ...` per line; '#' comments. Keys outside
/// embed.*, model.*, train.* and freq.* are rejected.
std::vector<Variant> parse_sweep(const std::string& text);
/// The three decoder/PE variants compared by default.
std::vector<Variant> default_sweep();

/// Trains and evaluates each variant on shared data and seed; returns the CSV table.
std::string run_ablation(const RunConfig& base, const DataBundle& data, const std::vector<Variant>& variants,
                         std::ostream* progress = nullptr);

}  // namespace rtn::cli
