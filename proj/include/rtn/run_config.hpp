#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "rtn/evaluation.hpp"
#include "rtn/model.hpp"
#include "rtn/synth.hpp"
#include "rtn/training.hpp"

namespace rtn {

/// Every tunable of a run. Class/predicate counts and feature dimensions of
/// the model come from the dataset at run time, not from here.
struct RunConfig {
    std::uint64_t seed = 42;
    double freq_alpha = 1.0;
    GeneratorConfig gen;
    ModelConfig model;
    TrainConfig train;
    EvalConfig eval;

    /// Applies one `key=value` pair. Throws ConfigError on unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    /// All keys in dump order.
    static const std::vector<std::string>& keys();

    /// `key = value` lines, reloadable with load().
    std::string dump() const;
    /// Applies a config file on top of the current values. '#' starts a comment.
    void load_text(const std::string& text, const std::string& origin = "config");
    void load_file(const std::filesystem::path& path);

    /// Propagates the shared seed and validates every section.
    void finalize();
};

/// Splits "key=value" (whitespace around either side is trimmed).
std::pair<std::string, std::string> split_assignment(const std::string& text);

}  // namespace rtn
