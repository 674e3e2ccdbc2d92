#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rtn/geometry.hpp"

namespace rtn {

/// Object classes and predicates. Predicate 0 is the "no-relation" background.
struct Vocab {
    std::vector<std::string> classes;
    std::vector<std::string> predicates;

    std::size_t num_classes() const noexcept { return classes.size(); }
    std::size_t num_predicates() const noexcept { return predicates.size(); }

    /// Throws ValidationError on duplicate names, C < 2 or p < 2.
    void validate() const;
    /// Stable content hash of both name lists, as 16 hex digits.
    std::string hash() const;

    bool operator==(const Vocab&) const = default;
};

struct NodeRecord {
    Box box;
    std::vector<double> visual;
    std::vector<double> class_probs;
    std::size_t gt_class = 0;

    bool operator==(const NodeRecord&) const = default;
};

struct RelationRecord {
    std::size_t subject = 0;
    std::size_t object = 0;
    std::size_t predicate = 1;

    bool operator==(const RelationRecord&) const = default;
};

struct SceneRecord {
    std::string id;
    std::vector<NodeRecord> nodes;
    std::vector<RelationRecord> relations;
    std::vector<double> global;

    bool operator==(const SceneRecord&) const = default;
};

/// Checks every record invariant. With a vocab, class and predicate indices
/// and class-prob lengths are also checked. Throws ValidationError.
void validate_scene(const SceneRecord& scene, const Vocab* vocab = nullptr);

std::string scene_to_line(const SceneRecord& scene);
/// `line_no` only decorates error messages.
SceneRecord scene_from_line(const std::string& line, std::size_t line_no = 0);

/// Loads a line-delimited dataset. Blank lines are skipped. Errors carry the
/// 1-based line number; validation failures also name the field.
std::vector<SceneRecord> load_dataset(const std::filesystem::path& path,
                                      const Vocab* vocab = nullptr);
void save_dataset(const std::filesystem::path& path, const std::vector<SceneRecord>& scenes);

std::string vocab_to_json(const Vocab& vocab);
Vocab vocab_from_json(const std::string& text);

}  // namespace rtn
