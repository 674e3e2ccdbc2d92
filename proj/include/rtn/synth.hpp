#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rtn/dataset.hpp"

namespace rtn {

/// Geometric condition a planted rule tests on (subject box, object box).
enum class Geometry {
    Inside,   // subject contained in object
    Above,    // boxes intersect and subject center strictly above object center
    Below,
    LeftOf,   // boxes intersect and subject center strictly left of object center
    RightOf,
    Larger,   // boxes intersect and subject area strictly larger
    Smaller,
    Overlap,  // boxes intersect
};

/// One planted rule. Rules are tried in order; the first match labels the
/// ordered pair. A class mask has bit c set when class c is allowed.
struct PlantedRule {
    std::string predicate;
    std::uint64_t subject_classes = ~0ULL;
    std::uint64_t object_classes = ~0ULL;
    Geometry geometry = Geometry::Overlap;
    /// Require subject class index < object class index.
    bool ordered_classes = false;
};

/// True when the rule's geometric condition holds for (subject, object).
bool geometry_holds(Geometry g, const Box& subject, const Box& object) noexcept;

struct GeneratorConfig {
    std::size_t num_classes = 8;
    std::size_t train_scenes = 500;
    std::size_t val_scenes = 50;
    std::size_t test_scenes = 100;
    std::size_t min_nodes = 4;
    std::size_t max_nodes = 8;
    std::size_t visual_dim = 128;
    std::size_t global_dim = 32;
    double prototype_scale = 0.2; // sd of class prototype entries
    double feature_noise = 0.1;   // sigma of Gaussian noise on class prototypes
    double detector_eps = 0.1;    // class-prob mass spread uniformly
    double min_box_size = 0.1;
    double max_box_size = 0.45;
    /// Same-class boxes in one scene never exceed this IoU (duplicates a
    /// detector's NMS would remove).
    double same_class_max_iou = 0.3;
    /// Side of the box-occupancy grid embedded in visual features (0 = none).
    std::size_t spatial_grid = 7;
    std::vector<PlantedRule> rules = default_rules();

    static std::vector<PlantedRule> default_rules();
    /// Throws ConfigError when infeasible.
    void validate() const;
    Vocab vocab() const;
};

struct DatasetSplits {
    Vocab vocab;
    std::vector<SceneRecord> train, val, test;
};

/// Generates `count` scenes. Pure function of (cfg, seed, split name).
std::vector<SceneRecord> synth_generate(const GeneratorConfig& cfg, std::uint64_t seed,
                                        std::size_t count, const std::string& split = "scene");

/// Generates train/val/test from one seed; splits use independent streams.
DatasetSplits synth_generate_splits(const GeneratorConfig& cfg, std::uint64_t seed);

/// Applies the planted rules to a node set; returns at most one relation per ordered pair.
std::vector<RelationRecord> label_relations(const GeneratorConfig& cfg,
                                            const std::vector<NodeRecord>& nodes);

}  // namespace rtn
