#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rtn/dataset.hpp"
#include "rtn/model.hpp"

namespace rtn {

struct TrainConfig {
    double lr = 1e-3;
    std::size_t batch_scenes = 16;
    std::size_t epochs = 20;
    std::size_t bg_ratio = 4;  // background candidates per foreground; 0 disables
    int plateau_patience = 3;
    double plateau_factor = 0.5;
    std::uint64_t seed = 42;
    double momentum = 0.9;
    double object_weight = 1.0;
    double relation_weight = 1.0;
    double flip_prob = 0.5;

    void validate() const;
};

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double object_loss = 0.0;
    double relation_loss = 0.0;
    double val_r20 = 0.0;
    double lr = 0.0;
};

struct TrainLog {
    std::vector<EpochLog> epochs;
    std::size_t best_epoch = 0;  // 0 when no epoch ran
    double best_val_r20 = 0.0;

    /// `epoch,obj_loss,rel_loss,val_r20,lr`, one row per epoch.
    std::string to_csv() const;
};

struct LabeledCandidate {
    DirectedCandidate pair;
    std::size_t label = 0;  // 0 = background
};

/// Every gt pair as foreground (scene relation order), then backgrounds drawn
/// without replacement: ratio x #fg of them, or min(ratio, available) when
/// the scene has no relations.
std::vector<LabeledCandidate> sample_edges(const SceneRecord& scene, std::size_t ratio, Rng& rng);

struct LossTerms {
    ad::Var total;
    double object = 0.0;
    double relation = 0.0;  // 0 when there are no candidates
};

/// w_obj * CE(object logits, gt classes) + w_rel * CE(relation logits, labels).
LossTerms total_loss(const ForwardOutput& out, std::span<const std::size_t> labels,
                     std::span<const std::size_t> gt_classes, double object_weight, double relation_weight);

/// Horizontal mirror: x1' = 1 - x2, x2' = 1 - x1. Labels and features unchanged.
SceneRecord flip_scene(const SceneRecord& scene);

/// Builds the training input for one scene: detector class probabilities for
/// the semantic features, gt classes for the frequency lookup.
ModelInput training_input(const SceneRecord& scene, std::span<const LabeledCandidate> candidates);

/// PREDCLS R@20 with graph constraint.
double validation_r20(std::span<const SceneRecord> val, const RtnModel& model);

/// Trains in place and leaves the best-validation parameters in `model`.
/// Throws ConfigError on an empty training set. `progress` gets one line per epoch.
TrainLog train(std::span<const SceneRecord> train_set, std::span<const SceneRecord> val_set, RtnModel& model,
               const TrainConfig& cfg, std::ostream* progress = nullptr);

}  // namespace rtn
