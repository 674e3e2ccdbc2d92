#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rtn/dataset.hpp"
#include "rtn/frequency.hpp"
#include "rtn/model.hpp"
#include "rtn/rng.hpp"

namespace rtn {

enum class PairPolicy { AllPairs, OverlapOnly };

std::string to_string(PairPolicy p);

/// Noise model of the stand-in detector used for SGDET.
struct DetectorNoise {
    double box_sigma = 0.02;     // Gaussian jitter per coordinate
    double score_noise = 0.1;    // log-normal perturbation of class probabilities
    double spurious_rate = 0.2;  // expected spurious detections per gt node
    double nms_iou = 0.3;
    std::size_t max_detections = 64;
};

struct EvalConfig {
    std::vector<Mode> modes{Mode::PredCls};
    bool with_constraint = true;
    bool without_constraint = true;
    std::vector<std::size_t> ks{20, 50, 100};
    double match_iou = 0.5;
    /// Unset: all pairs for PREDCLS/SGCLS, overlapping pairs for SGDET.
    std::optional<PairPolicy> pair_policy;
    DetectorNoise noise;
    std::uint64_t seed = 42;

    PairPolicy policy_for(Mode m) const;
    void validate() const;
};

/// Ordered pairs (i, j), i != j, in row-major order. OverlapOnly keeps pairs
/// whose boxes have positive intersection area.
std::vector<DirectedCandidate> candidate_pairs(std::span<const Box> boxes, PairPolicy policy);

/// What a scorer emits for one scene.
struct SceneScores {
    std::vector<std::size_t> classes;    // predicted (or gt) class per node
    std::vector<double> class_scores;    // 1.0 in PREDCLS
    std::vector<DirectedCandidate> pairs;
    Matrix predicate_scores;             // pairs x p, column 0 = background
};

struct TripletPrediction {
    std::size_t subject = 0;
    std::size_t object = 0;
    std::size_t predicate = 1;
    double score = 0.0;
    std::size_t pair_index = 0;

    bool operator==(const TripletPrediction&) const = default;
};

/// Triplet score = subject class score x predicate score x object class score.
/// With the graph constraint only the best foreground predicate per pair
/// survives (lowest index on ties). Sorted by descending score, ties by
/// (pair index, predicate).
std::vector<TripletPrediction> rank_triplets(const SceneScores& scores, bool graph_constraint);

/// Predicted-side view of the nodes used for matching.
struct PredictedNodes {
    std::vector<Box> boxes;
    std::vector<std::size_t> classes;
};

/// For each gt relation, the 0-based rank of the first prediction in
/// `ranked` that matches it, or -1. PREDCLS/SGCLS match on node indices
/// (SGCLS also on predicted classes); SGDET on boxes (IoU >= match_iou) and
/// classes. Every gt counts at most once.
std::vector<long> match_triplets(std::span<const TripletPrediction> ranked, const SceneRecord& gt,
                                 const PredictedNodes& predicted, Mode mode, double match_iou,
                                 std::size_t top_k);

/// Fraction of gt relations matched within the top K, per K. Empty when gt is empty.
std::vector<double> recall_at_k(std::span<const long> first_match_ranks, std::span<const std::size_t> ks);

/// Pooled per-predicate hit/total counts for mean recall.
struct PredicateTally {
    std::vector<std::size_t> hits;   // per predicate
    std::vector<std::size_t> total;  // per predicate
};

void tally_predicates(PredicateTally& tally, std::span<const long> first_match_ranks, const SceneRecord& gt,
                      std::size_t k);

/// Per-predicate recalls (NaN for classes without gt) and their unweighted
/// mean over classes with >= 1 gt instance.
struct MeanRecall {
    std::vector<double> per_predicate;
    double mean = 0.0;
};
MeanRecall mean_recall(const PredicateTally& tally);

// Detector simulation --------------------------------------------------------

struct Detections {
    std::vector<NodeRecord> nodes;           // box, visual, class_probs; gt_class unused
    std::vector<double> scores;
    std::vector<std::optional<std::size_t>> source;  // gt node a detection came from
};

/// Jitters gt boxes, perturbs class probabilities, adds spurious boxes,
/// applies class-wise NMS and keeps the top `max_detections` by score.
/// Kept detections stay in generation order (gt-derived first).
Detections simulate_detections(const SceneRecord& scene, const DetectorNoise& noise, Rng& rng);

// Scorers -----------------------------------------------------------------

class Scorer {
public:
    virtual ~Scorer() = default;
    virtual SceneScores score(std::span<const NodeRecord> nodes, std::span<const double> global, Mode mode,
                              std::vector<DirectedCandidate> pairs) const = 0;
};

/// Predicate scores straight from exp(frequency logits).
class FrequencyScorer final : public Scorer {
public:
    explicit FrequencyScorer(FrequencyTable fq) : fq_(std::move(fq)) {}
    SceneScores score(std::span<const NodeRecord> nodes, std::span<const double> global, Mode mode,
                      std::vector<DirectedCandidate> pairs) const override;

private:
    FrequencyTable fq_;
};

class ModelScorer final : public Scorer {
public:
    explicit ModelScorer(const RtnModel& model) : model_(model) {}
    SceneScores score(std::span<const NodeRecord> nodes, std::span<const double> global, Mode mode,
                      std::vector<DirectedCandidate> pairs) const override;

private:
    const RtnModel& model_;
};

/// Model input for a mode: PREDCLS feeds gt one-hots to the semantic features
/// and gt classes to the frequency lookup; SGCLS/SGDET feed detector class
/// probabilities and leave the lookup to the classifier's argmax.
ModelInput make_model_input(std::span<const NodeRecord> nodes, std::span<const double> global, Mode mode,
                            std::vector<DirectedCandidate> candidates, std::size_t num_classes);

std::size_t argmax(std::span<const double> v);

// Reports ------------------------------------------------------------------

struct RecallEntry {
    Mode mode = Mode::PredCls;
    bool constraint = true;
    std::size_t k = 20;
    double recall = 0.0;
    double mean_recall = 0.0;
    std::size_t scenes = 0;    // scenes with >= 1 gt relation
    std::size_t gt_total = 0;
    std::vector<double> per_predicate;
    std::vector<std::size_t> per_predicate_gt;
};

struct MetricReport {
    std::vector<RecallEntry> entries;

    const RecallEntry& get(Mode mode, bool constraint, std::size_t k) const;
    /// Summary table followed by a blank line and the per-predicate table.
    std::string to_csv(const Vocab& vocab) const;
};

/// Runs the mode-appropriate pipeline over every scene. Throws UsageError on an empty dataset.
MetricReport evaluate(std::span<const SceneRecord> scenes, const Scorer& scorer, const EvalConfig& cfg,
                      std::size_t num_predicates);

}  // namespace rtn
