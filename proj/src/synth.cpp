#include "rtn/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "rtn/errors.hpp"
#include "rtn/matrix.hpp"
#include "rtn/rng.hpp"

namespace rtn {

namespace {

constexpr std::uint64_t kEven = 0x5555555555555555ULL;
constexpr std::uint64_t kOdd = 0xAAAAAAAAAAAAAAAAULL;
constexpr std::array<const char*, 8> kClassNames = {"person", "dog",  "table", "cup",
                                                    "chair",  "lamp", "book",  "plant"};

bool has_class(std::uint64_t mask, std::size_t c) { return c < 64 && ((mask >> c) & 1ULL); }

struct SceneStatics {
    std::vector<std::vector<double>> prototypes;  // C x (visual_dim - 4)
    Matrix projection;                            // global_dim x visual_dim
};

SceneStatics make_statics(const GeneratorConfig& cfg, std::uint64_t seed) {
    Rng rng(Rng::splitmix(seed ^ 0x70726f746f747970ULL));
    SceneStatics s;
    const std::size_t proto_dim = cfg.visual_dim - 4 - cfg.spatial_grid * cfg.spatial_grid;
    s.prototypes.assign(cfg.num_classes, std::vector<double>(proto_dim));
    for (auto& p : s.prototypes)
        for (double& v : p) v = rng.normal(0.0, cfg.prototype_scale);
    s.projection = Matrix(cfg.global_dim, cfg.visual_dim);
    const double sd = 1.0 / std::sqrt(static_cast<double>(cfg.visual_dim));
    for (double& v : s.projection.data()) v = rng.normal(0.0, sd);
    return s;
}

Box sample_box(const GeneratorConfig& cfg, Rng& rng) {
    const double w = rng.uniform(cfg.min_box_size, cfg.max_box_size);
    const double h = rng.uniform(cfg.min_box_size, cfg.max_box_size);
    const double x1 = rng.uniform(0.0, 1.0 - w);
    const double y1 = rng.uniform(0.0, 1.0 - h);
    return {x1, y1, x1 + w, y1 + h};
}

// Fraction of each grid cell covered by the box, row-major from the top-left.
void append_occupancy(const Box& b, std::size_t g, std::vector<double>& out) {
    const double cell = 1.0 / static_cast<double>(g);
    for (std::size_t r = 0; r < g; ++r) {
        for (std::size_t c = 0; c < g; ++c) {
            const Box cb{c * cell, r * cell, (c + 1) * cell, (r + 1) * cell};
            out.push_back(intersection_area(b, cb) / (cell * cell));
        }
    }
}

SceneRecord make_scene(const GeneratorConfig& cfg, const SceneStatics& statics, Rng& rng,
                       std::string id) {
    SceneRecord scene;
    scene.id = std::move(id);
    const std::size_t span = cfg.max_nodes - cfg.min_nodes + 1;
    const std::size_t n = cfg.min_nodes + static_cast<std::size_t>(rng.below(span));
    const std::size_t C = cfg.num_classes;
    for (std::size_t i = 0; i < n; ++i) {
        NodeRecord node;
        node.gt_class = static_cast<std::size_t>(rng.below(C));
        for (int attempt = 0;; ++attempt) {
            node.box = sample_box(cfg, rng);
            const bool clash = std::any_of(scene.nodes.begin(), scene.nodes.end(), [&](const NodeRecord& o) {
                return o.gt_class == node.gt_class && iou(o.box, node.box) > cfg.same_class_max_iou;
            });
            if (!clash) break;
            if (attempt > 1000) throw ConfigError("synth: cannot place non-overlapping same-class boxes");
        }
        const auto& proto = statics.prototypes[node.gt_class];
        node.visual.reserve(cfg.visual_dim);
        for (double v : proto) node.visual.push_back(v + rng.normal(0.0, cfg.feature_noise));
        append_occupancy(node.box, cfg.spatial_grid, node.visual);
        for (double c : node.box.coords()) node.visual.push_back(c);
        node.class_probs.assign(C, cfg.detector_eps / static_cast<double>(C));
        node.class_probs[node.gt_class] += 1.0 - cfg.detector_eps;
        scene.nodes.push_back(std::move(node));
    }
    scene.relations = label_relations(cfg, scene.nodes);

    std::vector<double> mean(cfg.visual_dim, 0.0);
    for (const auto& node : scene.nodes)
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += node.visual[k] / static_cast<double>(n);
    scene.global.assign(cfg.global_dim, 0.0);
    for (std::size_t g = 0; g < cfg.global_dim; ++g)
        for (std::size_t k = 0; k < mean.size(); ++k) scene.global[g] += statics.projection(g, k) * mean[k];
    return scene;
}

}  // namespace

bool geometry_holds(Geometry g, const Box& s, const Box& o) noexcept {
    const bool touching = intersection_area(s, o) > 0.0;
    switch (g) {
        case Geometry::Inside: return contains(o, s);
        case Geometry::Above: return touching && s.center_y() < o.center_y();
        case Geometry::Below: return touching && s.center_y() > o.center_y();
        case Geometry::LeftOf: return touching && s.center_x() < o.center_x();
        case Geometry::RightOf: return touching && s.center_x() > o.center_x();
        case Geometry::Larger: return touching && s.area() > o.area();
        case Geometry::Smaller: return touching && s.area() < o.area();
        case Geometry::Overlap: return touching;
    }
    return false;
}

std::vector<PlantedRule> GeneratorConfig::default_rules() {
    // Only flip-invariant geometry, so horizontal-flip augmentation keeps labels valid.
    constexpr std::uint64_t kLow = 0x0FULL, kHigh = 0xF0ULL;
    return {
        {"inside", kLow, kHigh, Geometry::Inside, false},
        {"on", kEven, kOdd, Geometry::Above, false},
        {"under", kEven, kOdd, Geometry::Below, false},
        {"holds", kOdd, kEven, Geometry::Larger, false},
        {"part_of", kOdd, kEven, Geometry::Smaller, false},
        {"near", ~0ULL, ~0ULL, Geometry::Overlap, true},
    };
}

void GeneratorConfig::validate() const {
    if (num_classes < 2 || num_classes > 64) throw ConfigError("gen.num_classes must be in [2, 64]");
    if (min_nodes < 2) throw ConfigError("gen.min_nodes must be >= 2");
    if (max_nodes < min_nodes) throw ConfigError("gen.max_nodes must be >= gen.min_nodes");
    if (visual_dim < 5 + spatial_grid * spatial_grid) {
        throw ConfigError("gen.visual_dim must exceed 4 + spatial_grid^2 (box coordinates and occupancy are appended)");
    }
    if (global_dim < 1) throw ConfigError("gen.global_dim must be >= 1");
    if (!(prototype_scale > 0.0)) throw ConfigError("gen.prototype_scale must be positive");
    if (feature_noise < 0.0) throw ConfigError("gen.feature_noise must be >= 0");
    if (detector_eps < 0.0 || detector_eps > 1.0) throw ConfigError("gen.detector_eps must be in [0, 1]");
    if (!(min_box_size > 0.0) || max_box_size < min_box_size || max_box_size >= 1.0) {
        throw ConfigError("gen box sizes must satisfy 0 < min <= max < 1");
    }
    if (rules.empty()) throw ConfigError("gen: rule set is empty");
    try {
        vocab().validate();
    } catch (const ValidationError& e) {
        throw ConfigError(std::string("gen: ") + e.what());
    }
}

Vocab GeneratorConfig::vocab() const {
    Vocab v;
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (c < kClassNames.size()) {
            v.classes.emplace_back(kClassNames[c]);
        } else {
            v.classes.push_back("class_" + std::to_string(c));
        }
    }
    v.predicates.emplace_back("__background__");
    for (const auto& r : rules) {
        if (std::find(v.predicates.begin(), v.predicates.end(), r.predicate) == v.predicates.end()) {
            v.predicates.push_back(r.predicate);
        }
    }
    return v;
}

std::vector<RelationRecord> label_relations(const GeneratorConfig& cfg,
                                            const std::vector<NodeRecord>& nodes) {
    const Vocab vocab = cfg.vocab();
    std::vector<RelationRecord> out;
    for (std::size_t s = 0; s < nodes.size(); ++s) {
        for (std::size_t o = 0; o < nodes.size(); ++o) {
            if (s == o) continue;
            const std::size_t cs = nodes[s].gt_class, co = nodes[o].gt_class;
            for (const auto& rule : cfg.rules) {
                if (!has_class(rule.subject_classes, cs) || !has_class(rule.object_classes, co)) continue;
                if (rule.ordered_classes && !(cs < co)) continue;
                if (!geometry_holds(rule.geometry, nodes[s].box, nodes[o].box)) continue;
                const auto it = std::find(vocab.predicates.begin(), vocab.predicates.end(), rule.predicate);
                out.push_back({s, o, static_cast<std::size_t>(it - vocab.predicates.begin())});
                break;
            }
        }
    }
    return out;
}

std::vector<SceneRecord> synth_generate(const GeneratorConfig& cfg, std::uint64_t seed,
                                        std::size_t count, const std::string& split) {
    cfg.validate();
    const SceneStatics statics = make_statics(cfg, seed);
    Rng rng(Rng::splitmix(seed ^ fnv1a64(split)));
    std::vector<SceneRecord> scenes;
    scenes.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        char id[64];
        std::snprintf(id, sizeof id, "%s-%06zu", split.c_str(), i);
        scenes.push_back(make_scene(cfg, statics, rng, id));
    }
    return scenes;
}

DatasetSplits synth_generate_splits(const GeneratorConfig& cfg, std::uint64_t seed) {
    DatasetSplits d;
    d.vocab = cfg.vocab();
    d.train = synth_generate(cfg, seed, cfg.train_scenes, "train");
    d.val = synth_generate(cfg, seed, cfg.val_scenes, "val");
    d.test = synth_generate(cfg, seed, cfg.test_scenes, "test");
    return d;
}

}  // namespace rtn
