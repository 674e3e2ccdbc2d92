#include "rtn/training.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <set>
#include <utility>

#include "rtn/errors.hpp"
#include "rtn/evaluation.hpp"
#include "rtn/optim.hpp"

namespace rtn {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
    if (batch_scenes == 0) throw ConfigError("train.batch_scenes must be positive");
    if (epochs == 0) throw ConfigError("train.epochs must be positive");
    if (plateau_patience < 1) throw ConfigError("train.plateau_patience must be >= 1");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ConfigError("train.plateau_factor must be in (0, 1)");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train.momentum must be in [0, 1)");
    if (object_weight < 0.0 || relation_weight < 0.0) throw ConfigError("train loss weights must be >= 0");
    if (flip_prob < 0.0 || flip_prob > 1.0) throw ConfigError("train.flip_prob must be in [0, 1]");
}

std::string TrainLog::to_csv() const {
    std::string out = "epoch,obj_loss,rel_loss,val_r20,lr\n";
    char buf[160];
    for (const auto& e : epochs) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.6f,%.9g\n", e.epoch, e.object_loss, e.relation_loss,
                      e.val_r20, e.lr);
        out += buf;
    }
    return out;
}

std::vector<LabeledCandidate> sample_edges(const SceneRecord& scene, std::size_t ratio, Rng& rng) {
    std::vector<LabeledCandidate> out;
    std::set<std::pair<std::size_t, std::size_t>> labeled;
    for (const auto& r : scene.relations) {
        out.push_back({{r.subject, r.object}, r.predicate});
        labeled.emplace(r.subject, r.object);
    }
    std::vector<DirectedCandidate> background;
    for (std::size_t i = 0; i < scene.nodes.size(); ++i)
        for (std::size_t j = 0; j < scene.nodes.size(); ++j)
            if (i != j && !labeled.count({i, j})) background.push_back({i, j});

    const std::size_t want = out.empty() ? ratio : ratio * out.size();
    const std::size_t take = std::min(want, background.size());
    // Partial Fisher-Yates: the first `take` entries are a uniform sample.
    for (std::size_t k = 0; k < take; ++k) {
        const std::size_t pick = k + static_cast<std::size_t>(rng.below(background.size() - k));
        std::swap(background[k], background[pick]);
        out.push_back({background[k], 0});
    }
    return out;
}

LossTerms total_loss(const ForwardOutput& out, std::span<const std::size_t> labels,
                     std::span<const std::size_t> gt_classes, double object_weight, double relation_weight) {
    LossTerms t;
    ad::Var obj = ad::cross_entropy(out.object_logits, gt_classes);
    t.object = obj->value(0, 0);
    t.total = ad::scale(obj, object_weight);
    if (!labels.empty()) {
        if (!out.relation_logits || out.relation_logits->rows() != labels.size()) {
            throw DimensionError("total_loss: label count does not match relation logits");
        }
        ad::Var rel = ad::cross_entropy(out.relation_logits, labels);
        t.relation = rel->value(0, 0);
        t.total = ad::add(t.total, ad::scale(rel, relation_weight));
    }
    return t;
}

SceneRecord flip_scene(const SceneRecord& scene) {
    SceneRecord out = scene;
    for (auto& n : out.nodes) n.box = flip_horizontal(n.box);
    return out;
}

ModelInput training_input(const SceneRecord& scene, std::span<const LabeledCandidate> candidates) {
    ModelInput in;
    in.nodes = scene.nodes;
    in.global = scene.global;
    for (const auto& n : scene.nodes) {
        in.semantic_probs.push_back(n.class_probs);
        in.fq_classes.push_back(n.gt_class);
    }
    for (const auto& c : candidates) in.candidates.push_back(c.pair);
    return in;
}

double validation_r20(std::span<const SceneRecord> val, const RtnModel& model) {
    if (val.empty()) return 0.0;
    EvalConfig ec;
    ec.modes = {Mode::PredCls};
    ec.without_constraint = false;
    ec.ks = {20};
    const ModelScorer scorer(model);
    return evaluate(val, scorer, ec, model.config().num_predicates).get(Mode::PredCls, true, 20).recall;
}

TrainLog train(std::span<const SceneRecord> train_set, std::span<const SceneRecord> val_set, RtnModel& model,
               const TrainConfig& cfg, std::ostream* progress) {
    cfg.validate();
    if (train_set.empty()) throw ConfigError("train: training set is empty");

    Rng rng(cfg.seed);
    SgdMomentum opt(model.params().list(), cfg.lr, cfg.momentum);
    PlateauScheduler sched(cfg.plateau_patience, cfg.plateau_factor);
    RtnParams best = model.params().clone();
    TrainLog log;
    bool have_best = false;

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double obj_sum = 0.0, rel_sum = 0.0;
        std::size_t rel_scenes = 0;
        const double lr_used = opt.lr();

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_scenes) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_scenes);
            const double inv = 1.0 / static_cast<double>(end - start);
            for (std::size_t b = start; b < end; ++b) {
                const SceneRecord& raw = train_set[order[b]];
                SceneRecord flipped;
                const bool flip = rng.bernoulli(cfg.flip_prob);
                if (flip) flipped = flip_scene(raw);
                const SceneRecord& scene = flip ? flipped : raw;

                const auto candidates = sample_edges(scene, cfg.bg_ratio, rng);
                std::vector<std::size_t> labels, classes;
                for (const auto& c : candidates) labels.push_back(c.label);
                for (const auto& n : scene.nodes) classes.push_back(n.gt_class);

                const ForwardOutput out = model.forward(training_input(scene, candidates), {true, &rng});
                LossTerms loss = total_loss(out, labels, classes, cfg.object_weight, cfg.relation_weight);
                ad::backward(ad::scale(loss.total, inv));
                obj_sum += loss.object;
                if (!labels.empty()) {
                    rel_sum += loss.relation;
                    ++rel_scenes;
                }
            }
            opt.step();
        }

        EpochLog e;
        e.epoch = epoch;
        e.object_loss = obj_sum / static_cast<double>(order.size());
        e.relation_loss = rel_scenes ? rel_sum / static_cast<double>(rel_scenes) : 0.0;
        e.val_r20 = validation_r20(val_set, model);
        e.lr = lr_used;
        log.epochs.push_back(e);
        if (!have_best || e.val_r20 > log.best_val_r20) {
            have_best = true;
            log.best_val_r20 = e.val_r20;
            log.best_epoch = epoch;
            best.copy_values_from(model.params());
        }
        sched.step(e.val_r20, opt);
        if (progress) {
            char buf[200];
            std::snprintf(buf, sizeof buf, "epoch %zu/%zu obj %.4f rel %.4f val_r20 %.4f lr %.3g\n", epoch, cfg.epochs,
                          e.object_loss, e.relation_loss, e.val_r20, e.lr);
            *progress << buf << std::flush;
        }
    }
    model.params().copy_values_from(best);
    return log;
}

}  // namespace rtn
