#include "rtn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "rtn/errors.hpp"

namespace rtn {

std::string to_string(PairPolicy p) { return p == PairPolicy::AllPairs ? "all_pairs" : "overlap_only"; }

PairPolicy EvalConfig::policy_for(Mode m) const {
    if (pair_policy) return *pair_policy;
    return m == Mode::SgDet ? PairPolicy::OverlapOnly : PairPolicy::AllPairs;
}

void EvalConfig::validate() const {
    if (modes.empty()) throw ConfigError("eval: no modes selected");
    if (!with_constraint && !without_constraint) throw ConfigError("eval: no constraint setting selected");
    if (ks.empty()) throw ConfigError("eval: empty K list");
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (ks[i] == 0) throw ConfigError("eval: K must be >= 1");
        if (i && ks[i] <= ks[i - 1]) throw ConfigError("eval: K list must be strictly ascending");
    }
    if (!(match_iou > 0.0 && match_iou <= 1.0)) throw ConfigError("eval: match IoU must be in (0, 1]");
    if (noise.box_sigma < 0.0 || noise.score_noise < 0.0 || noise.spurious_rate < 0.0) {
        throw ConfigError("eval: detector noise must be non-negative");
    }
    if (noise.max_detections == 0) throw ConfigError("eval: max_detections must be positive");
}

std::vector<DirectedCandidate> candidate_pairs(std::span<const Box> boxes, PairPolicy policy) {
    std::vector<DirectedCandidate> out;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        for (std::size_t j = 0; j < boxes.size(); ++j) {
            if (i == j) continue;
            if (policy == PairPolicy::OverlapOnly && intersection_area(boxes[i], boxes[j]) <= 0.0) continue;
            out.push_back({i, j});
        }
    }
    return out;
}

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<TripletPrediction> rank_triplets(const SceneScores& s, bool graph_constraint) {
    if (s.predicate_scores.rows() != s.pairs.size()) {
        throw DimensionError("rank_triplets: " + std::to_string(s.pairs.size()) + " pairs but score matrix " +
                             s.predicate_scores.shape_str());
    }
    const std::size_t P = s.predicate_scores.cols();
    std::vector<TripletPrediction> out;
    for (std::size_t k = 0; k < s.pairs.size(); ++k) {
        const auto& pair = s.pairs[k];
        const double subj = s.class_scores.at(pair.subject), obj = s.class_scores.at(pair.object);
        auto row = s.predicate_scores.row(k);
        if (P < 2) continue;
        if (graph_constraint) {
            const std::size_t best = 1 + argmax(row.subspan(1));
            out.push_back({pair.subject, pair.object, best, subj * row[best] * obj, k});
        } else {
            for (std::size_t p = 1; p < P; ++p) out.push_back({pair.subject, pair.object, p, subj * row[p] * obj, k});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const TripletPrediction& a, const TripletPrediction& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.pair_index != b.pair_index) return a.pair_index < b.pair_index;
        return a.predicate < b.predicate;
    });
    return out;
}

std::vector<long> match_triplets(std::span<const TripletPrediction> ranked, const SceneRecord& gt,
                                 const PredictedNodes& predicted, Mode mode, double match_iou,
                                 std::size_t top_k) {
    const std::size_t limit = std::min(top_k, ranked.size());
    std::vector<long> first(gt.relations.size(), -1);
    for (std::size_t g = 0; g < gt.relations.size(); ++g) {
        const RelationRecord& rel = gt.relations[g];
        const std::size_t gs_cls = gt.nodes[rel.subject].gt_class;
        const std::size_t go_cls = gt.nodes[rel.object].gt_class;
        for (std::size_t r = 0; r < limit; ++r) {
            const TripletPrediction& t = ranked[r];
            if (t.predicate != rel.predicate) continue;
            bool ok = false;
            switch (mode) {
                case Mode::PredCls: ok = t.subject == rel.subject && t.object == rel.object; break;
                case Mode::SgCls:
                    ok = t.subject == rel.subject && t.object == rel.object &&
                         predicted.classes.at(t.subject) == gs_cls && predicted.classes.at(t.object) == go_cls;
                    break;
                case Mode::SgDet:
                    ok = predicted.classes.at(t.subject) == gs_cls && predicted.classes.at(t.object) == go_cls &&
                         iou(predicted.boxes.at(t.subject), gt.nodes[rel.subject].box) >= match_iou &&
                         iou(predicted.boxes.at(t.object), gt.nodes[rel.object].box) >= match_iou;
                    break;
            }
            if (ok) {
                first[g] = static_cast<long>(r);
                break;
            }
        }
    }
    return first;
}

std::vector<double> recall_at_k(std::span<const long> first_match_ranks, std::span<const std::size_t> ks) {
    if (first_match_ranks.empty()) return {};
    std::vector<double> out;
    for (std::size_t k : ks) {
        std::size_t hits = 0;
        for (long r : first_match_ranks)
            if (r >= 0 && static_cast<std::size_t>(r) < k) ++hits;
        out.push_back(static_cast<double>(hits) / static_cast<double>(first_match_ranks.size()));
    }
    return out;
}

void tally_predicates(PredicateTally& tally, std::span<const long> first_match_ranks, const SceneRecord& gt,
                      std::size_t k) {
    for (std::size_t g = 0; g < gt.relations.size(); ++g) {
        const std::size_t p = gt.relations[g].predicate;
        if (p >= tally.total.size()) throw IndexError("tally_predicates: predicate out of range");
        ++tally.total[p];
        const long r = first_match_ranks[g];
        if (r >= 0 && static_cast<std::size_t>(r) < k) ++tally.hits[p];
    }
}

MeanRecall mean_recall(const PredicateTally& tally) {
    MeanRecall m;
    double sum = 0.0;
    std::size_t classes = 0;
    for (std::size_t p = 0; p < tally.total.size(); ++p) {
        if (tally.total[p] == 0) {
            m.per_predicate.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const double r = static_cast<double>(tally.hits[p]) / static_cast<double>(tally.total[p]);
        m.per_predicate.push_back(r);
        sum += r;
        ++classes;
    }
    m.mean = classes ? sum / static_cast<double>(classes) : 0.0;
    return m;
}

// Detector simulation ----------------------------------------------------------

namespace {

Box jitter_box(const Box& b, double sigma, Rng& rng) {
    if (sigma == 0.0) return b;
    auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
    double x1 = clamp01(b.x1 + rng.normal(0.0, sigma)), x2 = clamp01(b.x2 + rng.normal(0.0, sigma));
    double y1 = clamp01(b.y1 + rng.normal(0.0, sigma)), y2 = clamp01(b.y2 + rng.normal(0.0, sigma));
    if (x1 > x2) std::swap(x1, x2);
    if (y1 > y2) std::swap(y1, y2);
    constexpr double kMin = 1e-3;
    if (x2 - x1 < kMin) {
        x1 = std::clamp(x1, 0.0, 1.0 - kMin);
        x2 = x1 + kMin;
    }
    if (y2 - y1 < kMin) {
        y1 = std::clamp(y1, 0.0, 1.0 - kMin);
        y2 = y1 + kMin;
    }
    return {x1, y1, x2, y2};
}

std::vector<double> perturb_probs(const std::vector<double>& probs, double noise, Rng& rng) {
    if (noise == 0.0) return probs;
    std::vector<double> out(probs.size());
    double z = 0.0;
    for (std::size_t c = 0; c < probs.size(); ++c) {
        out[c] = probs[c] * std::exp(rng.normal(0.0, noise));
        z += out[c];
    }
    for (double& v : out) v /= z;
    return out;
}

}  // namespace

Detections simulate_detections(const SceneRecord& scene, const DetectorNoise& noise, Rng& rng) {
    Detections all;
    for (std::size_t i = 0; i < scene.nodes.size(); ++i) {
        NodeRecord d = scene.nodes[i];
        d.box = jitter_box(d.box, noise.box_sigma, rng);
        d.class_probs = perturb_probs(d.class_probs, noise.score_noise, rng);
        all.scores.push_back(*std::max_element(d.class_probs.begin(), d.class_probs.end()));
        all.nodes.push_back(std::move(d));
        all.source.emplace_back(i);
    }
    if (noise.spurious_rate > 0.0 && !scene.nodes.empty()) {
        const std::size_t gt_count = scene.nodes.size();
        for (std::size_t i = 0; i < gt_count; ++i) {
            if (!rng.bernoulli(std::min(noise.spurious_rate, 1.0))) continue;
            const NodeRecord& donor = scene.nodes[static_cast<std::size_t>(rng.below(gt_count))];
            NodeRecord d = donor;
            const double w = rng.uniform(0.05, 0.4), h = rng.uniform(0.05, 0.4);
            const double x1 = rng.uniform(0.0, 1.0 - w), y1 = rng.uniform(0.0, 1.0 - h);
            d.box = {x1, y1, x1 + w, y1 + h};
            d.class_probs = perturb_probs(donor.class_probs, std::max(noise.score_noise, 0.5), rng);
            all.scores.push_back(0.8 * *std::max_element(d.class_probs.begin(), d.class_probs.end()));
            all.nodes.push_back(std::move(d));
            all.source.emplace_back(std::nullopt);
        }
    }

    // Class-wise NMS.
    std::vector<bool> keep(all.nodes.size(), false);
    std::vector<std::size_t> cls(all.nodes.size());
    for (std::size_t i = 0; i < all.nodes.size(); ++i) cls[i] = argmax(all.nodes[i].class_probs);
    const std::size_t C = scene.nodes.empty() ? 0 : scene.nodes[0].class_probs.size();
    for (std::size_t c = 0; c < C; ++c) {
        std::vector<std::size_t> members;
        std::vector<ScoredBox> boxes;
        for (std::size_t i = 0; i < all.nodes.size(); ++i) {
            if (cls[i] != c) continue;
            members.push_back(i);
            boxes.push_back({all.nodes[i].box, all.scores[i]});
        }
        for (std::size_t k : nms(boxes, noise.nms_iou)) keep[members[k]] = true;
    }
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < keep.size(); ++i)
        if (keep[i]) kept.push_back(i);
    if (kept.size() > noise.max_detections) {
        std::stable_sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) { return all.scores[a] > all.scores[b]; });
        kept.resize(noise.max_detections);
        std::sort(kept.begin(), kept.end());
    }

    Detections out;
    for (std::size_t i : kept) {
        out.nodes.push_back(std::move(all.nodes[i]));
        out.scores.push_back(all.scores[i]);
        out.source.push_back(all.source[i]);
    }
    return out;
}

// Scorers ---------------------------------------------------------------------

ModelInput make_model_input(std::span<const NodeRecord> nodes, std::span<const double> global, Mode mode,
                            std::vector<DirectedCandidate> candidates, std::size_t num_classes) {
    ModelInput in;
    in.nodes = nodes;
    in.global = global;
    in.candidates = std::move(candidates);
    for (const auto& node : nodes) {
        if (mode == Mode::PredCls) {
            std::vector<double> onehot(num_classes, 0.0);
            onehot.at(node.gt_class) = 1.0;
            in.semantic_probs.push_back(std::move(onehot));
            in.fq_classes.push_back(node.gt_class);
        } else {
            in.semantic_probs.push_back(node.class_probs);
        }
    }
    return in;
}

SceneScores FrequencyScorer::score(std::span<const NodeRecord> nodes, std::span<const double>, Mode mode,
                                   std::vector<DirectedCandidate> pairs) const {
    SceneScores s;
    for (const auto& node : nodes) {
        if (mode == Mode::PredCls) {
            s.classes.push_back(node.gt_class);
            s.class_scores.push_back(1.0);
        } else {
            const std::size_t c = argmax(node.class_probs);
            s.classes.push_back(c);
            s.class_scores.push_back(node.class_probs[c]);
        }
    }
    s.pairs = std::move(pairs);
    s.predicate_scores = Matrix(s.pairs.size(), fq_.num_predicates());
    for (std::size_t k = 0; k < s.pairs.size(); ++k) {
        const auto slice = fq_.slice(s.classes[s.pairs[k].subject], s.classes[s.pairs[k].object]);
        for (std::size_t p = 0; p < slice.size(); ++p) s.predicate_scores(k, p) = std::exp(slice[p]);
    }
    return s;
}

SceneScores ModelScorer::score(std::span<const NodeRecord> nodes, std::span<const double> global, Mode mode,
                               std::vector<DirectedCandidate> pairs) const {
    const ModelConfig& cfg = model_.config();
    ModelInput in = make_model_input(nodes, global, mode, std::move(pairs), cfg.num_classes);
    ForwardOutput out = model_.forward(in);
    SceneScores s;
    if (mode == Mode::PredCls) {
        for (const auto& node : nodes) {
            s.classes.push_back(node.gt_class);
            s.class_scores.push_back(1.0);
        }
    } else {
        Matrix probs = ad::softmax_rows(ad::constant(out.object_logits->value))->value;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const std::size_t c = argmax(probs.row(i));
            s.classes.push_back(c);
            s.class_scores.push_back(probs(i, c));
        }
    }
    s.pairs = out.candidates;
    s.predicate_scores = relation_scores(out, cfg);
    return s;
}

// Reports -----------------------------------------------------------------------

const RecallEntry& MetricReport::get(Mode mode, bool constraint, std::size_t k) const {
    for (const auto& e : entries)
        if (e.mode == mode && e.constraint == constraint && e.k == k) return e;
    throw UsageError("MetricReport: no entry for " + to_string(mode) + (constraint ? " with" : " without") +
                     " constraint at K=" + std::to_string(k));
}

namespace {

std::string fmt6(double v) {
    if (std::isnan(v)) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

std::string MetricReport::to_csv(const Vocab& vocab) const {
    std::string out = "mode,constraint,k,recall,mean_recall,scenes,gt_triplets\n";
    for (const auto& e : entries) {
        out += to_string(e.mode) + ',' + (e.constraint ? "with" : "without") + ',' + std::to_string(e.k) + ',' +
               fmt6(e.recall) + ',' + fmt6(e.mean_recall) + ',' + std::to_string(e.scenes) + ',' +
               std::to_string(e.gt_total) + '\n';
    }
    out += "\nmode,constraint,k,predicate,gt_count,recall\n";
    for (const auto& e : entries) {
        for (std::size_t p = 1; p < e.per_predicate.size(); ++p) {
            const std::string name = p < vocab.predicates.size() ? vocab.predicates[p] : std::to_string(p);
            out += to_string(e.mode) + ',' + (e.constraint ? "with" : "without") + ',' + std::to_string(e.k) + ',' +
                   name + ',' + std::to_string(e.per_predicate_gt[p]) + ',' + fmt6(e.per_predicate[p]) + '\n';
        }
    }
    return out;
}

MetricReport evaluate(std::span<const SceneRecord> scenes, const Scorer& scorer, const EvalConfig& cfg,
                      std::size_t num_predicates) {
    if (scenes.empty()) throw UsageError("evaluate: empty dataset");
    cfg.validate();
    MetricReport report;
    std::vector<bool> settings;
    if (cfg.with_constraint) settings.push_back(true);
    if (cfg.without_constraint) settings.push_back(false);

    for (Mode mode : cfg.modes) {
        const std::size_t ns = settings.size(), nk = cfg.ks.size();
        std::vector<std::vector<double>> recall_sum(ns, std::vector<double>(nk, 0.0));
        std::vector<std::vector<PredicateTally>> tallies(
            ns, std::vector<PredicateTally>(nk, PredicateTally{std::vector<std::size_t>(num_predicates, 0),
                                                               std::vector<std::size_t>(num_predicates, 0)}));
        std::size_t scored_scenes = 0, gt_total = 0;
        for (const SceneRecord& scene : scenes) {
            if (scene.relations.empty()) continue;
            ++scored_scenes;
            gt_total += scene.relations.size();

            std::vector<NodeRecord> det_nodes;
            std::span<const NodeRecord> nodes = scene.nodes;
            if (mode == Mode::SgDet) {
                Rng rng(Rng::splitmix(cfg.seed ^ fnv1a64(scene.id)));
                det_nodes = simulate_detections(scene, cfg.noise, rng).nodes;
                nodes = det_nodes;
            }
            std::vector<Box> boxes;
            for (const auto& n : nodes) boxes.push_back(n.box);
            SceneScores scores = scorer.score(nodes, scene.global, mode, candidate_pairs(boxes, cfg.policy_for(mode)));
            const PredictedNodes predicted{boxes, scores.classes};

            for (std::size_t si = 0; si < ns; ++si) {
                const auto ranked = rank_triplets(scores, settings[si]);
                const auto first = match_triplets(ranked, scene, predicted, mode, cfg.match_iou, cfg.ks.back());
                const auto rec = recall_at_k(first, cfg.ks);
                for (std::size_t ki = 0; ki < nk; ++ki) {
                    recall_sum[si][ki] += rec[ki];
                    tally_predicates(tallies[si][ki], first, scene, cfg.ks[ki]);
                }
            }
        }
        for (std::size_t si = 0; si < ns; ++si) {
            for (std::size_t ki = 0; ki < nk; ++ki) {
                RecallEntry e;
                e.mode = mode;
                e.constraint = settings[si];
                e.k = cfg.ks[ki];
                e.recall = scored_scenes ? recall_sum[si][ki] / static_cast<double>(scored_scenes) : 0.0;
                const MeanRecall mr = mean_recall(tallies[si][ki]);
                e.mean_recall = mr.mean;
                e.per_predicate = mr.per_predicate;
                e.per_predicate_gt = tallies[si][ki].total;
                e.scenes = scored_scenes;
                e.gt_total = gt_total;
                report.entries.push_back(std::move(e));
            }
        }
    }
    return report;
}

}  // namespace rtn
