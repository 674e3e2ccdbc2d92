// End-to-end acceptance checks. One PASS/FAIL line per criterion; exit
// status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "rtn/cli.hpp"
#include "rtn/evaluation.hpp"
#include "rtn/features.hpp"
#include "rtn/training.hpp"

using namespace rtn;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

int g_failures = 0;

void report(const std::string& name, const Outcome& o) {
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    if (!o.pass) ++g_failures;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Runs the CLI in process; throws with its stderr on a nonzero exit.
void rtn_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (code != 0) {
        std::string joined;
        for (const auto& a : args) joined += a + ' ';
        throw std::runtime_error("rtn " + joined + "exited " + std::to_string(code) + ": " + err.str());
    }
}

struct SummaryRow {
    std::string mode, constraint;
    std::size_t k = 0;
    double recall = 0.0, mean_recall = 0.0;
};

std::vector<SummaryRow> parse_summary(const std::string& csv) {
    std::vector<SummaryRow> rows;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line) && !line.empty()) {
        std::istringstream ls(line);
        SummaryRow r;
        std::string k, rec, mr;
        std::getline(ls, r.mode, ',');
        std::getline(ls, r.constraint, ',');
        std::getline(ls, k, ',');
        std::getline(ls, rec, ',');
        std::getline(ls, mr, ',');
        r.k = std::stoul(k);
        r.recall = std::stod(rec);
        r.mean_recall = std::stod(mr);
        rows.push_back(r);
    }
    return rows;
}

double lookup(const std::vector<SummaryRow>& rows, const std::string& mode, const std::string& constraint,
              std::size_t k) {
    for (const auto& r : rows)
        if (r.mode == mode && r.constraint == constraint && r.k == k) return r.recall;
    throw std::runtime_error("report has no " + mode + "/" + constraint + "/" + std::to_string(k) + " row");
}

// Every report produced during the run, checked at the end.
std::vector<std::pair<std::string, std::vector<SummaryRow>>> g_reports;

void remember(const std::string& label, const MetricReport& r) {
    std::vector<SummaryRow> rows;
    for (const auto& e : r.entries)
        rows.push_back({to_string(e.mode), e.constraint ? "with" : "without", e.k, e.recall, e.mean_recall});
    g_reports.emplace_back(label, rows);
}

void remember_file(const fs::path& p) { g_reports.emplace_back(p.string(), parse_summary(slurp(p))); }

// 1 -------------------------------------------------------------------------
Outcome gradient_suite() {
    const auto t0 = Clock::now();
    const ModelConfig cfg = fixture::tiny_config(3, 4);
    RtnModel model = fixture::tiny_model(cfg, 11);
    Rng rng(2024);
    for (auto& [name, var] : model.params().named())
        for (double& v : var->value.data()) v += rng.normal(0.0, 0.1);
    const SceneRecord scene = fixture::random_scene(rng, 3, 3, 4, cfg.embed.visual_dim, cfg.embed.global_dim, 0.0);
    const std::vector<DirectedCandidate> cands{{0, 1}, {1, 0}, {1, 2}};
    const std::vector<std::size_t> labels{2, 0, 3};
    std::vector<std::size_t> gt;
    ModelInput in;
    in.nodes = scene.nodes;
    in.global = scene.global;
    in.candidates = cands;
    for (const auto& n : scene.nodes) {
        in.semantic_probs.push_back(n.class_probs);
        in.fq_classes.push_back(n.gt_class);
        gt.push_back(n.gt_class);
    }
    const auto rep = oracle::check_gradients(model.params().named(), [&] {
        return total_loss(model.forward(in), labels, gt, 1.0, 1.0).total;
    });
    const double secs = seconds_since(t0);
    const bool all = rep.checked == expected_parameter_count(cfg);
    return {all && rep.max_rel_err < 1e-4 && secs < 30.0,
            std::to_string(rep.checked) + " parameters, max rel err " + fmt("%.3g", rep.max_rel_err) + " at " +
                rep.worst + ", " + fmt("%.1f", secs) + " s"};
}

// 2 -------------------------------------------------------------------------
Outcome edge_pe_algebra() {
    Rng rng(5);
    std::size_t violations = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        EmbedConfig cfg;
        cfg.max_nodes = 2 + rng.below(127);
        cfg.d_model = 4 * (1 + rng.below(32));
        const std::size_t m = cfg.max_nodes, d = cfg.d_model;
        const std::size_t pi = rng.below(m), pj = rng.below(m), pk = rng.below(m);
        const auto ij = edge_positional_encoding(pi, pj, cfg);
        const auto ji = edge_positional_encoding(pj, pi, cfg);
        const auto ik = edge_positional_encoding(pi, pk, cfg);
        const auto kj = edge_positional_encoding(pk, pj, cfg);
        const auto zero = edge_positional_encoding(0, 0, cfg);
        const auto ref = oracle::edge_pe(pi, pj, m, d);
        for (std::size_t e = 0; e < d; ++e) {
            worst = std::max(worst, std::abs(ij[e] - ref[e]));
            const bool first_half = e % 4 < 2;
            if (ij[e] != ji[first_half ? e + 2 : e - 2]) ++violations;   // swap permutes blocks
            if (first_half ? ij[e] != ik[e] : ij[e] != kj[e]) ++violations;  // block dependency
            if (zero[e] != (e % 2 ? 1.0 : 0.0)) ++violations;
        }
    }
    return {violations == 0 && worst <= 1e-12,
            std::to_string(violations) + " exact-property violations, max oracle diff " + fmt("%.3g", worst) +
                " over 100 random (p_i, p_j, m, d)"};
}

// 3 -------------------------------------------------------------------------
Outcome attention_oracle() {
    Rng rng(6);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t d = 1 + rng.below(16), nq = 1 + rng.below(8), nkv = 1 + rng.below(8);
        auto rand = [&](std::size_t r, std::size_t c) {
            Matrix m(r, c);
            for (double& v : m.data()) v = rng.normal();
            return m;
        };
        const Matrix q = rand(nq, d), kv = rand(nkv, d);
        const AttentionParams p{ad::parameter(rand(d, d)), ad::parameter(rand(d, d)), ad::parameter(rand(d, d)),
                                ad::parameter(rand(d, d))};
        const auto got = multi_head_attention(ad::constant(q), ad::constant(kv), p, 1).output->value;
        const Matrix ref = oracle::attention(q, kv, p.wq->value, p.wk->value, p.wv->value, p.wo->value, 1);
        worst = std::max(worst, max_abs_diff(got, ref));
    }
    return {worst <= 1e-12, "max abs diff " + fmt("%.3g", worst) + " over 50 single-head instances"};
}

// 4 -------------------------------------------------------------------------
Outcome evaluation_oracles() {
    Rng rng(7);
    const std::size_t C = 4, P = 5;
    const std::vector<std::size_t> ks{1, 3, 5, 20};
    std::size_t rank_mismatch = 0, match_mismatch = 0, metric_mismatch = 0, compared = 0;

    std::vector<SceneRecord> scenes;
    std::vector<SceneScores> scores;
    std::vector<PredictedNodes> predicted;
    std::vector<Mode> modes;
    for (int i = 0; i < 50; ++i) {
        SceneRecord s = fixture::random_scene(rng, 2 + rng.below(5), C, P, 1, 1, 0.35);
        s.id = "mini-" + std::to_string(i);
        const Mode mode = static_cast<Mode>(i % 3);
        PredictedNodes pn;
        SceneScores sc;
        for (const auto& n : s.nodes) {
            Box b = n.box;
            if (mode == Mode::SgDet) {
                // Shift some boxes far enough to break the IoU test.
                const double dx = rng.bernoulli(0.3) ? 0.6 * b.width() : 0.05 * b.width();
                b.x1 = std::min(b.x1 + dx, 0.98);
                b.x2 = std::min(b.x2 + dx, 1.0);
            }
            pn.boxes.push_back(b);
            const std::size_t cls = mode == Mode::PredCls || rng.bernoulli(0.7) ? n.gt_class : rng.below(C);
            pn.classes.push_back(cls);
            sc.classes.push_back(cls);
            // Quarter steps make score ties common.
            sc.class_scores.push_back(mode == Mode::PredCls ? 1.0 : static_cast<double>(1 + rng.below(4)) / 4.0);
        }
        sc.pairs = candidate_pairs(pn.boxes, PairPolicy::AllPairs);
        sc.predicate_scores = Matrix(sc.pairs.size(), P);
        for (double& v : sc.predicate_scores.data()) v = static_cast<double>(rng.below(5)) / 4.0;
        scenes.push_back(s);
        scores.push_back(sc);
        predicted.push_back(pn);
        modes.push_back(mode);
    }

    for (bool constraint : {true, false}) {
        for (std::size_t k : ks) {
            // Per mode, compare dataset metrics computed both ways.
            for (Mode mode : {Mode::PredCls, Mode::SgCls, Mode::SgDet}) {
                std::vector<std::vector<bool>> oracle_hits;
                std::vector<SceneRecord> used;
                double rsum = 0.0;
                std::size_t counted = 0;
                PredicateTally tally{std::vector<std::size_t>(P, 0), std::vector<std::size_t>(P, 0)};
                for (std::size_t i = 0; i < scenes.size(); ++i) {
                    if (modes[i] != mode) continue;
                    const auto lib = rank_triplets(scores[i], constraint);
                    const auto ref = oracle::ranked(scores[i], constraint);
                    if (lib != ref) ++rank_mismatch;
                    const auto first = match_triplets(lib, scenes[i], predicted[i], mode, 0.5, k);
                    const auto hits = oracle::matched(ref, scenes[i], predicted[i], mode, 0.5, k);
                    for (std::size_t g = 0; g < hits.size(); ++g) {
                        ++compared;
                        if ((first[g] >= 0 && static_cast<std::size_t>(first[g]) < k) != hits[g]) ++match_mismatch;
                    }
                    oracle_hits.push_back(hits);
                    used.push_back(scenes[i]);
                    if (!scenes[i].relations.empty()) {
                        rsum += recall_at_k(first, std::vector<std::size_t>{k})[0];
                        ++counted;
                        tally_predicates(tally, first, scenes[i], k);
                    }
                }
                const auto ref = oracle::dataset_recalls(oracle_hits, used, P);
                const double rec = counted ? rsum / static_cast<double>(counted) : 0.0;
                if (rec != ref.recall || mean_recall(tally).mean != ref.mean_recall) ++metric_mismatch;
            }
        }
    }

    // The same scenes through evaluate() with a replaying scorer.
    struct Replay final : Scorer {
        const std::vector<SceneScores>* all;
        mutable std::size_t next = 0;
        SceneScores score(std::span<const NodeRecord>, std::span<const double>, Mode,
                          std::vector<DirectedCandidate>) const override {
            return (*all)[next++];
        }
    };
    std::vector<SceneRecord> pcls;
    std::vector<SceneScores> pcls_scores;
    std::vector<std::vector<bool>> unused;
    for (std::size_t i = 0; i < scenes.size(); ++i)
        if (modes[i] == Mode::PredCls && !scenes[i].relations.empty()) {
            pcls.push_back(scenes[i]);
            pcls_scores.push_back(scores[i]);
        }
    Replay replay;
    replay.all = &pcls_scores;
    EvalConfig ec;
    ec.ks = ks;
    const MetricReport rep = evaluate(pcls, replay, ec, P);
    remember("evaluation oracle run", rep);
    for (bool constraint : {true, false}) {
        for (std::size_t k : ks) {
            std::vector<std::vector<bool>> hits;
            for (std::size_t i = 0; i < pcls.size(); ++i) {
                std::vector<Box> boxes;
                for (const auto& n : pcls[i].nodes) boxes.push_back(n.box);
                hits.push_back(oracle::matched(oracle::ranked(pcls_scores[i], constraint), pcls[i],
                                               {boxes, pcls_scores[i].classes}, Mode::PredCls, 0.5, k));
            }
            const auto ref = oracle::dataset_recalls(hits, pcls, P);
            const auto& e = rep.get(Mode::PredCls, constraint, k);
            if (e.recall != ref.recall || e.mean_recall != ref.mean_recall) ++metric_mismatch;
        }
    }

    const bool ok = rank_mismatch == 0 && match_mismatch == 0 && metric_mismatch == 0;
    return {ok, "50 mini-scenes: " + std::to_string(rank_mismatch) + " ranking, " + std::to_string(match_mismatch) +
                    "/" + std::to_string(compared) + " matching, " + std::to_string(metric_mismatch) +
                    " R@K/mR@K mismatches"};
}

// 5 -------------------------------------------------------------------------
Outcome metric_order() {
    std::size_t violations = 0, rows = 0;
    std::string first_bad;
    for (const auto& [label, entries] : g_reports) {
        std::map<std::pair<std::string, std::string>, std::vector<SummaryRow>> groups;
        for (const auto& r : entries) {
            ++rows;
            groups[{r.mode, r.constraint}].push_back(r);
            const bool in_range = r.recall >= 0.0 && r.recall <= 1.0 && r.mean_recall >= 0.0 && r.mean_recall <= 1.0;
            if (!in_range) {
                ++violations;
                if (first_bad.empty()) first_bad = label;
            }
        }
        for (auto& [key, g] : groups) {
            std::sort(g.begin(), g.end(), [](const SummaryRow& a, const SummaryRow& b) { return a.k < b.k; });
            for (std::size_t i = 1; i < g.size(); ++i)
                if (g[i].recall < g[i - 1].recall) {
                    ++violations;
                    if (first_bad.empty()) first_bad = label;
                }
            if (key.second == "with") {
                auto other = groups.find({key.first, "without"});
                if (other == groups.end()) continue;
                for (const auto& r : g)
                    for (const auto& o : other->second)
                        if (o.k == r.k && r.recall > o.recall) {
                            ++violations;
                            if (first_bad.empty()) first_bad = label;
                        }
            }
        }
    }
    return {violations == 0 && !g_reports.empty(),
            std::to_string(g_reports.size()) + " reports, " + std::to_string(rows) + " rows, " +
                std::to_string(violations) + " violations" + (first_bad.empty() ? "" : " (first in " + first_bad + ")")};
}

// 6, 8, 9 ----------------------------------------------------------------------
struct Pipeline {
    fs::path data, run, eval, freq;
    double seconds = 0.0;
};

Pipeline train_and_eval(const fs::path& root, const std::string& config, bool generate) {
    const auto t0 = Clock::now();
    Pipeline p{root / "data", root / "run", root / "eval", root / "freq"};
    if (generate) rtn_cli({"gen", "--seed", "42", "--out", p.data.string()});
    rtn_cli({"train", "--config", config, "--seed", "42", "--data", p.data.string(), "--out", p.run.string()});
    rtn_cli({"eval", "--config", config, "--seed", "42", "--data", p.data.string(), "--checkpoint",
             (p.run / "checkpoint.rtn").string(), "--mode", "PREDCLS", "--out", p.eval.string()});
    rtn_cli({"eval", "--config", config, "--seed", "42", "--data", p.data.string(), "--freq-baseline", "--mode",
             "PREDCLS", "--out", p.freq.string()});
    p.seconds = seconds_since(t0);
    return p;
}

Outcome learnability(const Pipeline& p) {
    remember_file(p.eval / "report.csv");
    remember_file(p.freq / "report.csv");
    const double rtn = lookup(parse_summary(slurp(p.eval / "report.csv")), "PREDCLS", "with", 20);
    const double freq = lookup(parse_summary(slurp(p.freq / "report.csv")), "PREDCLS", "with", 20);
    const bool ok = rtn >= 0.85 && rtn - freq >= 0.10 && p.seconds <= 600.0;
    return {ok, "test PREDCLS R@20 " + fmt("%.4f", rtn) + " vs frequency baseline " + fmt("%.4f", freq) +
                    " (gap " + fmt("%.4f", rtn - freq) + "), gen+train+eval " + fmt("%.1f", p.seconds) + " s"};
}

Outcome determinism(const Pipeline& a, const Pipeline& b) {
    remember_file(b.eval / "report.csv");
    const bool log_same = slurp(a.run / "train_log.csv") == slurp(b.run / "train_log.csv");
    const bool rep_same = slurp(a.eval / "report.csv") == slurp(b.eval / "report.csv");
    const bool freq_same = slurp(a.freq / "report.csv") == slurp(b.freq / "report.csv");
    const bool ok = log_same && rep_same && freq_same && !slurp(a.run / "train_log.csv").empty();
    return {ok, std::string("train_log.csv ") + (log_same ? "identical" : "differs") + ", report.csv " +
                    (rep_same ? "identical" : "differs") + ", baseline report " + (freq_same ? "identical" : "differs")};
}

Outcome sgdet_degeneracy(const Pipeline& p, const fs::path& root, const std::string& config) {
    const std::vector<std::string> quiet{"--set", "eval.box_sigma=0", "--set", "eval.score_noise=0",
                                         "--set", "eval.spurious_rate=0"};
    std::size_t compared = 0, differing = 0;
    for (const bool freq : {false, true}) {
        const std::string tag = freq ? "freq" : "model";
        std::vector<std::string> scorer;
        if (freq) {
            scorer = {"--freq-baseline"};
        } else {
            scorer = {"--checkpoint", (p.run / "checkpoint.rtn").string()};
        }
        auto run = [&](const std::string& mode, std::vector<std::string> extra, const fs::path& out) {
            std::vector<std::string> args{"eval", "--config", config, "--seed", "42"};
            args.insert(args.end(), quiet.begin(), quiet.end());
            args.insert(args.end(), extra.begin(), extra.end());
            args.insert(args.end(), {"--data", p.data.string(), "--mode", mode, "--out", out.string()});
            args.insert(args.end(), scorer.begin(), scorer.end());
            rtn_cli(args);
            remember_file(out / "report.csv");
            return slurp(out / "report.csv");
        };
        std::string det = run("SGDET", {}, root / ("sgdet_" + tag));
        const std::string cls = run("SGCLS", {"--set", "eval.pair_policy=overlap_only"}, root / ("sgcls_" + tag));
        // Identical apart from the mode column.
        std::size_t pos = 0;
        while ((pos = det.find("SGDET,", pos)) != std::string::npos) det.replace(pos, 6, "SGCLS,");
        std::istringstream da(det), ca(cls);
        std::string la, lb;
        while (std::getline(da, la)) {
            std::getline(ca, lb);
            ++compared;
            if (la != lb) ++differing;
        }
        if (std::getline(ca, lb)) ++differing;
    }
    return {differing == 0 && compared > 0,
            std::to_string(compared) + " report lines compared (model and frequency scorer), " +
                std::to_string(differing) + " differ"};
}

// 7 -------------------------------------------------------------------------
Outcome ablation(const fs::path& root) {
    const std::vector<std::string> small{"--set", "gen.train_scenes=100", "--set", "gen.val_scenes=20",
                                         "--set", "gen.test_scenes=40",   "--set", "train.epochs=3",
                                         "--set", "train.lr=0.02",        "--set", "model.dropout=0"};
    auto with = [&](std::vector<std::string> args) {
        args.insert(args.begin() + 1, small.begin(), small.end());
        return args;
    };
    const fs::path data = root / "data";
    rtn_cli(with({"gen", "--seed", "42", "--out", data.string()}));
    rtn_cli(with({"ablate", "--seed", "42", "--data", data.string(), "--out", (root / "a").string()}));
    rtn_cli(with({"ablate", "--seed", "42", "--data", data.string(), "--out", (root / "b").string()}));
    const std::string a = slurp(root / "a" / "ablation.csv"), b = slurp(root / "b" / "ablation.csv");

    std::vector<std::string> lines;
    std::istringstream in(a);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    auto columns = [](const std::string& l) { return std::count(l.begin(), l.end(), ',') + 1; };
    bool shape = lines.size() == 4 && lines[0].rfind("variant,settings,parameters,best_epoch,val_r20,", 0) == 0;
    std::vector<std::string> names;
    for (std::size_t i = 1; shape && i < lines.size(); ++i) {
        shape = columns(lines[i]) == columns(lines[0]);
        names.push_back(lines[i].substr(0, lines[i].find(',')));
    }
    std::vector<std::string> expected;
    for (const auto& v : cli::default_sweep()) expected.push_back(v.name);
    shape = shape && names == expected;
    const bool same = a == b;
    return {shape && same, std::to_string(lines.empty() ? 0 : lines.size() - 1) + " variant rows, " +
                               std::to_string(lines.empty() ? 0 : columns(lines[0])) + " columns, repeat run " +
                               (same ? "byte-identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RTN acceptance checks"};
    std::string work = "acceptance_work";
    std::string config = std::string(RTN_SOURCE_DIR) + "/configs/acceptance.cfg";
    app.add_option("--work-dir", work, "scratch directory (wiped first)")->capture_default_str();
    app.add_option("--config", config, "config file for the learnability run")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    const fs::path root = fs::absolute(work);
    fs::remove_all(root);
    fs::create_directories(root);

    auto guarded = [](const std::string& name, const std::function<Outcome()>& fn) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        report(name, o);
    };

    guarded("gradient suite", gradient_suite);
    guarded("edge PE algebra", edge_pe_algebra);
    guarded("attention oracle", attention_oracle);
    guarded("evaluation oracles", evaluation_oracles);

    Pipeline first, second;
    bool have_first = false, have_second = false;
    guarded("synthetic learnability", [&] {
        first = train_and_eval(root / "run1", config, true);
        have_first = true;
        return learnability(first);
    });
    guarded("ablation harness", [&] { return ablation(root / "ablation"); });
    guarded("SGDET degeneracy", [&] {
        if (!have_first) return Outcome{false, "learnability pipeline did not complete"};
        return sgdet_degeneracy(first, root / "sgdet", config);
    });
    guarded("determinism", [&] {
        if (!have_first) return Outcome{false, "learnability pipeline did not complete"};
        fs::create_directories(root / "run2");
        fs::copy(first.data, root / "run2" / "data");
        second = train_and_eval(root / "run2", config, false);
        have_second = true;
        return determinism(first, second);
    });
    guarded("metric order", metric_order);

    std::cout << (g_failures == 0 ? "all criteria passed" : std::to_string(g_failures) + " criteria failed")
              << std::endl;
    return g_failures == 0 ? 0 : 1;
}
