#include "rtn/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rtn/embedding.hpp"
#include "rtn/errors.hpp"
#include "rtn/frequency.hpp"

namespace rtn::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
    if (!out) throw ConfigError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

const std::vector<SceneRecord>& DataBundle::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

DataBundle generate_data(const RunConfig& cfg, const fs::path& dir) {
    ensure_dir(dir);
    DatasetSplits splits = synth_generate_splits(cfg.gen, cfg.seed);
    ordered_json manifest;
    manifest["format"] = "rtn-dataset";
    manifest["version"] = 1;
    manifest["seed"] = cfg.seed;
    manifest["vocab"] = nlohmann::json::parse(vocab_to_json(splits.vocab));
    manifest["vocab_hash"] = splits.vocab.hash();
    for (const auto& [name, scenes] : {std::pair<std::string, const std::vector<SceneRecord>*>{"train", &splits.train},
                                       {"val", &splits.val},
                                       {"test", &splits.test}}) {
        save_dataset(dir / (name + ".jsonl"), *scenes);
        manifest["splits"][name] = {{"file", name + ".jsonl"}, {"scenes", scenes->size()}};
    }
    ordered_json gen;
    for (const auto& key : RunConfig::keys())
        if (key.rfind("gen.", 0) == 0) gen[key.substr(4)] = cfg.get(key);
    manifest["generator"] = gen;
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    return DataBundle{splits.vocab, cfg.seed, std::move(splits.train), std::move(splits.val), std::move(splits.test)};
}

DataBundle load_data(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) throw ConfigError("dataset manifest not found: " + manifest_path.string());
    DataBundle d;
    try {
        const auto manifest = nlohmann::json::parse(read_text(manifest_path));
        d.vocab = vocab_from_json(manifest.at("vocab").dump());
        d.seed = manifest.at("seed").get<std::uint64_t>();
        for (const char* name : {"train", "val", "test"}) {
            const auto& entry = manifest.at("splits").at(name);
            auto scenes = load_dataset(dir / entry.at("file").get<std::string>(), &d.vocab);
            if (scenes.size() != entry.at("scenes").get<std::size_t>()) {
                throw ConfigError(std::string("manifest lists ") + std::to_string(entry.at("scenes").get<std::size_t>()) +
                                  " " + name + " scenes, file has " + std::to_string(scenes.size()));
            }
            (std::string(name) == "train" ? d.train : std::string(name) == "val" ? d.val : d.test) = std::move(scenes);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(manifest_path.string() + ": " + e.what());
    }
    return d;
}

ModelConfig model_config_for(const RunConfig& cfg, const DataBundle& data) {
    ModelConfig mc = cfg.model;
    mc.num_classes = data.vocab.num_classes();
    mc.num_predicates = data.vocab.num_predicates();
    for (const auto* split : {&data.train, &data.val, &data.test}) {
        if (split->empty()) continue;
        const SceneRecord& s = split->front();
        mc.embed.global_dim = s.global.size();
        if (!s.nodes.empty()) mc.embed.visual_dim = s.nodes.front().visual.size();
        break;
    }
    mc.validate();
    return mc;
}

RtnModel make_model(const RunConfig& cfg, const DataBundle& data) {
    const ModelConfig mc = model_config_for(cfg, data);
    Rng rng(cfg.seed);
    return RtnModel(mc, init_params(mc, rng), pseudo_embedding(data.vocab, mc.embed.embed_dim),
                    build_frequency_table(data.train, data.vocab, cfg.freq_alpha));
}

RtnModel load_model(const fs::path& checkpoint, const RunConfig& cfg, const DataBundle& data) {
    const CheckpointHeader header = read_checkpoint_header(checkpoint);
    const std::string expected = data.vocab.hash();
    if (header.vocab_hash != expected) {
        throw ConfigError("vocabulary mismatch: checkpoint " + checkpoint.string() + " has vocab hash " +
                          header.vocab_hash + ", dataset has " + expected);
    }
    // Architecture comes from the checkpoint; data-derived sizes are checked by load_checkpoint.
    RunConfig from_ckpt = cfg;
    for (const auto& [k, v] : header.config) {
        if (k == "num_classes" || k == "num_predicates" || k == "visual_dim" || k == "global_dim") continue;
        const bool embed_key = k == "d_model" || k == "max_nodes" || k == "embed_dim" || k == "edge_pe" ||
                               k == "use_semantic" || k == "use_spatial" || k == "shuffle_positions";
        from_ckpt.set((embed_key ? "embed." : "model.") + k, v);
    }
    const ModelConfig mc = model_config_for(from_ckpt, data);
    RtnParams params = load_checkpoint(checkpoint, mc, expected);
    return RtnModel(mc, std::move(params), pseudo_embedding(data.vocab, mc.embed.embed_dim),
                    build_frequency_table(data.train, data.vocab, cfg.freq_alpha));
}

std::vector<Variant> parse_sweep(const std::string& text) {
    std::vector<Variant> out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos) {
            throw ConfigError("sweep line " + std::to_string(line_no) + ": expected 'name: key=value ...'");
        }
        Variant v;
        std::istringstream name_in(line.substr(0, colon));
        name_in >> v.name;
        if (v.name.empty()) throw ConfigError("sweep line " + std::to_string(line_no) + ": empty variant name");
        std::istringstream rest(line.substr(colon + 1));
        std::string tok;
        RunConfig probe;
        while (rest >> tok) {
            auto kv = split_assignment(tok);
            const auto& k = kv.first;
            const bool allowed = k.rfind("embed.", 0) == 0 || k.rfind("model.", 0) == 0 ||
                                 k.rfind("train.", 0) == 0 || k.rfind("freq.", 0) == 0;
            try {
                probe.set(k, kv.second);
            } catch (const ConfigError& e) {
                throw ConfigError("sweep line " + std::to_string(line_no) + ": " + e.what());
            }
            if (!allowed) {
                throw ConfigError("sweep line " + std::to_string(line_no) + ": '" + k +
                                  "' cannot vary inside a sweep (data, seed and evaluation are shared)");
            }
            v.settings.push_back(std::move(kv));
        }
        for (const auto& prev : out)
            if (prev.name == v.name) throw ConfigError("sweep: duplicate variant '" + v.name + "'");
        out.push_back(std::move(v));
    }
    if (out.empty()) throw ConfigError("sweep: no variants");
    return out;
}

std::vector<Variant> default_sweep() {
    return {
        {"e2n_proposed_pe", {}},
        {"e2n_node_style_pe", {{"embed.edge_pe", "node_style"}}},
        {"vaswani_decoder", {{"model.decoder_self_attention", "true"}, {"embed.edge_pe", "node_style"}}},
    };
}

std::string run_ablation(const RunConfig& base, const DataBundle& data, const std::vector<Variant>& variants,
                         std::ostream* progress) {
    std::string header = "variant,settings,parameters,best_epoch,val_r20";
    std::vector<std::string> rows;
    bool header_done = false;
    for (const Variant& v : variants) {
        RunConfig cfg = base;
        std::string settings;
        for (const auto& [k, val] : v.settings) {
            cfg.set(k, val);
            settings += (settings.empty() ? "" : " ") + k + "=" + val;
        }
        cfg.finalize();
        if (progress) *progress << "variant " << v.name << (settings.empty() ? "" : " (" + settings + ")") << '\n';
        RtnModel model = make_model(cfg, data);
        const TrainLog log = train(data.train, data.val, model, cfg.train, progress);
        const ModelScorer scorer(model);
        const MetricReport report = evaluate(data.test, scorer, cfg.eval, model.config().num_predicates);

        std::string row = v.name + "," + (settings.empty() ? "default" : settings) + "," +
                          std::to_string(model.params().scalar_count()) + "," + std::to_string(log.best_epoch) + "," +
                          fmt6(log.best_val_r20);
        for (const auto& e : report.entries) {
            const std::string tag = to_string(e.mode) + "_" + (e.constraint ? "with" : "without");
            if (!header_done) header += "," + tag + "_R@" + std::to_string(e.k) + "," + tag + "_mR@" + std::to_string(e.k);
            row += "," + fmt6(e.recall) + "," + fmt6(e.mean_recall);
        }
        header_done = true;
        rows.push_back(std::move(row));
    }
    std::string out = header + "\n";
    for (const auto& r : rows) out += r + "\n";
    return out;
}

// Commands ---------------------------------------------------------------------

namespace {

struct Globals {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "rtn_out";
};

RunConfig resolve_config(const Globals& g, const std::vector<std::pair<std::string, std::string>>& extra = {}) {
    RunConfig cfg;
    if (!g.config_path.empty()) cfg.load_file(g.config_path);
    for (const auto& s : g.sets) {
        const auto [k, v] = split_assignment(s);
        cfg.set(k, v);
    }
    for (const auto& [k, v] : extra) cfg.set(k, v);
    if (g.seed) cfg.seed = *g.seed;
    cfg.finalize();
    return cfg;
}

void write_matrix(const fs::path& path, const std::string& title, const Matrix& m,
                  const std::vector<std::string>& row_labels, const std::vector<std::string>& col_labels) {
    std::string text = "# " + title + "\n";
    for (const auto& c : col_labels) text += "\t" + c;
    text += "\n";
    char buf[40];
    for (std::size_t r = 0; r < m.rows(); ++r) {
        text += row_labels[r];
        for (std::size_t c = 0; c < m.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "\t%.17g", m(r, c));
            text += buf;
        }
        text += "\n";
    }
    write_text(path, text);
}

int cmd_gen(const Globals& g, std::ostream& out) {
    const RunConfig cfg = resolve_config(g);
    const fs::path dir = g.out_dir;
    const DataBundle d = generate_data(cfg, dir);
    write_text(dir / "effective_config.txt", cfg.dump());
    out << "wrote " << d.train.size() << "/" << d.val.size() << "/" << d.test.size() << " scenes to " << dir.string()
        << "\n";
    return kOk;
}

int cmd_train(const Globals& g, const std::string& data_dir, std::ostream& out) {
    const RunConfig cfg = resolve_config(g);
    const DataBundle data = load_data(data_dir);
    const fs::path dir = g.out_dir;
    ensure_dir(dir);
    write_text(dir / "effective_config.txt", cfg.dump());
    RtnModel model = make_model(cfg, data);
    const TrainLog log = train(data.train, data.val, model, cfg.train, &out);
    write_text(dir / "train_log.csv", log.to_csv());
    save_checkpoint(dir / "checkpoint.rtn", model.config(), model.params(), data.vocab.hash());
    out << "best epoch " << log.best_epoch << " val R@20 " << fmt6(log.best_val_r20) << "; wrote "
        << (dir / "checkpoint.rtn").string() << "\n";
    return kOk;
}

int cmd_eval(const Globals& g, const std::string& data_dir, const std::string& split, const std::string& checkpoint,
             bool freq_baseline, const std::vector<std::pair<std::string, std::string>>& extra, std::ostream& out) {
    if (checkpoint.empty() == !freq_baseline) throw UsageError("eval needs exactly one of --checkpoint or --freq-baseline");
    const RunConfig cfg = resolve_config(g, extra);
    const DataBundle data = load_data(data_dir);
    const auto& scenes = data.split(split);
    const fs::path dir = g.out_dir;
    ensure_dir(dir);
    write_text(dir / "effective_config.txt", cfg.dump());
    MetricReport report;
    if (freq_baseline) {
        const FrequencyScorer scorer(build_frequency_table(data.train, data.vocab, cfg.freq_alpha));
        report = evaluate(scenes, scorer, cfg.eval, data.vocab.num_predicates());
    } else {
        const RtnModel model = load_model(checkpoint, cfg, data);
        const ModelScorer scorer(model);
        report = evaluate(scenes, scorer, cfg.eval, data.vocab.num_predicates());
    }
    write_text(dir / "report.csv", report.to_csv(data.vocab));
    for (const auto& e : report.entries) {
        out << to_string(e.mode) << (e.constraint ? " with" : " without") << " constraint R@" << e.k << " "
            << fmt6(e.recall) << " mR@" << e.k << " " << fmt6(e.mean_recall) << "\n";
    }
    return kOk;
}

int cmd_ablate(const Globals& g, const std::string& data_dir, const std::string& sweep_path, std::ostream& out) {
    const RunConfig cfg = resolve_config(g);
    const auto variants = sweep_path.empty() ? default_sweep() : parse_sweep(read_text(sweep_path));
    const DataBundle data = load_data(data_dir);
    const fs::path dir = g.out_dir;
    ensure_dir(dir);
    write_text(dir / "effective_config.txt", cfg.dump());
    const std::string table = run_ablation(cfg, data, variants, &out);
    write_text(dir / "ablation.csv", table);
    out << table;
    return kOk;
}

int cmd_attn(const Globals& g, const std::string& data_dir, const std::string& split, const std::string& checkpoint,
             const std::string& scene_id, std::ostream& out) {
    const RunConfig cfg = resolve_config(g);
    const DataBundle data = load_data(data_dir);
    const auto& scenes = data.split(split);
    auto it = std::find_if(scenes.begin(), scenes.end(), [&](const SceneRecord& s) { return s.id == scene_id; });
    // Fall back to a 0-based index.
    if (it == scenes.end() && !scene_id.empty() &&
        std::all_of(scene_id.begin(), scene_id.end(), [](unsigned char c) { return std::isdigit(c); })) {
        const std::size_t idx = std::stoul(scene_id);
        if (idx < scenes.size()) it = scenes.begin() + static_cast<std::ptrdiff_t>(idx);
    }
    if (it == scenes.end()) throw ConfigError("scene '" + scene_id + "' not found in split " + split);
    const RtnModel model = load_model(checkpoint, cfg, data);
    std::vector<Box> boxes;
    for (const auto& n : it->nodes) boxes.push_back(n.box);
    const ModelInput in = make_model_input(it->nodes, it->global, Mode::PredCls,
                                           candidate_pairs(boxes, PairPolicy::AllPairs), model.config().num_classes);
    const ForwardOutput fwd = model.forward(in);

    const fs::path dir = g.out_dir;
    ensure_dir(dir);
    std::vector<std::string> node_labels, edge_labels;
    for (std::size_t i = 0; i < it->nodes.size(); ++i)
        node_labels.push_back("n" + std::to_string(i) + ":" + data.vocab.classes[it->nodes[i].gt_class]);
    for (std::size_t k = 0; k < fwd.edges.size(); ++k)
        edge_labels.push_back("e" + std::to_string(k) + ":n" + std::to_string(fwd.edges[k].first) + "-n" +
                              std::to_string(fwd.edges[k].second));
    std::size_t files = 0;
    auto dump = [&](const std::vector<std::vector<Matrix>>& maps, const std::string& kind,
                    const std::vector<std::string>& rows) {
        for (std::size_t l = 0; l < maps.size(); ++l) {
            for (std::size_t h = 0; h < maps[l].size(); ++h) {
                const std::string stem = kind + "_l" + std::to_string(l) + "_h" + std::to_string(h);
                write_matrix(dir / (stem + ".txt"), kind + " layer " + std::to_string(l) + " head " + std::to_string(h) +
                             " scene " + it->id, maps[l][h], rows, node_labels);
                ++files;
            }
        }
    };
    dump(fwd.n2n_attention, "n2n", node_labels);
    dump(fwd.e2n_attention, "e2n", edge_labels);
    out << "wrote " << files << " attention matrices to " << dir.string() << "\n";
    return kOk;
}

std::vector<std::pair<std::string, std::string>> eval_overrides(const std::string& mode, const std::string& constraint,
                                                                const std::string& ks) {
    std::vector<std::pair<std::string, std::string>> out;
    if (!mode.empty()) out.emplace_back("eval.modes", mode);
    if (!constraint.empty()) out.emplace_back("eval.constraint", constraint);
    if (!ks.empty()) out.emplace_back("eval.ks", ks);
    return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Relation Transformer Network toolkit: synthetic data, training, evaluation"};
    app.name("rtn");
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config_path, "key=value config file");
    app.add_option("--set", g.sets, "override one config key (key=value), repeatable");
    app.add_option("--seed", g.seed, "seed shared by generation, initialization, training and evaluation");
    app.add_option("--out", g.out_dir, "output directory")->capture_default_str();

    std::string data_dir, split = "test", checkpoint, mode, constraint, ks, sweep, scene_id;
    bool freq_baseline = false;

    auto* gen = app.add_subcommand("gen", "generate a planted-rule dataset");
    auto* trn = app.add_subcommand("train", "train a model; writes checkpoint.rtn and train_log.csv");
    trn->add_option("--data", data_dir, "dataset directory")->required();
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint or the frequency baseline; writes report.csv");
    ev->add_option("--data", data_dir, "dataset directory")->required();
    ev->add_option("--split", split, "train, val or test")->capture_default_str();
    ev->add_option("--checkpoint", checkpoint, "checkpoint file");
    ev->add_flag("--freq-baseline", freq_baseline, "score with the frequency table only");
    ev->add_option("--mode", mode, "comma list of PREDCLS, SGCLS, SGDET");
    ev->add_option("--constraint", constraint, "with, without or both");
    ev->add_option("--k", ks, "comma list of K values");
    auto* abl = app.add_subcommand("ablate", "train and evaluate a sweep of variants; writes ablation.csv");
    abl->add_option("--data", data_dir, "dataset directory")->required();
    abl->add_option("--sweep", sweep, "sweep file (default: the three decoder/PE variants)");
    auto* attn = app.add_subcommand("attn", "dump N2N and E2N attention matrices for one scene");
    attn->add_option("--data", data_dir, "dataset directory")->required();
    attn->add_option("--split", split, "train, val or test")->capture_default_str();
    attn->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    attn->add_option("--scene", scene_id, "scene id or 0-based index")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*gen) return cmd_gen(g, out);
        if (*trn) return cmd_train(g, data_dir, out);
        if (*ev) return cmd_eval(g, data_dir, split, checkpoint, freq_baseline, eval_overrides(mode, constraint, ks), out);
        if (*abl) return cmd_ablate(g, data_dir, sweep, out);
        if (*attn) return cmd_attn(g, data_dir, split, checkpoint, scene_id, out);
    } catch (const UsageError& e) {
        err << "rtn: " << e.what() << "\n";
        return kUsage;
    } catch (const ParseError& e) {
        err << "rtn: " << e.what() << "\n";
        return kDataError;
    } catch (const ValidationError& e) {
        err << "rtn: " << e.what() << "\n";
        return kDataError;
    } catch (const ConfigError& e) {
        err << "rtn: " << e.what() << "\n";
        return kDataError;
    } catch (const DimensionError& e) {
        err << "rtn: " << e.what() << "\n";
        return kDataError;
    } catch (const IndexError& e) {
        err << "rtn: " << e.what() << "\n";
        return kDataError;
    } catch (const std::exception& e) {
        err << "rtn: internal error: " << e.what() << "\n";
        return kInternal;
    }
    return kUsage;
}

}  // namespace rtn::cli
