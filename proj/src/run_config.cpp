#include "rtn/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "rtn/errors.hpp"

namespace rtn {

namespace {

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    std::size_t used = 0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size() || !std::isfinite(out)) throw ConfigError(key + ": expected a number, got '" + v + "'");
    return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct Field {
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

#define RTN_REAL(key, member)                                                                          \
    {key, Field{[](const RunConfig& c) { return fmt(c.member); },                                     \
                [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_real(k, v); }}}
#define RTN_SIZE(key, member)                                                                          \
    {key, Field{[](const RunConfig& c) { return std::to_string(c.member); },                          \
                [](RunConfig& c, const std::string& k, const std::string& v) {                        \
                    c.member = static_cast<decltype(c.member)>(parse_uint(k, v));                     \
                }}}
#define RTN_BOOL(key, member)                                                                          \
    {key, Field{[](const RunConfig& c) { return std::string(c.member ? "true" : "false"); },          \
                [](RunConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); }}}

const std::vector<std::pair<std::string, Field>>& schema() {
    static const std::vector<std::pair<std::string, Field>> fields = {
        RTN_SIZE("seed", seed),
        RTN_REAL("freq.alpha", freq_alpha),

        RTN_SIZE("gen.num_classes", gen.num_classes),
        RTN_SIZE("gen.train_scenes", gen.train_scenes),
        RTN_SIZE("gen.val_scenes", gen.val_scenes),
        RTN_SIZE("gen.test_scenes", gen.test_scenes),
        RTN_SIZE("gen.min_nodes", gen.min_nodes),
        RTN_SIZE("gen.max_nodes", gen.max_nodes),
        RTN_SIZE("gen.visual_dim", gen.visual_dim),
        RTN_SIZE("gen.global_dim", gen.global_dim),
        RTN_REAL("gen.prototype_scale", gen.prototype_scale),
        RTN_REAL("gen.feature_noise", gen.feature_noise),
        RTN_REAL("gen.detector_eps", gen.detector_eps),
        RTN_REAL("gen.min_box_size", gen.min_box_size),
        RTN_REAL("gen.max_box_size", gen.max_box_size),
        RTN_REAL("gen.same_class_max_iou", gen.same_class_max_iou),
        RTN_SIZE("gen.spatial_grid", gen.spatial_grid),

        RTN_SIZE("embed.d_model", model.embed.d_model),
        RTN_SIZE("embed.max_nodes", model.embed.max_nodes),
        RTN_SIZE("embed.embed_dim", model.embed.embed_dim),
        {"embed.edge_pe", Field{[](const RunConfig& c) { return to_string(c.model.embed.edge_pe); },
                                [](RunConfig& c, const std::string& k, const std::string& v) {
                                    try {
                                        c.model.embed.edge_pe = edge_pe_from_string(v);
                                    } catch (const std::exception& e) {
                                        throw ConfigError(k + ": " + e.what());
                                    }
                                }}},
        RTN_BOOL("embed.use_semantic", model.embed.use_semantic),
        RTN_BOOL("embed.use_spatial", model.embed.use_spatial),
        RTN_BOOL("embed.shuffle_positions", model.embed.shuffle_positions),

        RTN_SIZE("model.heads", model.heads),
        RTN_SIZE("model.enc_layers", model.enc_layers),
        RTN_SIZE("model.dec_layers", model.dec_layers),
        RTN_SIZE("model.ffn_dim", model.ffn_dim),
        RTN_REAL("model.dropout", model.dropout),
        RTN_REAL("model.leaky_slope", model.leaky_slope),
        RTN_REAL("model.ln_eps", model.ln_eps),
        RTN_BOOL("model.decoder_self_attention", model.decoder_self_attention),
        RTN_BOOL("model.use_rpm", model.use_rpm),
        RTN_BOOL("model.use_freq_bias", model.use_freq_bias),
        RTN_BOOL("model.use_gap", model.use_gap),
        {"model.freq_mode",
         Field{[](const RunConfig& c) {
                   return std::string(c.model.freq_mode == FreqMode::Logit ? "logit" : "post_softmax");
               },
               [](RunConfig& c, const std::string& k, const std::string& v) {
                   if (v == "logit") {
                       c.model.freq_mode = FreqMode::Logit;
                   } else if (v == "post_softmax") {
                       c.model.freq_mode = FreqMode::PostSoftmax;
                   } else {
                       throw ConfigError(k + ": expected logit or post_softmax, got '" + v + "'");
                   }
               }}},

        RTN_REAL("train.lr", train.lr),
        RTN_SIZE("train.batch_scenes", train.batch_scenes),
        RTN_SIZE("train.epochs", train.epochs),
        RTN_SIZE("train.bg_ratio", train.bg_ratio),
        {"train.plateau_patience",
         Field{[](const RunConfig& c) { return std::to_string(c.train.plateau_patience); },
               [](RunConfig& c, const std::string& k, const std::string& v) {
                   const auto n = parse_uint(k, v);
                   if (n > 1000000) throw ConfigError(k + ": value too large");
                   c.train.plateau_patience = static_cast<int>(n);
               }}},
        RTN_REAL("train.plateau_factor", train.plateau_factor),
        RTN_REAL("train.momentum", train.momentum),
        RTN_REAL("train.object_weight", train.object_weight),
        RTN_REAL("train.relation_weight", train.relation_weight),
        RTN_REAL("train.flip_prob", train.flip_prob),

        {"eval.modes", Field{[](const RunConfig& c) {
                                 std::string out;
                                 for (Mode m : c.eval.modes) out += (out.empty() ? "" : ",") + to_string(m);
                                 return out;
                             },
                             [](RunConfig& c, const std::string& k, const std::string& v) {
                                 std::vector<Mode> modes;
                                 for (const auto& item : split_list(v)) {
                                     try {
                                         modes.push_back(mode_from_string(item));
                                     } catch (const std::exception& e) {
                                         throw ConfigError(k + ": " + e.what());
                                     }
                                 }
                                 c.eval.modes = modes;
                             }}},
        {"eval.constraint",
         Field{[](const RunConfig& c) {
                   if (c.eval.with_constraint && c.eval.without_constraint) return std::string("both");
                   return std::string(c.eval.with_constraint ? "with" : "without");
               },
               [](RunConfig& c, const std::string& k, const std::string& v) {
                   if (v == "both") {
                       c.eval.with_constraint = c.eval.without_constraint = true;
                   } else if (v == "with") {
                       c.eval.with_constraint = true;
                       c.eval.without_constraint = false;
                   } else if (v == "without") {
                       c.eval.with_constraint = false;
                       c.eval.without_constraint = true;
                   } else {
                       throw ConfigError(k + ": expected with, without or both, got '" + v + "'");
                   }
               }}},
        {"eval.ks", Field{[](const RunConfig& c) {
                              std::string out;
                              for (auto k : c.eval.ks) out += (out.empty() ? "" : ",") + std::to_string(k);
                              return out;
                          },
                          [](RunConfig& c, const std::string& k, const std::string& v) {
                              std::vector<std::size_t> ks;
                              for (const auto& item : split_list(v)) ks.push_back(parse_uint(k, item));
                              c.eval.ks = ks;
                          }}},
        RTN_REAL("eval.match_iou", eval.match_iou),
        {"eval.pair_policy",
         Field{[](const RunConfig& c) {
                   return c.eval.pair_policy ? to_string(*c.eval.pair_policy) : std::string("auto");
               },
               [](RunConfig& c, const std::string& k, const std::string& v) {
                   if (v == "auto") {
                       c.eval.pair_policy.reset();
                   } else if (v == "all_pairs") {
                       c.eval.pair_policy = PairPolicy::AllPairs;
                   } else if (v == "overlap_only") {
                       c.eval.pair_policy = PairPolicy::OverlapOnly;
                   } else {
                       throw ConfigError(k + ": expected auto, all_pairs or overlap_only, got '" + v + "'");
                   }
               }}},
        RTN_REAL("eval.box_sigma", eval.noise.box_sigma),
        RTN_REAL("eval.score_noise", eval.noise.score_noise),
        RTN_REAL("eval.spurious_rate", eval.noise.spurious_rate),
        RTN_REAL("eval.nms_iou", eval.noise.nms_iou),
        RTN_SIZE("eval.max_detections", eval.noise.max_detections),
    };
    return fields;
}

#undef RTN_REAL
#undef RTN_SIZE
#undef RTN_BOOL

const Field& field(const std::string& key) {
    for (const auto& [k, f] : schema())
        if (k == key) return f;
    throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

std::pair<std::string, std::string> split_assignment(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + text + "'");
    std::string key = trim(text.substr(0, eq)), value = trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key in '" + text + "'");
    return {key, value};
}

void RunConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, key, value); }

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> out = [] {
        std::vector<std::string> k;
        for (const auto& [name, f] : schema()) k.push_back(name);
        return k;
    }();
    return out;
}

std::string RunConfig::dump() const {
    std::string out;
    for (const auto& [k, f] : schema()) out += k + " = " + f.get(*this) + '\n';
    return out;
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        if (trim(line).empty()) continue;
        try {
            const auto [k, v] = split_assignment(line);
            set(k, v);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    load_text(ss.str(), path.string());
}

void RunConfig::finalize() {
    train.seed = seed;
    eval.seed = seed;
    model.embed.visual_dim = gen.visual_dim;
    model.embed.global_dim = gen.global_dim;
    if (!(freq_alpha > 0.0)) throw ConfigError("freq.alpha must be positive");
    gen.validate();
    train.validate();
    eval.validate();
}

}  // namespace rtn
