#include "rtn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rtn/errors.hpp"

namespace rtn {

std::string to_string(Mode m) {
    switch (m) {
        case Mode::PredCls: return "PREDCLS";
        case Mode::SgCls: return "SGCLS";
        case Mode::SgDet: return "SGDET";
    }
    return "?";
}

Mode mode_from_string(const std::string& s) {
    std::string u = s;
    std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (u == "PREDCLS") return Mode::PredCls;
    if (u == "SGCLS") return Mode::SgCls;
    if (u == "SGDET") return Mode::SgDet;
    throw ConfigError("unknown mode '" + s + "' (expected PREDCLS, SGCLS or SGDET)");
}

void ModelConfig::validate() const {
    embed.validate();
    if (heads == 0 || embed.d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (num_predicates < 2) throw ConfigError("num_predicates must be >= 2");
    if (enc_layers == 0 || dec_layers == 0) throw ConfigError("need at least one encoder and one decoder layer");
    if (ffn_dim == 0) throw ConfigError("ffn_dim must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky_slope must be in (0, 1)");
    if (!(ln_eps > 0.0)) throw ConfigError("ln_eps must be positive");
}

namespace {

std::string fmt_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

double xavier_sd(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

ad::Var xavier(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    const double sd = xavier_sd(rows, cols);
    for (double& v : m.data()) v = rng.normal(0.0, sd);
    return ad::parameter(std::move(m));
}

ad::Var zeros(std::size_t rows, std::size_t cols) { return ad::parameter(Matrix(rows, cols)); }
ad::Var ones(std::size_t rows, std::size_t cols) { return ad::parameter(Matrix(rows, cols, 1.0)); }

AttentionParams make_attention(std::size_t d, Rng& rng) {
    AttentionParams a;
    a.wq = xavier(d, d, rng);
    a.wk = xavier(d, d, rng);
    a.wv = xavier(d, d, rng);
    a.wo = xavier(d, d, rng);
    return a;
}

NormParams make_norm(std::size_t d) { return {ones(1, d), zeros(1, d)}; }

FfnParams make_ffn(std::size_t d, std::size_t f, Rng& rng) {
    FfnParams p;
    p.w1 = xavier(d, f, rng);
    p.b1 = zeros(1, f);
    p.w2 = xavier(f, d, rng);
    p.b2 = zeros(1, d);
    return p;
}

void push_attention(std::vector<std::pair<std::string, ad::Var>>& out, const std::string& prefix,
                    const AttentionParams& a) {
    out.emplace_back(prefix + ".wq", a.wq);
    out.emplace_back(prefix + ".wk", a.wk);
    out.emplace_back(prefix + ".wv", a.wv);
    out.emplace_back(prefix + ".wo", a.wo);
}

void push_norm(std::vector<std::pair<std::string, ad::Var>>& out, const std::string& prefix, const NormParams& n) {
    out.emplace_back(prefix + ".gain", n.gain);
    out.emplace_back(prefix + ".bias", n.bias);
}

void push_ffn(std::vector<std::pair<std::string, ad::Var>>& out, const std::string& prefix, const FfnParams& f) {
    out.emplace_back(prefix + ".w1", f.w1);
    out.emplace_back(prefix + ".b1", f.b1);
    out.emplace_back(prefix + ".w2", f.w2);
    out.emplace_back(prefix + ".b2", f.b2);
}

}  // namespace

std::vector<std::pair<std::string, std::string>> ModelConfig::entries() const {
    return {
        {"d_model", std::to_string(embed.d_model)},
        {"max_nodes", std::to_string(embed.max_nodes)},
        {"visual_dim", std::to_string(embed.visual_dim)},
        {"embed_dim", std::to_string(embed.embed_dim)},
        {"global_dim", std::to_string(embed.global_dim)},
        {"edge_pe", to_string(embed.edge_pe)},
        {"use_semantic", fmt_bool(embed.use_semantic)},
        {"use_spatial", fmt_bool(embed.use_spatial)},
        {"shuffle_positions", fmt_bool(embed.shuffle_positions)},
        {"num_classes", std::to_string(num_classes)},
        {"num_predicates", std::to_string(num_predicates)},
        {"heads", std::to_string(heads)},
        {"enc_layers", std::to_string(enc_layers)},
        {"dec_layers", std::to_string(dec_layers)},
        {"ffn_dim", std::to_string(ffn_dim)},
        {"dropout", fmt_real(dropout)},
        {"leaky_slope", fmt_real(leaky_slope)},
        {"ln_eps", fmt_real(ln_eps)},
        {"decoder_self_attention", fmt_bool(decoder_self_attention)},
        {"use_rpm", fmt_bool(use_rpm)},
        {"use_freq_bias", fmt_bool(use_freq_bias)},
        {"use_gap", fmt_bool(use_gap)},
        {"freq_mode", freq_mode == FreqMode::Logit ? "logit" : "post_softmax"},
    };
}

// Parameters ---------------------------------------------------------------

std::vector<std::pair<std::string, ad::Var>> RtnParams::named() const {
    std::vector<std::pair<std::string, ad::Var>> out;
    out.emplace_back("w_node", w_node);
    out.emplace_back("w_edge", w_edge);
    for (std::size_t l = 0; l < encoder.size(); ++l) {
        const std::string p = "enc." + std::to_string(l);
        push_attention(out, p + ".attn", encoder[l].attn);
        push_norm(out, p + ".norm1", encoder[l].norm1);
        push_ffn(out, p + ".ffn", encoder[l].ffn);
        push_norm(out, p + ".norm2", encoder[l].norm2);
    }
    for (std::size_t l = 0; l < decoder.size(); ++l) {
        const std::string p = "dec." + std::to_string(l);
        const auto& layer = decoder[l];
        if (layer.self_attn) {
            push_attention(out, p + ".self_attn", *layer.self_attn);
            push_norm(out, p + ".norm_self", *layer.norm_self);
        }
        push_attention(out, p + ".cross", layer.cross);
        push_norm(out, p + ".norm1", layer.norm1);
        push_ffn(out, p + ".ffn", layer.ffn);
        push_norm(out, p + ".norm2", layer.norm2);
    }
    out.emplace_back("classifier", w_classifier);
    if (rpm_norm) {
        push_norm(out, "rpm.norm", *rpm_norm);
        out.emplace_back("rpm.w1", rpm_w1);
        out.emplace_back("rpm.w2", rpm_w2);
    } else {
        out.emplace_back("rpm.linear", rpm_linear);
    }
    out.emplace_back("predicate", w_predicate);
    return out;
}

std::vector<ad::Var> RtnParams::list() const {
    std::vector<ad::Var> out;
    for (auto& [_, v] : named()) out.push_back(v);
    return out;
}

std::size_t RtnParams::scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : list()) n += v->value.size();
    return n;
}

RtnParams RtnParams::clone() const {
    RtnParams c = *this;
    // Rebind every Var to a fresh parameter node.
    auto fresh = [](ad::Var& v) {
        if (v) v = ad::parameter(v->value);
    };
    fresh(c.w_node);
    fresh(c.w_edge);
    auto fresh_attn = [&](AttentionParams& a) {
        fresh(a.wq), fresh(a.wk), fresh(a.wv), fresh(a.wo);
    };
    auto fresh_norm = [&](NormParams& n) { fresh(n.gain), fresh(n.bias); };
    auto fresh_ffn = [&](FfnParams& f) { fresh(f.w1), fresh(f.b1), fresh(f.w2), fresh(f.b2); };
    for (auto& l : c.encoder) {
        fresh_attn(l.attn), fresh_norm(l.norm1), fresh_ffn(l.ffn), fresh_norm(l.norm2);
    }
    for (auto& l : c.decoder) {
        if (l.self_attn) fresh_attn(*l.self_attn);
        if (l.norm_self) fresh_norm(*l.norm_self);
        fresh_attn(l.cross), fresh_norm(l.norm1), fresh_ffn(l.ffn), fresh_norm(l.norm2);
    }
    fresh(c.w_classifier);
    if (c.rpm_norm) fresh_norm(*c.rpm_norm);
    fresh(c.rpm_w1), fresh(c.rpm_w2), fresh(c.rpm_linear);
    fresh(c.w_predicate);
    return c;
}

void RtnParams::copy_values_from(const RtnParams& other) {
    auto mine = named();
    auto theirs = other.named();
    if (mine.size() != theirs.size()) throw DimensionError("copy_values_from: parameter sets differ");
    for (std::size_t i = 0; i < mine.size(); ++i) {
        if (mine[i].first != theirs[i].first || !mine[i].second->value.same_shape(theirs[i].second->value)) {
            throw DimensionError("copy_values_from: mismatch at " + mine[i].first);
        }
        mine[i].second->value = theirs[i].second->value;
    }
}

RtnParams init_params(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t d = cfg.d_model();
    RtnParams p;
    p.w_node = xavier(cfg.embed.node_input_dim(), d, rng);
    p.w_edge = xavier(cfg.embed.edge_input_dim(), d, rng);
    for (std::size_t l = 0; l < cfg.enc_layers; ++l) {
        EncoderLayerParams layer;
        layer.attn = make_attention(d, rng);
        layer.norm1 = make_norm(d);
        layer.ffn = make_ffn(d, cfg.ffn_dim, rng);
        layer.norm2 = make_norm(d);
        p.encoder.push_back(std::move(layer));
    }
    for (std::size_t l = 0; l < cfg.dec_layers; ++l) {
        DecoderLayerParams layer;
        if (cfg.decoder_self_attention) {
            layer.self_attn = make_attention(d, rng);
            layer.norm_self = make_norm(d);
        }
        layer.cross = make_attention(d, rng);
        layer.norm1 = make_norm(d);
        layer.ffn = make_ffn(d, cfg.ffn_dim, rng);
        layer.norm2 = make_norm(d);
        p.decoder.push_back(std::move(layer));
    }
    p.w_classifier = xavier(d, cfg.num_classes, rng);
    const std::size_t r = cfg.rel_input_dim();
    if (cfg.use_rpm) {
        p.rpm_norm = make_norm(r);
        p.rpm_w1 = xavier(r, 2 * d, rng);
        p.rpm_w2 = xavier(2 * d, d, rng);
    } else {
        p.rpm_linear = xavier(r, d, rng);
    }
    p.w_predicate = xavier(d, cfg.num_predicates, rng);
    return p;
}

std::size_t expected_parameter_count(const ModelConfig& cfg) {
    const std::size_t d = cfg.d_model(), f = cfg.ffn_dim;
    const std::size_t attn = 4 * d * d, norm = 2 * d, ffn = d * f + f + f * d + d;
    std::size_t n = cfg.embed.node_input_dim() * d + cfg.embed.edge_input_dim() * d;
    n += cfg.enc_layers * (attn + norm + ffn + norm);
    n += cfg.dec_layers * (attn + norm + ffn + norm + (cfg.decoder_self_attention ? attn + norm : 0));
    n += d * cfg.num_classes;
    const std::size_t r = cfg.rel_input_dim();
    n += cfg.use_rpm ? (2 * r + r * 2 * d + 2 * d * d) : r * d;
    n += d * cfg.num_predicates;
    return n;
}

// Forward ------------------------------------------------------------------

AttentionResult multi_head_attention(const ad::Var& queries, const ad::Var& keys_values,
                                     const AttentionParams& p, std::size_t heads) {
    const std::size_t d = queries->cols();
    if (keys_values->cols() != d) {
        throw DimensionError("multi_head_attention: query width " + std::to_string(d) + " vs key width " +
                             std::to_string(keys_values->cols()));
    }
    if (heads == 0 || d % heads != 0) throw DimensionError("multi_head_attention: d % heads != 0");
    const std::size_t dk = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    ad::Var q = ad::matmul(queries, p.wq);
    ad::Var k = ad::matmul(keys_values, p.wk);
    ad::Var v = ad::matmul(keys_values, p.wv);
    AttentionResult res;
    std::vector<ad::Var> head_out;
    head_out.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        ad::Var qh = heads == 1 ? q : ad::slice_cols(q, h * dk, dk);
        ad::Var kh = heads == 1 ? k : ad::slice_cols(k, h * dk, dk);
        ad::Var vh = heads == 1 ? v : ad::slice_cols(v, h * dk, dk);
        ad::Var weights = ad::softmax_rows(ad::matmul(qh, ad::transpose(kh)), scale);
        res.weights.push_back(weights->value);
        head_out.push_back(ad::matmul(weights, vh));
    }
    res.output = ad::matmul(ad::concat_cols(head_out), p.wo);
    return res;
}

RtnModel::RtnModel(ModelConfig cfg, RtnParams params, EmbeddingTable table, FrequencyTable fq)
    : cfg_(std::move(cfg)), params_(std::move(params)), table_(std::move(table)), fq_(std::move(fq)) {
    cfg_.validate();
    if (table_.vectors.rows() != cfg_.num_classes || table_.dim() != cfg_.embed.embed_dim) {
        throw DimensionError("RtnModel: embedding table " + table_.vectors.shape_str() + " does not match config");
    }
    if (fq_.num_classes() != cfg_.num_classes || fq_.num_predicates() != cfg_.num_predicates) {
        throw DimensionError("RtnModel: frequency table does not match config");
    }
}

ad::Var RtnModel::ffn(const FfnParams& p, const ad::Var& x) const {
    ad::Var h = ad::leaky_relu(ad::add_row(ad::matmul(x, p.w1), p.b1), cfg_.leaky_slope);
    return ad::add_row(ad::matmul(h, p.w2), p.b2);
}

namespace {

ad::Var maybe_dropout(const ad::Var& x, double rate, const ForwardContext& ctx) {
    if (!ctx.training || rate == 0.0) return x;
    if (!ctx.rng) throw UsageError("forward: training with dropout needs an rng");
    return ad::dropout(x, rate, true, *ctx.rng);
}

}  // namespace

ad::Var RtnModel::encoder_forward(const ad::Var& node_in, std::vector<std::vector<Matrix>>* maps,
                                  const ForwardContext& ctx) const {
    ad::Var x = node_in;
    for (const auto& layer : params_.encoder) {
        AttentionResult att = multi_head_attention(x, x, layer.attn, cfg_.heads);
        if (maps) maps->push_back(std::move(att.weights));
        x = ad::layer_norm(ad::add(x, maybe_dropout(att.output, cfg_.dropout, ctx)), layer.norm1.gain,
                           layer.norm1.bias, cfg_.ln_eps);
        x = ad::layer_norm(ad::add(x, maybe_dropout(ffn(layer.ffn, x), cfg_.dropout, ctx)), layer.norm2.gain,
                           layer.norm2.bias, cfg_.ln_eps);
    }
    return x;
}

ad::Var RtnModel::decoder_forward(const ad::Var& edge_in, const ad::Var& node_final,
                                  std::vector<std::vector<Matrix>>* e2n_maps,
                                  std::vector<std::vector<Matrix>>* e2e_maps, const ForwardContext& ctx) const {
    ad::Var y = edge_in;
    for (const auto& layer : params_.decoder) {
        if (layer.self_attn) {
            AttentionResult self = multi_head_attention(y, y, *layer.self_attn, cfg_.heads);
            if (e2e_maps) e2e_maps->push_back(std::move(self.weights));
            y = ad::layer_norm(ad::add(y, maybe_dropout(self.output, cfg_.dropout, ctx)), layer.norm_self->gain,
                               layer.norm_self->bias, cfg_.ln_eps);
        }
        AttentionResult cross = multi_head_attention(y, node_final, layer.cross, cfg_.heads);
        if (e2n_maps) e2n_maps->push_back(std::move(cross.weights));
        y = ad::layer_norm(ad::add(y, maybe_dropout(cross.output, cfg_.dropout, ctx)), layer.norm1.gain,
                           layer.norm1.bias, cfg_.ln_eps);
        y = ad::layer_norm(ad::add(y, maybe_dropout(ffn(layer.ffn, y), cfg_.dropout, ctx)), layer.norm2.gain,
                           layer.norm2.bias, cfg_.ln_eps);
    }
    return y;
}

ad::Var RtnModel::classify_objects(const ad::Var& node_final) const {
    return ad::matmul(node_final, params_.w_classifier);
}

ad::Var RtnModel::build_rel_input(const ad::Var& node_final, const ad::Var& edge_final,
                                  std::span<const DirectedCandidate> candidates,
                                  std::span<const std::size_t> candidate_edge,
                                  std::span<const double> global) const {
    std::vector<std::size_t> subj, obj;
    for (const auto& c : candidates) {
        subj.push_back(c.subject);
        obj.push_back(c.object);
    }
    std::vector<ad::Var> parts{ad::gather_rows(node_final, subj), ad::gather_rows(edge_final, candidate_edge),
                               ad::gather_rows(node_final, obj)};
    if (cfg_.use_gap) {
        if (global.size() != cfg_.embed.global_dim) throw DimensionError("build_rel_input: global length mismatch");
        Matrix g(candidates.size(), global.size());
        for (std::size_t r = 0; r < g.rows(); ++r) std::copy(global.begin(), global.end(), g.row(r).begin());
        parts.push_back(ad::constant(std::move(g)));
    }
    return ad::concat_cols(parts);
}

ad::Var RtnModel::rpm_forward(const ad::Var& rel_in, const ForwardContext& ctx) const {
    if (!cfg_.use_rpm) return ad::matmul(rel_in, params_.rpm_linear);
    ad::Var x = ad::layer_norm(rel_in, params_.rpm_norm->gain, params_.rpm_norm->bias, cfg_.ln_eps);
    x = ad::matmul(x, params_.rpm_w1);
    x = maybe_dropout(x, cfg_.dropout, ctx);
    x = ad::matmul(x, params_.rpm_w2);
    return ad::leaky_relu(x, cfg_.leaky_slope);
}

ad::Var RtnModel::relation_logits(const ad::Var& rel_final, const Matrix& fq_rows) const {
    ad::Var logits = ad::matmul(rel_final, params_.w_predicate);
    if (cfg_.use_freq_bias && cfg_.freq_mode == FreqMode::Logit) logits = ad::add(logits, ad::constant(fq_rows));
    return logits;
}

Matrix frequency_rows(const FrequencyTable& fq, std::span<const DirectedCandidate> candidates,
                      std::span<const std::size_t> classes, std::size_t num_predicates, bool enabled) {
    Matrix rows(candidates.size(), num_predicates);
    if (!enabled) return rows;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        const auto s = fq.slice(classes[candidates[k].subject], classes[candidates[k].object]);
        std::copy(s.begin(), s.end(), rows.row(k).begin());
    }
    return rows;
}

ForwardOutput RtnModel::forward(const ModelInput& input, const ForwardContext& ctx) const {
    const std::size_t n = input.nodes.size();
    if (n == 0) throw UsageError("forward: scene has no nodes");
    for (const auto& c : input.candidates) {
        if (c.subject >= n || c.object >= n || c.subject == c.object) {
            throw IndexError("forward: invalid candidate (" + std::to_string(c.subject) + ", " +
                             std::to_string(c.object) + ")");
        }
    }
    ForwardOutput out;
    out.candidates = input.candidates;
    std::set<std::pair<std::size_t, std::size_t>> edge_set;
    for (const auto& c : input.candidates) edge_set.emplace(std::min(c.subject, c.object), std::max(c.subject, c.object));
    out.edges.assign(edge_set.begin(), edge_set.end());
    for (const auto& c : input.candidates) {
        const std::pair<std::size_t, std::size_t> key{std::min(c.subject, c.object), std::max(c.subject, c.object)};
        out.candidate_edge.push_back(
            static_cast<std::size_t>(std::lower_bound(out.edges.begin(), out.edges.end(), key) - out.edges.begin()));
    }

    SceneInputs in = assemble_inputs(input.nodes, input.semantic_probs, input.global, out.edges, table_, cfg_.embed,
                                     ctx.rng);
    ad::Var node_in = ad::add(project_inputs(in.node_features, params_.w_node), ad::constant(in.node_pe));
    out.node_final = encoder_forward(node_in, &out.n2n_attention, ctx);
    out.object_logits = classify_objects(out.node_final);

    if (!input.fq_classes.empty()) {
        if (input.fq_classes.size() != n) throw DimensionError("forward: fq_classes must have one entry per node");
        out.fq_classes = input.fq_classes;
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            auto row = out.object_logits->value.row(i);
            out.fq_classes.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
        }
    }
    if (input.candidates.empty()) {
        out.fq_logits = Matrix(0, cfg_.num_predicates);
        return out;
    }

    ad::Var edge_in = ad::add(project_inputs(in.edge_features, params_.w_edge), ad::constant(in.edge_pe));
    out.edge_final = decoder_forward(edge_in, out.node_final, &out.e2n_attention, &out.e2e_attention, ctx);
    ad::Var rel_in = build_rel_input(out.node_final, out.edge_final, out.candidates, out.candidate_edge, input.global);
    out.rel_final = rpm_forward(rel_in, ctx);
    out.fq_logits = frequency_rows(fq_, out.candidates, out.fq_classes, cfg_.num_predicates, cfg_.use_freq_bias);
    out.relation_logits = relation_logits(out.rel_final, out.fq_logits);
    return out;
}

Matrix relation_scores(const ForwardOutput& out, const ModelConfig& cfg) {
    if (!out.relation_logits) return Matrix(0, cfg.num_predicates);
    Matrix probs = ad::softmax_rows(ad::constant(out.relation_logits->value))->value;
    if (cfg.use_freq_bias && cfg.freq_mode == FreqMode::PostSoftmax) {
        for (std::size_t i = 0; i < probs.size(); ++i) probs.data()[i] += std::exp(out.fq_logits.data()[i]);
    }
    return probs;
}

// Checkpoints -----------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const RtnParams& params,
                     const std::string& vocab_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out << "rtn-checkpoint 1\n";
    out << "vocab_hash " << vocab_hash << '\n';
    for (const auto& [k, v] : cfg.entries()) out << "config " << k << ' ' << v << '\n';
    for (const auto& [name, var] : params.named()) {
        out << "param " << name << ' ' << var->rows() << ' ' << var->cols() << '\n';
        const auto data = var->value.data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (i) out << ' ';
            out << fmt_real(data[i]);
        }
        out << '\n';
    }
    out << "end\n";
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open checkpoint " + path.string());
    CheckpointHeader h;
    std::string line, tag;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        ls >> tag;
        if (line_no == 1) {
            if (tag != "rtn-checkpoint" || !(ls >> h.version)) throw ParseError("not an rtn checkpoint", line_no);
            if (h.version != 1) throw ParseError("unsupported checkpoint version " + std::to_string(h.version), line_no);
        } else if (tag == "vocab_hash") {
            ls >> h.vocab_hash;
        } else if (tag == "config") {
            std::string k, v;
            ls >> k >> v;
            h.config.emplace_back(k, v);
        } else {
            break;
        }
    }
    if (h.version == 0) throw ParseError("empty checkpoint " + path.string());
    return h;
}

RtnParams load_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const std::string& vocab_hash) {
    const CheckpointHeader header = read_checkpoint_header(path);
    if (header.vocab_hash != vocab_hash) {
        throw ConfigError("checkpoint vocab hash " + header.vocab_hash + " does not match dataset vocab hash " +
                          vocab_hash);
    }
    const auto expected = cfg.entries();
    if (header.config != expected) {
        std::map<std::string, std::string> have(header.config.begin(), header.config.end());
        for (const auto& [k, v] : expected) {
            auto it = have.find(k);
            const std::string got = it == have.end() ? "<missing>" : it->second;
            if (got != v) throw ConfigError("checkpoint config " + k + "=" + got + " but expected " + k + "=" + v);
        }
        throw ConfigError("checkpoint config has unexpected keys");
    }

    Rng dummy(0);
    RtnParams params = init_params(cfg, dummy);
    std::map<std::string, ad::Var> by_name;
    for (auto& [name, var] : params.named()) by_name[name] = var;

    std::ifstream in(path);
    std::string line;
    std::size_t line_no = 0, loaded = 0;
    bool ended = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.rfind("param ", 0) != 0) {
            if (line == "end") ended = true;
            continue;
        }
        std::istringstream ls(line.substr(6));
        std::string name;
        std::size_t rows = 0, cols = 0;
        ls >> name >> rows >> cols;
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ParseError("unknown parameter " + name, line_no);
        if (it->second->rows() != rows || it->second->cols() != cols) {
            throw ParseError("parameter " + name + " has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                                 ", expected " + it->second->value.shape_str(),
                             line_no);
        }
        if (!std::getline(in, line)) throw ParseError("truncated checkpoint", line_no);
        ++line_no;
        const char* p = line.c_str();
        for (double& v : it->second->value.data()) {
            char* end = nullptr;
            v = std::strtod(p, &end);
            if (end == p) throw ParseError("bad value in parameter " + name, line_no);
            p = end;
        }
        ++loaded;
    }
    if (!ended || loaded != by_name.size()) throw ParseError("incomplete checkpoint " + path.string());
    return params;
}

}  // namespace rtn
