#include "rtn/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rtn/errors.hpp"

namespace rtn {

std::string to_string(EdgePe pe) {
    switch (pe) {
        case EdgePe::Interleaved: return "interleaved";
        case EdgePe::InterleavedDense: return "interleaved_dense";
        case EdgePe::NodeStyle: return "node_style";
        case EdgePe::None: return "none";
    }
    return "?";
}

EdgePe edge_pe_from_string(const std::string& s) {
    if (s == "interleaved") return EdgePe::Interleaved;
    if (s == "interleaved_dense") return EdgePe::InterleavedDense;
    if (s == "node_style") return EdgePe::NodeStyle;
    if (s == "none") return EdgePe::None;
    throw ConfigError("unknown edge PE variant '" + s + "'");
}

void EmbedConfig::validate() const {
    if (d_model == 0 || d_model % 4 != 0) throw ConfigError("d_model must be a positive multiple of 4");
    if (max_nodes < 2) throw ConfigError("max_nodes (m) must be >= 2");
    if (embed_dim < 4) throw ConfigError("embed_dim must be >= 4");
    if (visual_dim == 0 || global_dim == 0) throw ConfigError("visual_dim and global_dim must be positive");
}

std::vector<double> semantic_feature(std::span<const double> class_probs, const EmbeddingTable& table) {
    if (class_probs.size() != table.vectors.rows()) {
        throw DimensionError("semantic_feature: " + std::to_string(class_probs.size()) +
                             " probs for a table of " + std::to_string(table.vectors.rows()) + " classes");
    }
    std::vector<double> out(table.dim(), 0.0);
    for (std::size_t c = 0; c < class_probs.size(); ++c) {
        const double p = class_probs[c];
        if (p == 0.0) continue;
        auto row = table.vectors.row(c);
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += p * row[k];
    }
    return out;
}

std::vector<double> sinusoid_encoding(double position, double base, std::size_t d) {
    std::vector<double> out(d);
    for (std::size_t k = 0; 2 * k < d; ++k) {
        const double angle = position / std::pow(base, 2.0 * static_cast<double>(k) / static_cast<double>(d));
        out[2 * k] = std::sin(angle);
        if (2 * k + 1 < d) out[2 * k + 1] = std::cos(angle);
    }
    return out;
}

std::vector<double> node_positional_encoding(std::size_t position, const EmbedConfig& cfg) {
    if (position >= cfg.max_nodes) {
        throw IndexError("node position " + std::to_string(position) + " >= m = " + std::to_string(cfg.max_nodes));
    }
    return sinusoid_encoding(static_cast<double>(position), static_cast<double>(cfg.max_nodes), cfg.d_model);
}

std::vector<double> edge_positional_encoding(std::size_t p_i, std::size_t p_j, const EmbedConfig& cfg,
                                             bool dense) {
    if (p_i >= cfg.max_nodes || p_j >= cfg.max_nodes) {
        throw IndexError("edge positions (" + std::to_string(p_i) + ", " + std::to_string(p_j) +
                         ") must be < m = " + std::to_string(cfg.max_nodes));
    }
    const std::size_t d = cfg.d_model;
    if (d % 4 != 0) throw ConfigError("edge_positional_encoding: d must be a multiple of 4");
    const double m = static_cast<double>(cfg.max_nodes);
    std::vector<double> out(d);
    for (std::size_t k = 0; k < d; k += 4) {
        const double expo = (dense ? 1.0 : 2.0) * static_cast<double>(k) / static_cast<double>(d);
        const double freq = std::pow(m, expo);
        const double ai = static_cast<double>(p_i) / freq;
        const double aj = static_cast<double>(p_j) / freq;
        out[k] = std::sin(ai);
        out[k + 1] = std::cos(ai);
        out[k + 2] = std::sin(aj);
        out[k + 3] = std::cos(aj);
    }
    return out;
}

std::vector<std::size_t> node_positions(std::span<const std::vector<double>> class_probs,
                                        std::span<const Box> boxes) {
    const std::size_t n = boxes.size();
    if (class_probs.size() != n) throw DimensionError("node_positions: probs/boxes count mismatch");
    std::vector<double> conf(n);
    for (std::size_t i = 0; i < n; ++i) {
        conf[i] = class_probs[i].empty() ? 0.0 : *std::max_element(class_probs[i].begin(), class_probs[i].end());
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (conf[a] != conf[b]) return conf[a] > conf[b];
        return boxes[a].x1 < boxes[b].x1;
    });
    std::vector<std::size_t> pos(n);
    for (std::size_t rank = 0; rank < n; ++rank) pos[order[rank]] = rank;
    return pos;
}

std::vector<double> node_raw_feature(const NodeRecord& node, std::span<const double> semantic_probs,
                                     const EmbeddingTable& table, const EmbedConfig& cfg) {
    if (node.visual.size() != cfg.visual_dim) {
        throw DimensionError("node visual length " + std::to_string(node.visual.size()) + " != " +
                             std::to_string(cfg.visual_dim));
    }
    if (table.dim() != cfg.embed_dim) throw DimensionError("embedding dim mismatch");
    std::vector<double> out;
    out.reserve(cfg.node_input_dim());
    out.insert(out.end(), node.visual.begin(), node.visual.end());
    if (cfg.use_semantic) {
        const auto s = semantic_feature(semantic_probs, table);
        out.insert(out.end(), s.begin(), s.end());
    } else {
        out.insert(out.end(), cfg.embed_dim, 0.0);
    }
    if (cfg.use_spatial) {
        for (double c : node.box.coords()) out.push_back(c);
    } else {
        out.insert(out.end(), 4, 0.0);
    }
    return out;
}

std::vector<double> edge_raw_feature(std::span<const NodeRecord> nodes,
                                     std::span<const std::vector<double>> semantic_probs, std::size_t i,
                                     std::size_t j, const EmbeddingTable& table, const EmbedConfig& cfg) {
    if (i == j) throw UsageError("edge_raw_feature: an edge needs two distinct nodes");
    if (i >= nodes.size() || j >= nodes.size()) throw IndexError("edge_raw_feature: node index out of range");
    const NodeRecord& a = nodes[i];
    const NodeRecord& b = nodes[j];
    if (a.visual.size() != cfg.visual_dim || b.visual.size() != cfg.visual_dim) {
        throw DimensionError("edge_raw_feature: visual length mismatch");
    }
    std::vector<double> out;
    out.reserve(cfg.edge_input_dim());
    for (std::size_t k = 0; k < cfg.visual_dim; ++k) out.push_back(0.5 * (a.visual[k] + b.visual[k]));
    if (cfg.use_semantic) {
        for (std::size_t idx : {i, j}) {
            const auto s = semantic_feature(semantic_probs[idx], table);
            out.insert(out.end(), s.begin(), s.end());
        }
    } else {
        out.insert(out.end(), 2 * cfg.embed_dim, 0.0);
    }
    if (cfg.use_spatial) {
        for (double c : union_box(a.box, b.box).coords()) out.push_back(c);
    } else {
        out.insert(out.end(), 4, 0.0);
    }
    return out;
}

SceneInputs assemble_inputs(std::span<const NodeRecord> nodes,
                            std::span<const std::vector<double>> semantic_probs,
                            std::span<const double> global,
                            std::vector<std::pair<std::size_t, std::size_t>> edges,
                            const EmbeddingTable& table, const EmbedConfig& cfg, Rng* rng) {
    const std::size_t n = nodes.size();
    if (semantic_probs.size() != n) throw DimensionError("assemble_inputs: one class distribution per node");
    if (global.size() != cfg.global_dim) {
        throw DimensionError("assemble_inputs: global feature length " + std::to_string(global.size()) +
                             " != " + std::to_string(cfg.global_dim));
    }
    if (n > cfg.max_nodes) {
        throw IndexError("scene has " + std::to_string(n) + " nodes, more than m = " + std::to_string(cfg.max_nodes));
    }
    SceneInputs in;
    std::vector<std::vector<double>> probs_for_order;
    std::vector<Box> boxes;
    for (const auto& node : nodes) {
        probs_for_order.push_back(node.class_probs);
        boxes.push_back(node.box);
    }
    in.positions = node_positions(probs_for_order, boxes);
    if (cfg.shuffle_positions && rng) rng->shuffle(in.positions);

    in.node_features = Matrix(n, cfg.node_input_dim());
    in.node_pe = Matrix(n, cfg.d_model);
    for (std::size_t i = 0; i < n; ++i) {
        const auto raw = node_raw_feature(nodes[i], semantic_probs[i], table, cfg);
        std::copy(raw.begin(), raw.end(), in.node_features.row(i).begin());
        const auto pe = node_positional_encoding(in.positions[i], cfg);
        std::copy(pe.begin(), pe.end(), in.node_pe.row(i).begin());
    }

    in.edges = std::move(edges);
    const std::size_t e = in.edges.size();
    in.edge_features = Matrix(e, cfg.edge_input_dim());
    in.edge_pe = Matrix(e, cfg.d_model);
    for (std::size_t k = 0; k < e; ++k) {
        const auto [i, j] = in.edges[k];
        const auto raw = edge_raw_feature(nodes, semantic_probs, i, j, table, cfg);
        std::copy(raw.begin(), raw.end(), in.edge_features.row(k).begin());
        std::vector<double> pe;
        switch (cfg.edge_pe) {
            case EdgePe::Interleaved:
                pe = edge_positional_encoding(in.positions[i], in.positions[j], cfg, false);
                break;
            case EdgePe::InterleavedDense:
                pe = edge_positional_encoding(in.positions[i], in.positions[j], cfg, true);
                break;
            case EdgePe::NodeStyle:
                pe = sinusoid_encoding(static_cast<double>(k), static_cast<double>(cfg.max_nodes), cfg.d_model);
                break;
            case EdgePe::None: pe.assign(cfg.d_model, 0.0); break;
        }
        std::copy(pe.begin(), pe.end(), in.edge_pe.row(k).begin());
    }
    in.global = Matrix::row_vector(global);
    return in;
}

ad::Var project_inputs(const Matrix& raw, const ad::Var& weight) {
    return ad::matmul(ad::constant(raw), weight);
}

}  // namespace rtn
