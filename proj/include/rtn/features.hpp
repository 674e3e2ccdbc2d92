#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rtn/autodiff.hpp"
#include "rtn/dataset.hpp"
#include "rtn/embedding.hpp"
#include "rtn/rng.hpp"

namespace rtn {

/// How edge queries are position-encoded.
enum class EdgePe {
    Interleaved,       // both endpoint positions, one frequency per 4-block (literal stride 4)
    InterleavedDense,  // same layout, frequency index k/d instead of 2k/d
    NodeStyle,         // plain sinusoid of the edge's own sequence index
    None,
};

std::string to_string(EdgePe pe);
EdgePe edge_pe_from_string(const std::string& s);

struct EmbedConfig {
    std::size_t d_model = 64;
    std::size_t max_nodes = 64;  // m: position range and sinusoid base
    std::size_t visual_dim = 128;
    std::size_t embed_dim = 32;
    std::size_t global_dim = 32;
    EdgePe edge_pe = EdgePe::Interleaved;
    bool use_semantic = true;
    bool use_spatial = true;
    /// Shuffle node positions instead of using the deterministic ordering.
    bool shuffle_positions = false;

    std::size_t node_input_dim() const noexcept { return visual_dim + embed_dim + 4; }
    std::size_t edge_input_dim() const noexcept { return visual_dim + 2 * embed_dim + 4; }
    void validate() const;
};

/// probs^T * table: convex combination of embedding rows.
std::vector<double> semantic_feature(std::span<const double> class_probs, const EmbeddingTable& table);

/// Sinusoid at an arbitrary position: entry 2k = sin(pos / base^(2k/d)), 2k+1 = cos(...).
std::vector<double> sinusoid_encoding(double position, double base, std::size_t d);

/// Node position encoding with base m. Throws IndexError when position >= m.
std::vector<double> node_positional_encoding(std::size_t position, const EmbedConfig& cfg);

/// Interleaved edge encoding. For k = 0, 4, 8, ...: entries (k, k+1) encode p_i
/// and (k+2, k+3) encode p_j with the shared frequency m^(-2k/d)
/// (m^(-k/d) when `dense`). Throws IndexError when a position >= m.
std::vector<double> edge_positional_encoding(std::size_t p_i, std::size_t p_j, const EmbedConfig& cfg,
                                             bool dense = false);

/// Positions per node: rank under (descending max class prob, ascending x1),
/// ties by node index.
std::vector<std::size_t> node_positions(std::span<const std::vector<double>> class_probs,
                                        std::span<const Box> boxes);

/// Unprojected node feature [visual; semantic; box].
std::vector<double> node_raw_feature(const NodeRecord& node, std::span<const double> semantic_probs,
                                     const EmbeddingTable& table, const EmbedConfig& cfg);

/// Unprojected edge feature [mean(v_i, v_j); s_i; s_j; union_box(b_i, b_j)].
/// Throws UsageError when i == j.
std::vector<double> edge_raw_feature(std::span<const NodeRecord> nodes,
                                     std::span<const std::vector<double>> semantic_probs, std::size_t i,
                                     std::size_t j, const EmbeddingTable& table, const EmbedConfig& cfg);

/// Everything the encoder/decoder consume for one scene, before projection.
struct SceneInputs {
    Matrix node_features;  // N x node_input_dim
    Matrix node_pe;        // N x d_model
    std::vector<std::pair<std::size_t, std::size_t>> edges;  // undirected, i < j
    Matrix edge_features;  // E x edge_input_dim
    Matrix edge_pe;        // E x d_model
    Matrix global;         // 1 x global_dim
    std::vector<std::size_t> positions;
};

/// Builds SceneInputs. `semantic_probs` supplies the per-node class
/// distribution used for semantic features (gt one-hot or detector output).
/// `rng` is only consulted when cfg.shuffle_positions is set.
SceneInputs assemble_inputs(std::span<const NodeRecord> nodes,
                            std::span<const std::vector<double>> semantic_probs,
                            std::span<const double> global,
                            std::vector<std::pair<std::size_t, std::size_t>> edges,
                            const EmbeddingTable& table, const EmbedConfig& cfg, Rng* rng = nullptr);

/// f_in = X * W (bias-free projection).
ad::Var project_inputs(const Matrix& raw, const ad::Var& weight);

}  // namespace rtn
