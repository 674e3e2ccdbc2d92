#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rtn/autodiff.hpp"
#include "rtn/features.hpp"
#include "rtn/frequency.hpp"
#include "rtn/rng.hpp"

namespace rtn {

/// How the frequency prior enters the predicate distribution.
enum class FreqMode {
    Logit,        // softmax(W_p rel + fq): one proper distribution
    PostSoftmax,  // softmax(W_p rel) + exp(fq): literal sum, unnormalized
};

enum class Mode { PredCls, SgCls, SgDet };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct ModelConfig {
    EmbedConfig embed;
    std::size_t num_classes = 8;
    std::size_t num_predicates = 7;  // including background
    std::size_t heads = 4;
    std::size_t enc_layers = 3;
    std::size_t dec_layers = 2;
    std::size_t ffn_dim = 256;
    double dropout = 0.25;
    double leaky_slope = 0.01;
    double ln_eps = 1e-5;
    bool decoder_self_attention = false;
    bool use_rpm = true;
    bool use_freq_bias = true;
    bool use_gap = true;
    FreqMode freq_mode = FreqMode::Logit;

    std::size_t d_model() const noexcept { return embed.d_model; }
    std::size_t rel_input_dim() const noexcept {
        return 3 * embed.d_model + (use_gap ? embed.global_dim : 0);
    }
    void validate() const;

    /// Flat key/value view used by checkpoints and effective-config dumps.
    std::vector<std::pair<std::string, std::string>> entries() const;
};

struct AttentionParams {
    ad::Var wq, wk, wv, wo;  // d x d each, bias-free
};

struct NormParams {
    ad::Var gain, bias;  // 1 x d
};

struct FfnParams {
    ad::Var w1, b1, w2, b2;
};

struct EncoderLayerParams {
    AttentionParams attn;
    NormParams norm1;
    FfnParams ffn;
    NormParams norm2;
};

struct DecoderLayerParams {
    std::optional<AttentionParams> self_attn;  // only with decoder_self_attention
    std::optional<NormParams> norm_self;
    AttentionParams cross;
    NormParams norm1;
    FfnParams ffn;
    NormParams norm2;
};

struct RtnParams {
    ad::Var w_node, w_edge;
    std::vector<EncoderLayerParams> encoder;
    std::vector<DecoderLayerParams> decoder;
    ad::Var w_classifier;
    // RPM: LayerNorm -> W1 -> dropout -> W2 -> LeakyReLU. Without RPM a single
    // linear map `rpm_linear` replaces it.
    std::optional<NormParams> rpm_norm;
    ad::Var rpm_w1, rpm_w2, rpm_linear;
    ad::Var w_predicate;

    /// Every parameter with a stable dotted name, in a fixed order.
    std::vector<std::pair<std::string, ad::Var>> named() const;
    std::vector<ad::Var> list() const;
    std::size_t scalar_count() const;
    /// Deep copy of values (grads zeroed).
    RtnParams clone() const;
    void copy_values_from(const RtnParams& other);
};

/// Xavier-normal weights, zero biases, unit norm gains.
RtnParams init_params(const ModelConfig& cfg, Rng& rng);

/// Closed-form number of scalars init_params allocates.
std::size_t expected_parameter_count(const ModelConfig& cfg);

struct AttentionResult {
    ad::Var output;               // n_q x d
    std::vector<Matrix> weights;  // one n_q x n_kv map per head
};

/// Scaled dot-product attention over `heads` column slices, then output projection.
AttentionResult multi_head_attention(const ad::Var& queries, const ad::Var& keys_values,
                                     const AttentionParams& p, std::size_t heads);

struct DirectedCandidate {
    std::size_t subject = 0;
    std::size_t object = 0;
    bool operator==(const DirectedCandidate&) const = default;
};

/// Per-scene model input.
struct ModelInput {
    std::span<const NodeRecord> nodes;
    /// Class distribution feeding semantic features (gt one-hot in PREDCLS).
    std::vector<std::vector<double>> semantic_probs;
    std::span<const double> global;
    std::vector<DirectedCandidate> candidates;
    /// Classes used for the frequency lookup; empty means "argmax of the
    /// object classifier".
    std::vector<std::size_t> fq_classes;
};

struct ForwardOutput {
    ad::Var node_final;        // N x d
    ad::Var object_logits;     // N x C
    ad::Var edge_final;        // E x d (null when no edges)
    ad::Var rel_final;         // K x d (null when no candidates)
    ad::Var relation_logits;   // K x p (W_p rel, plus fq in Logit mode)
    Matrix fq_logits;          // K x p frequency logits used (zeros when disabled)
    std::vector<DirectedCandidate> candidates;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<std::size_t> candidate_edge;  // candidate -> edge row
    std::vector<std::size_t> fq_classes;
    std::vector<std::vector<Matrix>> n2n_attention;  // [layer][head] N x N
    std::vector<std::vector<Matrix>> e2n_attention;  // [layer][head] E x N
    std::vector<std::vector<Matrix>> e2e_attention;  // [layer][head] E x E, self-attn ablation only
};

struct ForwardContext {
    bool training = false;
    Rng* rng = nullptr;  // required when training with dropout > 0
};

class RtnModel {
public:
    RtnModel(ModelConfig cfg, RtnParams params, EmbeddingTable table, FrequencyTable fq);

    const ModelConfig& config() const noexcept { return cfg_; }
    RtnParams& params() noexcept { return params_; }
    const RtnParams& params() const noexcept { return params_; }
    const EmbeddingTable& embedding() const noexcept { return table_; }
    const FrequencyTable& frequency() const noexcept { return fq_; }

    ForwardOutput forward(const ModelInput& input, const ForwardContext& ctx = {}) const;

    ad::Var encoder_forward(const ad::Var& node_in, std::vector<std::vector<Matrix>>* maps,
                            const ForwardContext& ctx) const;
    ad::Var decoder_forward(const ad::Var& edge_in, const ad::Var& node_final,
                            std::vector<std::vector<Matrix>>* e2n_maps,
                            std::vector<std::vector<Matrix>>* e2e_maps, const ForwardContext& ctx) const;
    ad::Var classify_objects(const ad::Var& node_final) const;
    /// rows of rel_in = [f_subject; f_edge; f_object; global].
    ad::Var rpm_forward(const ad::Var& rel_in, const ForwardContext& ctx) const;
    ad::Var build_rel_input(const ad::Var& node_final, const ad::Var& edge_final,
                            std::span<const DirectedCandidate> candidates,
                            std::span<const std::size_t> candidate_edge, std::span<const double> global) const;
    /// W_p rel_final (+ fq in Logit mode).
    ad::Var relation_logits(const ad::Var& rel_final, const Matrix& fq_rows) const;

private:
    ad::Var ffn(const FfnParams& p, const ad::Var& x) const;

    ModelConfig cfg_;
    RtnParams params_;
    EmbeddingTable table_;
    FrequencyTable fq_;
};

/// Ranking scores per candidate (K x p): softmax of the logits in Logit mode,
/// softmax(W_p rel) + exp(fq) in PostSoftmax mode.
Matrix relation_scores(const ForwardOutput& out, const ModelConfig& cfg);

/// Frequency logits rows for candidate class pairs (zeros when disabled).
Matrix frequency_rows(const FrequencyTable& fq, std::span<const DirectedCandidate> candidates,
                      std::span<const std::size_t> classes, std::size_t num_predicates, bool enabled);

// Checkpoints -------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const RtnParams& params,
                     const std::string& vocab_hash);

struct CheckpointHeader {
    int version = 0;
    std::string vocab_hash;
    std::vector<std::pair<std::string, std::string>> config;
};

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

/// Loads parameters, rejecting a checkpoint whose config or vocab hash
/// differs from the expected ones (ConfigError naming both values).
RtnParams load_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                          const std::string& vocab_hash);

}  // namespace rtn
