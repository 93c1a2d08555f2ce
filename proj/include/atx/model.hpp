#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "atx/attention.hpp"
#include "atx/optim.hpp"
#include "atx/tensor.hpp"

namespace atx {

struct ModelConfig {
    std::size_t window = 100;
    std::size_t input_dim = 1;
    std::size_t d_model = 64;
    std::size_t layers = 3;
    std::size_t heads = 4;
    std::size_t d_ff = 0;  // 0 means 4 * d_model
    double sigma_floor = 1e-4;
    PriorKind prior_kind = PriorKind::gaussian;
    double layernorm_eps = 1e-5;
    double dropout = 0.0;

    void validate() const;
    std::size_t ff_dim() const { return d_ff ? d_ff : 4 * d_model; }
    AttentionConfig attention() const { return {d_model, heads, sigma_floor, prior_kind}; }
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct LayerParams {
    AttentionWeights attn;
    Tensor ff_w1, ff_b1, ff_w2, ff_b2;
    Tensor norm1_gain, norm1_bias, norm2_gain, norm2_bias;
};

struct ModelParams {
    Tensor embedding;   // input_dim × d_model
    Tensor positional;  // window × d_model, fixed sinusoidal table, never trained
    std::vector<LayerParams> layers;
    Tensor head_w;  // d_model × input_dim
    Tensor head_b;  // 1 × input_dim

    /// Learnable tensors in a fixed order with stable names.
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<Tensor> parameters() const;
    ModelParams clone() const;
};

/// Standard sinusoidal table: sin on even channels, cos on odd, base 10000.
Tensor sinusoidal_table(std::size_t window, std::size_t d_model);

/// Glorot-uniform matrices, zero biases, unit layer-norm gains.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

struct ForwardResult {
    Tensor x_hat;
    std::vector<AttentionOutput> layers;
};

/// Optional dropout source; forward is deterministic without one.
struct ForwardOptions {
    Rng* dropout_rng = nullptr;
};

Tensor embed(const Tensor& x, const ModelParams& params, const ModelConfig& cfg);

std::pair<Tensor, AttentionOutput> layer_forward(const Tensor& x_in, const LayerParams& layer,
                                                 const ModelConfig& cfg, const DistanceMatrix& dist,
                                                 const ForwardOptions& opts = {});

ForwardResult forward(const Tensor& x, const ModelParams& params, const ModelConfig& cfg,
                      const ForwardOptions& opts = {});

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    nlohmann::json meta = nlohmann::json::object();
};

/// JSON container: {"format", "version", "config", "tensors": [{name, shape, data}], "meta"}.
/// Doubles are written in shortest round-trip form, so load(save(x)) is value-exact.
nlohmann::json checkpoint_to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace atx
