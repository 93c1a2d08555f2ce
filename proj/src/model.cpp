#include "atx/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "atx/ops.hpp"

namespace atx {

void ModelConfig::validate() const {
    if (window == 0 || input_dim == 0 || d_model == 0 || layers == 0 || heads == 0) {
        throw ConfigError("model config: window, input_dim, d_model, layers and heads must be positive");
    }
    attention().validate();
    if (!(layernorm_eps > 0.0)) throw ConfigError("model config: layernorm_eps must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model config: dropout must be in [0, 1)");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"window", c.window},
         {"input_dim", c.input_dim},
         {"d_model", c.d_model},
         {"layers", c.layers},
         {"heads", c.heads},
         {"d_ff", c.d_ff},
         {"sigma_floor", c.sigma_floor},
         {"prior_kind", std::string(to_string(c.prior_kind))},
         {"layernorm_eps", c.layernorm_eps},
         {"dropout", c.dropout}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.window = j.value("window", c.window);
    c.input_dim = j.value("input_dim", c.input_dim);
    c.d_model = j.value("d_model", c.d_model);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.sigma_floor = j.value("sigma_floor", c.sigma_floor);
    if (j.contains("prior_kind")) c.prior_kind = parse_prior_kind(j.at("prior_kind").get<std::string>());
    c.layernorm_eps = j.value("layernorm_eps", c.layernorm_eps);
    c.dropout = j.value("dropout", c.dropout);
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("embedding", embedding);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& p = layers[l];
        const std::string pre = "layers." + std::to_string(l) + ".";
        out.emplace_back(pre + "w_q", p.attn.w_q);
        out.emplace_back(pre + "w_k", p.attn.w_k);
        out.emplace_back(pre + "w_v", p.attn.w_v);
        out.emplace_back(pre + "w_sigma", p.attn.w_sigma);
        out.emplace_back(pre + "w_out", p.attn.w_out);
        out.emplace_back(pre + "b_out", p.attn.b_out);
        out.emplace_back(pre + "ff_w1", p.ff_w1);
        out.emplace_back(pre + "ff_b1", p.ff_b1);
        out.emplace_back(pre + "ff_w2", p.ff_w2);
        out.emplace_back(pre + "ff_b2", p.ff_b2);
        out.emplace_back(pre + "norm1_gain", p.norm1_gain);
        out.emplace_back(pre + "norm1_bias", p.norm1_bias);
        out.emplace_back(pre + "norm2_gain", p.norm2_gain);
        out.emplace_back(pre + "norm2_bias", p.norm2_bias);
    }
    out.emplace_back("head_w", head_w);
    out.emplace_back("head_b", head_b);
    return out;
}

std::vector<Tensor> ModelParams::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

ModelParams ModelParams::clone() const {
    auto c = [](const Tensor& t) { return t.clone(true); };
    ModelParams p;
    p.embedding = c(embedding);
    p.positional = positional.clone(false);
    for (const auto& l : layers) {
        LayerParams n;
        n.attn = {c(l.attn.w_q), c(l.attn.w_k), c(l.attn.w_v), c(l.attn.w_sigma), c(l.attn.w_out), c(l.attn.b_out)};
        n.ff_w1 = c(l.ff_w1);
        n.ff_b1 = c(l.ff_b1);
        n.ff_w2 = c(l.ff_w2);
        n.ff_b2 = c(l.ff_b2);
        n.norm1_gain = c(l.norm1_gain);
        n.norm1_bias = c(l.norm1_bias);
        n.norm2_gain = c(l.norm2_gain);
        n.norm2_bias = c(l.norm2_bias);
        p.layers.push_back(std::move(n));
    }
    p.head_w = c(head_w);
    p.head_b = c(head_b);
    return p;
}

Tensor sinusoidal_table(std::size_t window, std::size_t d_model) {
    std::vector<double> pe(window * d_model);
    for (std::size_t pos = 0; pos < window; ++pos) {
        for (std::size_t c = 0; c < d_model; ++c) {
            const double even = static_cast<double>(c - c % 2);
            const double angle = static_cast<double>(pos) / std::pow(10000.0, even / static_cast<double>(d_model));
            pe[pos * d_model + c] = c % 2 == 0 ? std::sin(angle) : std::cos(angle);
        }
    }
    return Tensor::from({window, d_model}, std::move(pe));
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    // Each tensor gets its own sub-seed so adding a layer does not reshuffle the others.
    std::uint64_t counter = 0;
    auto glorot = [&](std::size_t r, std::size_t c) {
        return seeded_init({r, c}, seed * 1000003ULL + counter++, InitScheme::uniform_fan);
    };
    auto zeros = [](std::size_t c) { return seeded_init({1, c}, 0, InitScheme::zeros); };
    auto ones = [](std::size_t c) { return seeded_init({1, c}, 0, InitScheme::ones); };

    const std::size_t dm = cfg.d_model, dff = cfg.ff_dim();
    ModelParams p;
    p.embedding = glorot(cfg.input_dim, dm);
    p.positional = sinusoidal_table(cfg.window, dm);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        LayerParams lp;
        lp.attn.w_q = glorot(dm, dm);
        lp.attn.w_k = glorot(dm, dm);
        lp.attn.w_v = glorot(dm, dm);
        lp.attn.w_sigma = glorot(dm, cfg.heads);
        lp.attn.w_out = glorot(dm, dm);
        lp.attn.b_out = zeros(dm);
        lp.ff_w1 = glorot(dm, dff);
        lp.ff_b1 = zeros(dff);
        lp.ff_w2 = glorot(dff, dm);
        lp.ff_b2 = zeros(dm);
        lp.norm1_gain = ones(dm);
        lp.norm1_bias = zeros(dm);
        lp.norm2_gain = ones(dm);
        lp.norm2_bias = zeros(dm);
        p.layers.push_back(std::move(lp));
    }
    p.head_w = glorot(dm, cfg.input_dim);
    p.head_b = zeros(cfg.input_dim);
    return p;
}

Tensor embed(const Tensor& x, const ModelParams& params, const ModelConfig& cfg) {
    if (x.dim() != 2 || x.rows() != cfg.window) {
        throw ShapeError("embed: expected window of " + std::to_string(cfg.window) + " points, got " +
                         shape_str(x.shape()));
    }
    if (x.cols() != cfg.input_dim) {
        throw ShapeError("embed: expected " + std::to_string(cfg.input_dim) + " channels, got " +
                         std::to_string(x.cols()));
    }
    return ops::add(ops::matmul(x, params.embedding), params.positional);
}

std::pair<Tensor, AttentionOutput> layer_forward(const Tensor& x_in, const LayerParams& layer,
                                                 const ModelConfig& cfg, const DistanceMatrix& dist,
                                                 const ForwardOptions& opts) {
    auto maybe_drop = [&](const Tensor& t) {
        return opts.dropout_rng && cfg.dropout > 0.0 ? ops::dropout(t, cfg.dropout, *opts.dropout_rng) : t;
    };
    auto attn = anomaly_attention(x_in, layer.attn, cfg.attention(), dist);
    auto z = ops::layer_norm(ops::add(maybe_drop(attn.z_hat), x_in), layer.norm1_gain, layer.norm1_bias,
                             cfg.layernorm_eps);
    auto hidden = ops::gelu(ops::add_row(ops::matmul(z, layer.ff_w1), layer.ff_b1));
    auto ff = ops::add_row(ops::matmul(maybe_drop(hidden), layer.ff_w2), layer.ff_b2);
    auto out = ops::layer_norm(ops::add(maybe_drop(ff), z), layer.norm2_gain, layer.norm2_bias, cfg.layernorm_eps);
    return {out, std::move(attn)};
}

ForwardResult forward(const Tensor& x, const ModelParams& params, const ModelConfig& cfg, const ForwardOptions& opts) {
    DistanceMatrix dist(cfg.window);
    ForwardResult result;
    auto h = embed(x, params, cfg);
    for (const auto& layer : params.layers) {
        auto [next, attn] = layer_forward(h, layer, cfg, dist, opts);
        h = std::move(next);
        result.layers.push_back(std::move(attn));
    }
    result.x_hat = ops::add_row(ops::matmul(h, params.head_w), params.head_b);
    return result;
}

namespace {

constexpr const char* kCheckpointFormat = "atx-checkpoint";
constexpr int kCheckpointVersion = 1;

Tensor* find_param(ModelParams& p, const std::string& name) {
    if (name == "embedding") return &p.embedding;
    if (name == "head_w") return &p.head_w;
    if (name == "head_b") return &p.head_b;
    if (name.rfind("layers.", 0) != 0) return nullptr;
    const auto dot = name.find('.', 7);
    if (dot == std::string::npos) return nullptr;
    const std::size_t l = std::stoul(name.substr(7, dot - 7));
    if (l >= p.layers.size()) return nullptr;
    auto& lp = p.layers[l];
    const std::string field = name.substr(dot + 1);
    if (field == "w_q") return &lp.attn.w_q;
    if (field == "w_k") return &lp.attn.w_k;
    if (field == "w_v") return &lp.attn.w_v;
    if (field == "w_sigma") return &lp.attn.w_sigma;
    if (field == "w_out") return &lp.attn.w_out;
    if (field == "b_out") return &lp.attn.b_out;
    if (field == "ff_w1") return &lp.ff_w1;
    if (field == "ff_b1") return &lp.ff_b1;
    if (field == "ff_w2") return &lp.ff_w2;
    if (field == "ff_b2") return &lp.ff_b2;
    if (field == "norm1_gain") return &lp.norm1_gain;
    if (field == "norm1_bias") return &lp.norm1_bias;
    if (field == "norm2_gain") return &lp.norm2_gain;
    if (field == "norm2_bias") return &lp.norm2_bias;
    return nullptr;
}

}  // namespace

nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, t] : ck.params.named_parameters()) {
        tensors.push_back({{"name", name},
                           {"shape", t.shape()},
                           {"data", std::vector<double>(t.data().begin(), t.data().end())}});
    }
    return {{"format", kCheckpointFormat},
            {"version", kCheckpointVersion},
            {"config", ck.config},
            {"tensors", std::move(tensors)},
            {"meta", ck.meta}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != kCheckpointFormat) throw CompatibilityError("not an atx checkpoint");
    if (j.value("version", 0) != kCheckpointVersion) {
        throw CompatibilityError("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
    }
    Checkpoint ck;
    ck.config = j.at("config").get<ModelConfig>();
    ck.config.validate();
    ck.params = init_params(ck.config, 0);
    std::size_t loaded = 0;
    for (const auto& t : j.at("tensors")) {
        const auto name = t.at("name").get<std::string>();
        Tensor* slot = find_param(ck.params, name);
        if (!slot) throw CompatibilityError("checkpoint: unknown tensor '" + name + "'");
        auto shape = t.at("shape").get<Shape>();
        if (shape != slot->shape()) {
            throw CompatibilityError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) +
                                 ", config expects " + shape_str(slot->shape()));
        }
        *slot = Tensor::from(std::move(shape), t.at("data").get<std::vector<double>>(), true);
        ++loaded;
    }
    const auto expected = ck.params.named_parameters().size();
    if (loaded != expected) {
        throw CompatibilityError("checkpoint: " + std::to_string(loaded) + " tensors, expected " +
                                 std::to_string(expected));
    }
    if (j.contains("meta")) ck.meta = j.at("meta");
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream os(tmp);
        if (!os) throw IoError("cannot write " + tmp.string());
        os << checkpoint_to_json(ck).dump() << '\n';
        if (!os) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw CompatibilityError(path.string() + " is not a JSON checkpoint: " + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace atx
