#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "atx/discrepancy.hpp"
#include "atx/errors.hpp"
#include "atx/model.hpp"
#include "atx/ops.hpp"
#include "support.hpp"

using namespace atx;
using namespace atx::testing;

TEST_CASE("forward returns the input shape and one association pair per layer") {
    for (std::size_t d : {1u, 3u}) {
        ModelConfig cfg;
        cfg.window = 12;
        cfg.input_dim = d;
        cfg.d_model = 16;
        cfg.heads = 4;
        cfg.layers = 3;
        auto params = init_params(cfg, 7);
        auto fr = forward(sine_window(12, d, 1), params, cfg);
        CHECK(fr.x_hat.shape() == Shape{12, d});
        REQUIRE(fr.layers.size() == 3);
        for (const auto& layer : fr.layers) {
            REQUIRE(layer.prior.size() == 4);
            REQUIRE(layer.series.size() == 4);
            for (std::size_t m = 0; m < 4; ++m) {
                for (const auto* map : {&layer.prior[m], &layer.series[m]}) {
                    CHECK(map->shape() == Shape{12, 12});
                    for (std::size_t i = 0; i < 12; ++i) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < 12; ++j) s += map->at(i, j);
                        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
                    }
                }
            }
        }
    }
}

TEST_CASE("embedding of a zero window is the positional table") {
    auto cfg = tiny_config();
    auto params = init_params(cfg, 3);
    auto e = embed(Tensor::zeros({8, 1}), params, cfg);
    for (std::size_t i = 0; i < e.size(); ++i) CHECK(e.data()[i] == params.positional.data()[i]);
}

TEST_CASE("positional table row zero alternates sin 0 and cos 0") {
    auto table = sinusoidal_table(5, 6);
    for (std::size_t c = 0; c < 6; ++c) CHECK(table.at(0, c) == (c % 2 == 0 ? 0.0 : 1.0));
    CHECK(table.at(1, 0) == doctest::Approx(std::sin(1.0)));
    CHECK(table.at(1, 2) == doctest::Approx(std::sin(1.0 / std::pow(10000.0, 2.0 / 6.0))));
}

TEST_CASE("embed rejects a window of the wrong length") {
    auto cfg = tiny_config();
    auto params = init_params(cfg, 3);
    CHECK_THROWS_AS(embed(Tensor::zeros({7, 1}), params, cfg), ShapeError);
}

TEST_CASE("layer norm rows have zero mean and unit variance before gain and bias") {
    Rng rng(5);
    auto x = random_tensor({6, 10}, rng, 3.0, false);
    auto y = ops::layer_norm(x, Tensor::full({1, 10}, 1.0), Tensor::zeros({1, 10}), 1e-5);
    for (std::size_t i = 0; i < 6; ++i) {
        double m = 0.0, v = 0.0;
        for (std::size_t c = 0; c < 10; ++c) m += y.at(i, c);
        m /= 10.0;
        for (std::size_t c = 0; c < 10; ++c) v += (y.at(i, c) - m) * (y.at(i, c) - m);
        v /= 10.0;
        CHECK(std::abs(m) < 1e-6);
        CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("a zero second feed-forward matrix leaves only its bias in the branch") {
    auto cfg = tiny_config();
    auto params = init_params(cfg, 11);
    auto& layer = params.layers[0];
    for (auto& v : layer.ff_w2.mutable_data()) v = 0.0;
    for (std::size_t c = 0; c < cfg.d_model; ++c) layer.ff_b2.mutable_data()[c] = 0.1 * static_cast<double>(c);

    auto x = embed(sine_window(8, 1, 2), params, cfg);
    DistanceMatrix dist(8);
    auto [out, attn] = layer_forward(x, layer, cfg, dist);
    auto z = ops::layer_norm(ops::add(attn.z_hat, x), layer.norm1_gain, layer.norm1_bias, cfg.layernorm_eps);
    auto expected = ops::layer_norm(ops::add_row(z, layer.ff_b2), layer.norm2_gain, layer.norm2_bias, cfg.layernorm_eps);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == doctest::Approx(expected.data()[i]).epsilon(1e-12));
}

TEST_CASE("forward is bit-identical for identical inputs") {
    auto cfg = tiny_config(10, 2);
    auto params = init_params(cfg, 4);
    auto x = sine_window(10, 2, 9);
    auto a = forward(x, params, cfg), b = forward(x, params, cfg);
    for (std::size_t i = 0; i < a.x_hat.size(); ++i) CHECK(a.x_hat.data()[i] == b.x_hat.data()[i]);
    for (std::size_t m = 0; m < 2; ++m)
        for (std::size_t i = 0; i < 100; ++i) CHECK(a.layers[0].series[m].data()[i] == b.layers[0].series[m].data()[i]);
}

TEST_CASE("permuting channels with the embedding rows and head columns permutes the reconstruction") {
    const std::vector<std::size_t> perm{2, 0, 1};
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto cfg = tiny_config(8, 3);
        auto params = init_params(cfg, seed);
        Rng rng(seed + 100);
        for (auto& v : params.head_b.mutable_data()) v = rng.normal(0.0, 0.5);
        auto x = random_tensor({8, 3}, rng, 1.0, false);

        auto permuted = params.clone();
        std::vector<double> xp(24);
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t t = 0; t < 8; ++t) xp[t * 3 + c] = x.at(t, perm[c]);
            for (std::size_t k = 0; k < cfg.d_model; ++k) {
                permuted.embedding.mutable_data()[c * cfg.d_model + k] = params.embedding.at(perm[c], k);
                permuted.head_w.mutable_data()[k * 3 + c] = params.head_w.at(k, perm[c]);
            }
            permuted.head_b.mutable_data()[c] = params.head_b.at(0, perm[c]);
        }
        auto y = forward(x, params, cfg).x_hat;
        auto yp = forward(Tensor::from({8, 3}, xp), permuted, cfg).x_hat;
        for (std::size_t t = 0; t < 8; ++t)
            for (std::size_t c = 0; c < 3; ++c) CHECK(yp.at(t, c) == doctest::Approx(y.at(t, perm[c])).epsilon(1e-12));
    }
}

TEST_CASE("tiny model gradients match central differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        CAPTURE(seed);
        auto cfg = tiny_config(8, 1);
        auto params = init_params(cfg, seed);
        auto x = sine_window(8, 1, seed + 50);
        auto loss = [&] {
            auto fr = forward(x, params, cfg);
            auto dis = ops::mean(assoc_discrepancy(fr.layers, DiscrepancyConfig{}));
            return ops::add(ops::mse(x, fr.x_hat), ops::scale(dis, 3.0));
        };
        auto gc = check_gradients(loss, params.named_parameters());
        CAPTURE(gc.worst);
        CHECK(gc.max_rel < 1e-4);
    }
}

TEST_CASE("a single layer passes the gradient check") {
    auto cfg = tiny_config(6, 1);
    auto params = init_params(cfg, 21);
    DistanceMatrix dist(6);
    Rng rng(3);
    auto x = random_tensor({6, 8}, rng, 1.0, true);
    auto probe = random_tensor({6, 8}, rng, 1.0, false);
    auto loss = [&] {
        auto [out, attn] = layer_forward(x, params.layers[0], cfg, dist);
        return ops::sum(ops::mul(out, probe));
    };
    std::vector<std::pair<std::string, Tensor>> named{{"x", x}};
    for (auto& [name, t] : params.named_parameters())
        if (name.starts_with("layers.0")) named.emplace_back(name, t);
    auto gc = check_gradients(loss, named);
    CAPTURE(gc.worst);
    CHECK(gc.max_rel < 1e-4);
}

TEST_CASE("checkpoint round trip is value-exact") {
    ModelConfig cfg = tiny_config(8, 2);
    cfg.layers = 2;
    Checkpoint ck{cfg, init_params(cfg, 99), {{"note", "x"}}};
    for (auto& v : ck.params.head_b.mutable_data()) v = 1.0 / 3.0;
    const auto path = std::filesystem::temp_directory_path() / "atx_test_checkpoint.json";
    save_checkpoint(path, ck);
    auto back = load_checkpoint(path);
    std::filesystem::remove(path);
    CHECK(back.config.window == 8);
    CHECK(back.config.layers == 2);
    CHECK(back.meta.at("note") == "x");
    auto a = ck.params.named_parameters(), b = back.params.named_parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(a[k].first == b[k].first);
        REQUIRE(a[k].second.shape() == b[k].second.shape());
        for (std::size_t i = 0; i < a[k].second.size(); ++i) CHECK(a[k].second.data()[i] == b[k].second.data()[i]);
    }
}

TEST_CASE("checkpoint loading rejects foreign or inconsistent files") {
    auto cfg = tiny_config();
    auto j = checkpoint_to_json({cfg, init_params(cfg, 1), {}});
    auto wrong_format = j;
    wrong_format["format"] = "other";
    CHECK_THROWS_AS(checkpoint_from_json(wrong_format), CompatibilityError);
    auto wrong_shape = j;
    wrong_shape["config"]["d_model"] = 16;
    CHECK_THROWS_AS(checkpoint_from_json(wrong_shape), CompatibilityError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/ck.json"), IoError);
}

TEST_CASE("invalid model configs are rejected") {
    auto cfg = tiny_config();
    cfg.heads = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.window = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
