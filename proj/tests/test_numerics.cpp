#include <doctest.h>

#include <cmath>
#include <limits>

#include "atx/errors.hpp"
#include "atx/ops.hpp"
#include "atx/optim.hpp"
#include "atx/rng.hpp"
#include "support.hpp"

using namespace atx;
using namespace atx::testing;

namespace {

void check_values(const Tensor& t, std::vector<double> expected, double tol = 1e-12) {
    REQUIRE(t.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(t.data()[i] == doctest::Approx(expected[i]).epsilon(tol));
}

}  // namespace

TEST_CASE("matmul hand cases") {
    auto eye = Tensor::matrix({{1, 0}, {0, 1}});
    auto a = Tensor::matrix({{1, 2}, {3, 4}});
    check_values(ops::matmul(eye, a), {1, 2, 3, 4});
    auto r = ops::matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}}));
    CHECK(r.shape() == Shape{1, 1});
    CHECK(r.item() == 11.0);
    CHECK_THROWS_AS(ops::matmul(a, Tensor::zeros({3, 2})), ShapeError);
}

TEST_CASE("matmul gradients match central differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        auto a = random_tensor({4, 3}, rng);
        auto b = random_tensor({3, 2}, rng);
        auto probe = random_tensor({4, 2}, rng, 1.0, false);
        auto gc = check_gradients([&] { return ops::sum(ops::mul(ops::matmul(a, b), probe)); }, {{"a", a}, {"b", b}});
        CHECK(gc.max_rel < 1e-6);
    }
}

TEST_CASE("every primitive passes a finite-difference check") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        CAPTURE(seed);
        Rng rng(seed + 10);
        auto a = random_tensor({3, 4}, rng);
        auto b = random_tensor({3, 4}, rng);
        auto row = random_tensor({1, 4}, rng);
        auto gain = random_tensor({1, 4}, rng);
        auto probe = random_tensor({3, 4}, rng, 1.0, false);
        auto probe_t = random_tensor({4, 3}, rng, 1.0, false);
        auto dot = [&](const Tensor& t) { return ops::sum(ops::mul(t, t.shape() == probe.shape() ? probe : probe_t)); };
        const std::vector<std::pair<std::string, std::function<Tensor()>>> cases{
            {"transpose", [&] { return dot(ops::transpose(a)); }},
            {"add", [&] { return dot(ops::add(a, b)); }},
            {"sub", [&] { return dot(ops::sub(a, b)); }},
            {"mul", [&] { return dot(ops::mul(a, b)); }},
            {"scale", [&] { return dot(ops::scale(a, -1.7)); }},
            {"add_scalar", [&] { return dot(ops::square(ops::add_scalar(a, 0.3))); }},
            {"add_row", [&] { return dot(ops::add_row(a, row)); }},
            {"square", [&] { return dot(ops::square(a)); }},
            {"softplus", [&] { return dot(ops::softplus(a)); }},
            {"gelu", [&] { return dot(ops::gelu(a)); }},
            {"softmax", [&] { return dot(ops::softmax_lastdim(a)); }},
            {"mean", [&] { return ops::mean(ops::square(a)); }},
            {"average", [&] {
                 std::vector<Tensor> items{a, b};
                 return dot(ops::average(items));
             }},
            {"slice_cols", [&] { return ops::sum(ops::square(ops::slice_cols(a, 1, 3))); }},
            {"concat_cols", [&] {
                 std::vector<Tensor> parts{ops::slice_cols(a, 0, 2), ops::slice_cols(b, 2, 4)};
                 return dot(ops::concat_cols(parts));
             }},
            {"layer_norm", [&] { return dot(ops::layer_norm(a, gain, row, 1e-5)); }},
            {"mse", [&] { return ops::mse(a, b); }},
        };
        for (const auto& [name, loss] : cases) {
            CAPTURE(name);
            auto gc = check_gradients(loss, {{"a", a}, {"b", b}, {"row", row}, {"gain", gain}});
            CAPTURE(gc.worst);
            CHECK(gc.max_rel < 1e-6);
        }
    }
}

TEST_CASE("softmax examples") {
    check_values(ops::softmax_lastdim(Tensor::matrix({{0, 0, 0}})), {1.0 / 3, 1.0 / 3, 1.0 / 3});
    check_values(ops::softmax_lastdim(Tensor::matrix({{std::log(1.0), std::log(3.0)}})), {0.25, 0.75});
    check_values(ops::softmax_lastdim(Tensor::matrix({{1000, 1000}})), {0.5, 0.5});
}

TEST_CASE("softmax rows are distributions for extreme inputs") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = random_tensor({5, 7}, rng, 1e3, false);
        auto s = ops::softmax_lastdim(x);
        for (std::size_t i = 0; i < 5; ++i) {
            double total = 0.0;
            for (std::size_t j = 0; j < 7; ++j) {
                CHECK(s.at(i, j) >= 0.0);
                total += s.at(i, j);
            }
            CHECK(std::abs(total - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("detach blocks gradient flow") {
    auto x = Tensor::scalar(3.0, true);
    backward(ops::mul(x, ops::detach(x)));
    CHECK(x.grad()[0] == 3.0);

    auto y = Tensor::scalar(2.0, true);
    auto z = Tensor::scalar(5.0, true);
    backward(ops::add(ops::square(ops::detach(y)), ops::mul(z, z)));
    CHECK(y.grad()[0] == 0.0);
    CHECK(z.grad()[0] == 10.0);

    auto w = Tensor::matrix({{1, 2}, {3, 4}}, true);
    auto only_detached = ops::sum(ops::square(ops::detach(w)));
    CHECK_FALSE(only_detached.requires_grad());
    CHECK(w.grad() == std::vector<double>(4, 0.0));
}

TEST_CASE("backward on sum of squares and accumulation across calls") {
    auto x = Tensor::from({3}, {1, 2, 3}, true);
    auto loss = [&] { return ops::sum(ops::square(x)); };
    backward(loss());
    CHECK(x.grad() == std::vector<double>{2, 4, 6});
    backward(loss());
    CHECK(x.grad() == std::vector<double>{4, 8, 12});
    x.zero_grad();
    CHECK(x.grad() == std::vector<double>{0, 0, 0});
}

TEST_CASE("backward requires a scalar loss") {
    auto x = Tensor::from({2}, {1, 2}, true);
    CHECK_THROWS_AS(backward(ops::square(x)), ContractError);
}

TEST_CASE("a shared subexpression receives gradient from every consumer") {
    auto x = Tensor::scalar(1.5, true);
    auto y = ops::square(x);
    backward(ops::add(ops::mul(y, y), y));  // x^4 + x^2
    CHECK(x.grad()[0] == doctest::Approx(4 * 1.5 * 1.5 * 1.5 + 2 * 1.5));
}

TEST_CASE("no-grad guard records nothing") {
    auto x = Tensor::scalar(2.0, true);
    Tensor y;
    {
        NoGradGuard g;
        y = ops::square(x);
    }
    CHECK_FALSE(y.requires_grad());
    CHECK(grad_enabled());
}

TEST_CASE("non-finite values are surfaced as numeric errors") {
    auto big = Tensor::matrix({{1e200}});
    CHECK_THROWS_AS(ops::square(ops::square(big)), NumericError);
    CHECK_THROWS_AS(Tensor::from({1}, {std::numeric_limits<double>::quiet_NaN()}), NumericError);
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("one ADAM step on w^2 from w=1 with lr 0.1 lands near 0.9") {
    auto w = Tensor::scalar(1.0, true);
    Adam opt({w}, {.lr = 0.1});
    backward(ops::square(w));
    opt.step();
    CHECK(w.item() == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(opt.steps() == 1);
}

TEST_CASE("ADAM leaves a parameter with zero gradient unchanged") {
    auto w = Tensor::scalar(0.7, true);
    Adam opt({w}, {.lr = 0.1});
    opt.zero_grad();
    opt.step();
    CHECK(std::abs(w.item() - 0.7) < 1e-12);
}

TEST_CASE("ADAM requires a gradient on every parameter") {
    auto w = Tensor::scalar(0.7, true);
    Adam opt({w});
    CHECK_THROWS_AS(opt.step(), ContractError);
}

TEST_CASE("ADAM converges on a convex quadratic") {
    auto w = Tensor::from({2}, {3.0, -2.0}, true);
    Adam opt({w}, {.lr = 0.05});
    for (int i = 0; i < 1000; ++i) {
        backward(ops::sum(ops::square(w)));
        opt.step();
        opt.zero_grad();
    }
    CHECK(std::abs(w.at(0)) < 1e-2);
    CHECK(std::abs(w.at(1)) < 1e-2);
}

TEST_CASE("seeded init schemes") {
    auto z = seeded_init({2, 2}, 1, InitScheme::zeros);
    CHECK(z.data()[0] == 0.0);
    CHECK(std::all_of(z.data().begin(), z.data().end(), [](double v) { return v == 0.0; }));
    auto o = seeded_init({3}, 1, InitScheme::ones);
    CHECK(std::all_of(o.data().begin(), o.data().end(), [](double v) { return v == 1.0; }));

    auto a = seeded_init({100, 100}, 42, InitScheme::uniform_fan);
    auto b = seeded_init({100, 100}, 42, InitScheme::uniform_fan);
    auto c = seeded_init({100, 100}, 43, InitScheme::uniform_fan);
    const double bound = std::sqrt(6.0 / 200.0);
    CHECK(bound == doctest::Approx(0.1732).epsilon(1e-3));
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.data()[i] == b.data()[i]);
        CHECK(std::abs(a.data()[i]) <= bound);
        differs |= a.data()[i] != c.data()[i];
    }
    CHECK(differs);
    CHECK(parse_init_scheme("uniform_fan") == InitScheme::uniform_fan);
    CHECK_THROWS_AS(parse_init_scheme("he_normal"), ConfigError);
}

TEST_CASE("rng is deterministic and its helpers stay in range") {
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
    Rng r(1);
    double mean = 0.0, sq = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double u = r.uniform();
        CHECK((u >= 0.0 && u < 1.0));
        CHECK(r.below(5) < 5);
        const double z = r.normal();
        mean += z;
        sq += z * z;
    }
    mean /= 20000;
    CHECK(std::abs(mean) < 0.05);
    CHECK(sq / 20000 == doctest::Approx(1.0).epsilon(0.05));
    std::vector<int> v{1, 2, 3, 4, 5, 6};
    r.shuffle(v);
    std::sort(v.begin(), v.end());
    CHECK(v == std::vector<int>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("gradients are bit-identical across repeated runs") {
    auto run = [] {
        Rng rng(11);
        auto a = random_tensor({3, 3}, rng);
        backward(ops::sum(ops::gelu(ops::matmul(a, a))));
        return a.grad();
    };
    CHECK(run() == run());
}
