#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "atx/detection.hpp"
#include "atx/errors.hpp"
#include "atx/evaluation.hpp"
#include "atx/rng.hpp"

using namespace atx;

namespace {

using Bits = std::vector<std::uint8_t>;

Bits random_bits(std::size_t n, double p, Rng& rng) {
    Bits b(n);
    for (auto& x : b) x = rng.uniform() < p;
    return b;
}

// segment scan: find each run, look for a hit, fill
Bits naive_adjust(const Bits& pred, const Bits& truth) {
    Bits out = pred;
    std::size_t i = 0;
    while (i < truth.size()) {
        if (!truth[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        bool hit = false;
        while (j < truth.size() && truth[j]) hit |= pred[j++] != 0;
        if (hit)
            for (std::size_t k = i; k < j; ++k) out[k] = 1;
        i = j;
    }
    return out;
}

double naive_auc(std::vector<std::pair<double, double>> pts) {
    pts.emplace_back(0.0, 0.0);
    pts.emplace_back(1.0, 1.0);
    std::sort(pts.begin(), pts.end());
    double a = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        a += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) / 2.0;
    return a;
}

}  // namespace

TEST_CASE("point adjust examples") {
    CHECK(point_adjust(Bits{0, 0, 1, 0, 0}, Bits{0, 1, 1, 1, 0}) == Bits{0, 1, 1, 1, 0});
    CHECK(point_adjust(Bits{0, 0, 0, 0}, Bits{0, 1, 1, 0}) == Bits{0, 0, 0, 0});
    CHECK(point_adjust(Bits{1, 0, 0, 1}, Bits{0, 0, 0, 0}) == Bits{1, 0, 0, 1});
    CHECK_THROWS_AS(point_adjust(Bits{1}, Bits{1, 0}), ConfigError);
}

TEST_CASE("point adjust matches a segment-scan oracle and its properties hold") {
    Rng rng(1);
    for (int t = 0; t < 500; ++t) {
        const std::size_t n = 1 + rng.below(20);
        auto truth = random_bits(n, 0.4, rng), pred = random_bits(n, 0.2, rng);
        auto adj = point_adjust(pred, truth);
        CHECK(adj == naive_adjust(pred, truth));
        CHECK(point_adjust(adj, truth) == adj);
        CHECK(prf(adj, truth).recall >= prf(pred, truth).recall);
        // one more predicted point never removes an adjusted one
        auto more = pred;
        more[rng.below(n)] = 1;
        auto adj_more = point_adjust(more, truth);
        for (std::size_t i = 0; i < n; ++i) CHECK(adj_more[i] >= adj[i]);
    }
}

TEST_CASE("precision recall f1") {
    auto p = prf(Bits{1, 1, 0, 0}, Bits{1, 0, 1, 0});
    CHECK(p.precision == 0.5);
    CHECK(p.recall == 0.5);
    CHECK(p.f1 == 0.5);
    auto perfect = prf(Bits{0, 1, 1}, Bits{0, 1, 1});
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);
    auto none = prf(Bits{0, 0, 0}, Bits{0, 1, 0});
    CHECK(none.precision == 0.0);
    CHECK(none.precision_undefined);
    CHECK(none.recall == 0.0);
    CHECK(none.f1 == 0.0);
    auto clean = prf(Bits{1, 0}, Bits{0, 0});
    CHECK(clean.recall_undefined);
    CHECK(clean.f1 == 0.0);
}

TEST_CASE("default ratio grid") {
    CHECK(kDefaultRatioGrid == std::vector<double>{0.005, 0.01, 0.015, 0.02, 0.10, 0.20, 0.30});
}

TEST_CASE("trapezoid auc hand cases") {
    CHECK(trapezoid_auc({{0.2, 0.6}}) == doctest::Approx(0.7).epsilon(1e-14));
    CHECK(trapezoid_auc({}) == doctest::Approx(0.5));
    CHECK(trapezoid_auc({{0.0, 1.0}}) == doctest::Approx(1.0));
    Rng rng(6);
    for (int t = 0; t < 200; ++t) {
        std::vector<std::pair<double, double>> pts(1 + rng.below(8));
        for (auto& [f, tp] : pts) {
            f = rng.uniform();
            tp = rng.uniform();
        }
        CHECK(std::abs(trapezoid_auc(pts) - naive_auc(pts)) < 1e-12);
    }
}

TEST_CASE("separable scores give auc 1") {
    Bits truth(200, 0);
    std::vector<double> test(200), val(400);
    Rng rng(2);
    for (std::size_t i = 0; i < 200; ++i) {
        truth[i] = i % 10 == 3;
        test[i] = truth[i] ? 5.0 + rng.uniform() : -rng.uniform();
    }
    for (auto& v : val) v = rng.uniform();
    auto roc = roc_auc(test, truth, val, kDefaultRatioGrid);
    CHECK(roc.points.size() == kDefaultRatioGrid.size());
    CHECK(roc.auc == doctest::Approx(1.0));
}

TEST_CASE("constant scores give one degenerate operating point") {
    Bits truth{0, 1, 0, 0, 1, 0, 0, 0, 0, 0};
    std::vector<double> test(10, 1.0), val(10, 0.0);
    val[0] = 2.0;
    // r below 0.1 keeps delta at 2, r at or above 0.1 drops it to 0 and flags everything
    auto roc = roc_auc(test, truth, val, std::vector<double>{0.05, 0.3});
    CHECK(roc.points[0].fpr == 0.0);
    CHECK(roc.points[0].tpr == 0.0);
    CHECK(roc.points[1].fpr == 1.0);
    CHECK(roc.points[1].tpr == 1.0);
    CHECK(roc.auc == doctest::Approx(0.5));
}

TEST_CASE("random scores give auc near one half") {
    Rng rng(11);
    const std::size_t m = 20000;
    std::vector<double> test(m), val(m);
    Bits truth(m);
    for (std::size_t i = 0; i < m; ++i) {
        test[i] = rng.uniform();
        val[i] = rng.uniform();
        truth[i] = rng.uniform() < 0.05;
    }
    std::vector<double> grid;
    for (int k = 1; k < 20; ++k) grid.push_back(k / 20.0);
    CHECK(std::abs(roc_auc(test, truth, val, grid).auc - 0.5) < 0.1);
}

TEST_CASE("roc matches a brute-force oracle, is monotone in r and transform-invariant") {
    Rng rng(13);
    for (int t = 0; t < 100; ++t) {
        const std::size_t m = 5 + rng.below(16);
        std::vector<double> test(m), val(m);
        for (auto& v : test) v = rng.normal();
        for (auto& v : val) v = rng.normal();
        auto truth = random_bits(m, 0.3, rng);
        auto roc = roc_auc(test, truth, val, kDefaultRatioGrid);

        std::vector<std::pair<double, double>> pts;
        for (double r : kDefaultRatioGrid) {
            std::vector<double> sorted = val;
            std::sort(sorted.rbegin(), sorted.rend());
            const double delta = sorted[static_cast<std::size_t>(std::floor(r * static_cast<double>(m)))];
            Bits pred(m);
            for (std::size_t i = 0; i < m; ++i) pred[i] = test[i] > delta;
            pred = naive_adjust(pred, truth);
            double tp = 0, fp = 0, pos = 0, neg = 0;
            for (std::size_t i = 0; i < m; ++i) {
                pos += truth[i];
                neg += !truth[i];
                tp += pred[i] && truth[i];
                fp += pred[i] && !truth[i];
            }
            pts.emplace_back(neg ? fp / neg : 0.0, pos ? tp / pos : 0.0);
        }
        CHECK(std::abs(roc.auc - naive_auc(pts)) < 1e-10);
        CHECK(roc.auc >= 0.0);
        CHECK(roc.auc <= 1.0);
        for (std::size_t k = 1; k < roc.points.size(); ++k) {
            CHECK(roc.points[k].fpr >= roc.points[k - 1].fpr);
            CHECK(roc.points[k].tpr >= roc.points[k - 1].tpr);
        }

        std::vector<double> et(m), ev(m);
        for (std::size_t i = 0; i < m; ++i) {
            et[i] = std::exp(2.0 * test[i]) + 3.0;
            ev[i] = std::exp(2.0 * val[i]) + 3.0;
        }
        CHECK(roc_auc(et, truth, ev, kDefaultRatioGrid).auc == roc.auc);
    }
}

TEST_CASE("contrast statistic") {
    // uniform maps give equal means and a unit ratio
    const std::size_t n = 25;
    std::vector<double> uniform(n * n, 1.0 / n);
    Bits truth(n, 0);
    truth[4] = truth[17] = 1;
    bool shrunk = false;
    auto c = contrast_statistic(uniform, n, truth, 10, &shrunk);
    CHECK_FALSE(shrunk);
    CHECK(*c.abnormal_mean == doctest::Approx(1.0 / n));
    CHECK(*c.normal_mean == doctest::Approx(1.0 / n));
    CHECK(*c.ratio == doctest::Approx(1.0));

    auto all_normal = contrast_statistic(std::vector<double>(n, 0.1), Bits(n, 0));
    CHECK_FALSE(all_normal.abnormal_mean.has_value());
    CHECK_FALSE(all_normal.ratio.has_value());
    CHECK(*all_normal.normal_mean == doctest::Approx(0.1));

    CHECK(effective_adjacent_width(100, 10) == 10);
    CHECK(effective_adjacent_width(21, 10) == 10);
    CHECK(effective_adjacent_width(20, 10) == 9);
    CHECK(effective_adjacent_width(8, 10) == 3);
    contrast_statistic(std::vector<double>(64, 1.0 / 8), 8, Bits(8, 0), 10, &shrunk);
    CHECK(shrunk);
}

TEST_CASE("contrast on a hand-built map") {
    const std::vector<double> s{0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.25, 0.25, 0.4, 0.3, 0.2, 0.1, 0.7, 0.1, 0.1, 0.1};
    // width 1: row 0 -> 0.2, row 1 -> 0.25, row 2 -> 0.2, row 3 -> 0.1
    auto c = contrast_statistic(s, 4, Bits{1, 0, 0, 1}, 1);
    CHECK(*c.abnormal_mean == doctest::Approx(0.15).epsilon(1e-14));
    CHECK(*c.normal_mean == doctest::Approx(0.225).epsilon(1e-14));
    CHECK(*c.ratio == doctest::Approx(0.15 / 0.225).epsilon(1e-14));
}

TEST_CASE("report json round trip, table and roc csv") {
    EvalReport rep;
    rep.r = 0.01;
    rep.delta = 0.25;
    rep.adjusted = {0.5, 1.0, 2.0 / 3.0, false, false};
    rep.unadjusted = {0.5, 0.25, 1.0 / 3.0, false, false};
    rep.roc.points = {{0.01, 0.3, 0.0, 0.5}, {0.1, 0.1, 0.25, 1.0}};
    rep.roc.auc = 0.90625;
    rep.contrast.abnormal_mean = 0.02;
    rep.contrast.normal_mean = 0.01;
    rep.contrast.ratio = 2.0;
    auto j = rep.to_json();
    auto back = EvalReport::from_json(nlohmann::json::parse(j.dump()));
    CHECK(back.to_json() == j);
    CHECK(back.adjusted.f1 == rep.adjusted.f1);
    CHECK(back.roc.points.size() == 2);
    CHECK(*back.contrast.ratio == 2.0);
    CHECK(rep.roc_csv() == "r,delta,fpr,tpr\n0.01,0.29999999999999999,0,0.5\n0.10000000000000001,0.10000000000000001,0.25,1\n");
    CHECK(rep.table("synthetic").find("66.67") != std::string::npos);

    EvalReport perfect;
    perfect.adjusted = {1.0, 1.0, 1.0, false, false};
    CHECK(perfect.table("x").find("100.00") != std::string::npos);
}
