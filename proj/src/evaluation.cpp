#include "atx/evaluation.hpp"

#include <algorithm>
#include <cstdio>

#include "atx/detection.hpp"
#include "atx/errors.hpp"

namespace atx {

std::vector<std::uint8_t> point_adjust(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
    if (pred.size() != truth.size()) {
        throw ConfigError("point_adjust: prediction length " + std::to_string(pred.size()) + " vs truth length " +
                          std::to_string(truth.size()));
    }
    std::vector<std::uint8_t> out(pred.begin(), pred.end());
    std::size_t i = 0;
    while (i < truth.size()) {
        if (!truth[i]) {
            ++i;
            continue;
        }
        std::size_t end = i;
        bool hit = false;
        while (end < truth.size() && truth[end]) hit |= pred[end++] != 0;
        if (hit) std::fill(out.begin() + static_cast<std::ptrdiff_t>(i), out.begin() + static_cast<std::ptrdiff_t>(end), 1);
        i = end;
    }
    return out;
}

Prf prf(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
    if (pred.size() != truth.size()) throw ConfigError("prf: length mismatch");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] && truth[i]) ++tp;
        else if (pred[i]) ++fp;
        else if (truth[i]) ++fn;
    }
    Prf out;
    out.precision_undefined = tp + fp == 0;
    out.recall_undefined = tp + fn == 0;
    out.precision = out.precision_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    out.recall = out.recall_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double s = out.precision + out.recall;
    out.f1 = s > 0.0 ? 2.0 * out.precision * out.recall / s : 0.0;
    return out;
}

double trapezoid_auc(std::vector<std::pair<double, double>> points) {
    points.emplace_back(0.0, 0.0);
    points.emplace_back(1.0, 1.0);
    std::sort(points.begin(), points.end());
    double area = 0.0;
    for (std::size_t k = 1; k < points.size(); ++k) {
        area += (points[k].first - points[k - 1].first) * 0.5 * (points[k].second + points[k - 1].second);
    }
    return area;
}

RocResult roc_auc(std::span<const double> test_scores, std::span<const std::uint8_t> truth,
                  std::span<const double> val_scores, std::span<const double> r_grid) {
    if (test_scores.size() != truth.size()) throw ConfigError("roc_auc: scores and labels differ in length");
    if (r_grid.empty()) throw ConfigError("roc_auc: empty r grid");
    std::size_t positives = 0;
    for (auto t : truth) positives += t ? 1 : 0;
    const std::size_t negatives = truth.size() - positives;

    RocResult out;
    std::vector<std::pair<double, double>> pts;
    for (double r : r_grid) {
        const double delta = select_threshold(val_scores, ThresholdSpec::ratio(r));
        const auto adjusted = point_adjust(predict(test_scores, delta), truth);
        std::size_t tp = 0, fp = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            if (adjusted[i] && truth[i]) ++tp;
            else if (adjusted[i]) ++fp;
        }
        RocPoint p{r, delta, negatives ? static_cast<double>(fp) / static_cast<double>(negatives) : 0.0,
                   positives ? static_cast<double>(tp) / static_cast<double>(positives) : 0.0};
        out.points.push_back(p);
        pts.emplace_back(p.fpr, p.tpr);
    }
    out.auc = trapezoid_auc(std::move(pts));
    return out;
}

Contrast contrast_statistic(std::span<const double> adjacent_weight, std::span<const std::uint8_t> truth) {
    if (adjacent_weight.size() != truth.size()) throw ConfigError("contrast_statistic: length mismatch");
    double ab = 0.0, no = 0.0;
    std::size_t nab = 0, nno = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i]) {
            ab += adjacent_weight[i];
            ++nab;
        } else {
            no += adjacent_weight[i];
            ++nno;
        }
    }
    Contrast c;
    if (nab) c.abnormal_mean = ab / static_cast<double>(nab);
    if (nno) c.normal_mean = no / static_cast<double>(nno);
    if (c.abnormal_mean && c.normal_mean && *c.normal_mean > 0.0) c.ratio = *c.abnormal_mean / *c.normal_mean;
    return c;
}

std::size_t effective_adjacent_width(std::size_t window, std::size_t width) {
    return window < 2 * width + 1 ? (window > 0 ? (window - 1) / 2 : 0) : width;
}

Contrast contrast_statistic(std::span<const double> series_map, std::size_t n, std::span<const std::uint8_t> truth,
                            std::size_t width, bool* shrunk) {
    const std::size_t w = effective_adjacent_width(n, width);
    if (shrunk) *shrunk = w != width;
    return contrast_statistic(adjacent_weights(series_map, n, w), truth);
}

namespace {

nlohmann::json prf_json(const Prf& p) {
    return {{"precision", p.precision},
            {"recall", p.recall},
            {"f1", p.f1},
            {"precision_undefined", p.precision_undefined},
            {"recall_undefined", p.recall_undefined}};
}

Prf prf_from(const nlohmann::json& j) {
    Prf p;
    p.precision = j.at("precision").get<double>();
    p.recall = j.at("recall").get<double>();
    p.f1 = j.at("f1").get<double>();
    p.precision_undefined = j.value("precision_undefined", false);
    p.recall_undefined = j.value("recall_undefined", false);
    return p;
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
    nlohmann::json roc_points = nlohmann::json::array();
    for (const auto& p : roc.points) roc_points.push_back({{"r", p.r}, {"delta", p.delta}, {"fpr", p.fpr}, {"tpr", p.tpr}});
    return {{"r", r},
            {"delta", delta},
            {"adjusted", prf_json(adjusted)},
            {"unadjusted", prf_json(unadjusted)},
            {"roc_points", std::move(roc_points)},
            {"auc", roc.auc},
            {"contrast",
             {{"abnormal_mean", opt_json(contrast.abnormal_mean)},
              {"normal_mean", opt_json(contrast.normal_mean)},
              {"ratio", opt_json(contrast.ratio)}}}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
    EvalReport e;
    e.r = j.at("r").get<double>();
    e.delta = j.at("delta").get<double>();
    e.adjusted = prf_from(j.at("adjusted"));
    e.unadjusted = prf_from(j.at("unadjusted"));
    for (const auto& p : j.at("roc_points")) {
        e.roc.points.push_back({p.at("r").get<double>(), p.at("delta").get<double>(), p.at("fpr").get<double>(),
                                p.at("tpr").get<double>()});
    }
    e.roc.auc = j.at("auc").get<double>();
    const auto& c = j.at("contrast");
    e.contrast = {opt_from(c, "abnormal_mean"), opt_from(c, "normal_mean"), opt_from(c, "ratio")};
    return e;
}

std::string EvalReport::table(const std::string& name) const {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof buf, "%-16s %8s %8s %8s %8s\n", "Dataset", "P", "R", "F1", "AUC");
    out += buf;
    std::snprintf(buf, sizeof buf, "%-16s %8.2f %8.2f %8.2f %8.2f\n", name.c_str(), 100.0 * adjusted.precision,
                  100.0 * adjusted.recall, 100.0 * adjusted.f1, 100.0 * roc.auc);
    out += buf;
    std::snprintf(buf, sizeof buf, "threshold r=%.4g delta=%.6g (point-adjusted, percent)\n", r, delta);
    out += buf;
    if (contrast.ratio) {
        std::snprintf(buf, sizeof buf, "contrast abnormal/normal = %.4f\n", *contrast.ratio);
        out += buf;
    }
    return out;
}

std::string EvalReport::roc_csv() const {
    std::string out = "r,delta,fpr,tpr\n";
    char buf[160];
    for (const auto& p : roc.points) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", p.r, p.delta, p.fpr, p.tpr);
        out += buf;
    }
    return out;
}

}  // namespace atx
