#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace atx {

/// Operating points of the ROC sweep.
inline const std::vector<double> kDefaultRatioGrid{0.005, 0.01, 0.015, 0.02, 0.10, 0.20, 0.30};

/// For every maximal run of 1s in truth that contains a predicted 1, the whole run
/// becomes predicted. Predictions outside truth runs are left alone.
std::vector<std::uint8_t> point_adjust(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool precision_undefined = false;  // nothing predicted
    bool recall_undefined = false;     // no positives in truth
};

Prf prf(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);

struct RocPoint {
    double r = 0.0;
    double delta = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocResult {
    std::vector<RocPoint> points;  // one per r, in grid order
    double auc = 0.0;
};

/// For each r: threshold from the validation scores, predict the test scores,
/// point-adjust, then TPR/FPR. AUC is the trapezoid over the fpr-sorted points
/// anchored at (0,0) and (1,1).
RocResult roc_auc(std::span<const double> test_scores, std::span<const std::uint8_t> truth,
                  std::span<const double> val_scores, std::span<const double> r_grid);

/// Trapezoidal area of (fpr, tpr) points after sorting and adding the (0,0)/(1,1) anchors.
double trapezoid_auc(std::vector<std::pair<double, double>> points);

struct Contrast {
    std::optional<double> abnormal_mean;
    std::optional<double> normal_mean;
    std::optional<double> ratio;
};

/// Means of per-point adjacent association weights over abnormal and normal points.
Contrast contrast_statistic(std::span<const double> adjacent_weight, std::span<const std::uint8_t> truth);

/// Adjacency width actually usable for an N-point window: width, or (N-1)/2 when
/// the window is narrower than 2*width+1.
std::size_t effective_adjacent_width(std::size_t window, std::size_t width);

/// Contrast from one head- and layer-averaged N×N series map (row-major) whose
/// rows align with truth. Sets *shrunk when the width had to be reduced.
Contrast contrast_statistic(std::span<const double> series_map, std::size_t n, std::span<const std::uint8_t> truth,
                            std::size_t width, bool* shrunk = nullptr);

struct EvalReport {
    double r = 0.0;
    double delta = 0.0;
    Prf adjusted;
    Prf unadjusted;
    RocResult roc;
    Contrast contrast;

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
    /// Plain-text P / R / F1 table.
    std::string table(const std::string& name) const;
    /// r,delta,fpr,tpr rows.
    std::string roc_csv() const;
};

}  // namespace atx
