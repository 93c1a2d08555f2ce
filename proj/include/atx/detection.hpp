#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "atx/data.hpp"
#include "atx/discrepancy.hpp"
#include "atx/model.hpp"

namespace atx {

enum class Criterion { multiplication, addition, assdis_only, recon_only };

Criterion parse_criterion(std::string_view name);
std::string_view to_string(Criterion c);

/// Per-point criterion parts for one window.
struct WindowScores {
    std::vector<double> score;
    std::vector<double> recon;      // channel-mean squared error
    std::vector<double> assdis;     // raw association discrepancy
    std::vector<double> assdis_weight;  // softmax over the window of -assdis
};

/// Criterion from explicit per-point discrepancy and reconstruction error.
WindowScores combine_criterion(std::span<const double> assdis, std::span<const double> recon, Criterion criterion);

WindowScores window_score(const ForwardResult& fr, const Tensor& x, Criterion criterion,
                          const DiscrepancyConfig& cfg = {});

/// Mean over the selected layers and all heads of each point's series
/// association to neighbours at distance 1..width (fewer at window edges).
std::vector<double> adjacent_weights(const ForwardResult& fr, std::size_t width,
                                     const std::vector<std::size_t>& layers = {});
/// Same for a single already-averaged N×N map given row-major.
std::vector<double> adjacent_weights(std::span<const double> series_map, std::size_t n, std::size_t width);

struct ScoreSeries {
    std::vector<double> score;
    std::vector<double> recon;
    std::vector<double> assdis;
    std::vector<double> assdis_weight;
    std::vector<std::size_t> window_id;
    // Association summaries used by the analysis tooling.
    std::vector<double> adjacent_weight;
    std::vector<double> sigma_mean;  // mean learned scale over heads and layers
    std::size_t adjacent_width = 0;  // after shrinking to fit the window

    std::size_t size() const { return score.size(); }
    /// Columns: index, score, recon_component, assdis_component (the softmax weight).
    std::string to_csv() const;
};

struct ScoreOptions {
    Criterion criterion = Criterion::multiplication;
    DiscrepancyConfig discrepancy;
    std::size_t adjacent_width = 10;
};

/// Scores every point exactly once: non-overlapped windows, plus, when a tail of
/// t < N points remains, the last N points as one window of which only the last t
/// scores are kept.
ScoreSeries score_series(const TimeSeries& series, const ModelParams& params, const ModelConfig& model_cfg,
                         const ScoreOptions& opts = {});

/// Reads the index/score/recon/assdis CSV written by ScoreSeries::to_csv.
ScoreSeries parse_scores_csv(std::string_view text, std::string_view source = "<memory>");

struct ThresholdSpec {
    enum class Mode { ratio, fixed } mode = Mode::ratio;
    double r = 0.01;
    double delta = 0.1;

    static ThresholdSpec ratio(double r) { return {Mode::ratio, r, 0.0}; }
    static ThresholdSpec fixed(double delta) { return {Mode::fixed, 0.0, delta}; }
    void validate() const;
};

void to_json(nlohmann::json& j, const ThresholdSpec& t);
void from_json(const nlohmann::json& j, ThresholdSpec& t);

/// Ratio mode: sort descending and take the score at rank floor(r*M) (0-based), so that
/// exactly floor(r*M) validation points lie strictly above it when there are no ties.
/// Tied scores at the cut all stay unflagged, so ties can only lower the count.
double select_threshold(std::span<const double> val_scores, const ThresholdSpec& spec);

/// label = score > delta.
std::vector<std::uint8_t> predict(std::span<const double> scores, double delta);

}  // namespace atx
