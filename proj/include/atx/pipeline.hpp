#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "atx/data.hpp"
#include "atx/detection.hpp"
#include "atx/evaluation.hpp"
#include "atx/model.hpp"
#include "atx/training.hpp"

namespace atx {

struct RunPaths {
    std::filesystem::path train;   // data CSVs
    std::filesystem::path val;
    std::filesystem::path test;
    std::filesystem::path labels;  // test labels
    std::filesystem::path output = "out";
};

struct RunConfig {
    RunPaths paths;
    ModelConfig model;
    TrainConfig train;
    ThresholdSpec threshold;
    Criterion criterion = Criterion::multiplication;
    std::vector<double> r_grid = kDefaultRatioGrid;
    std::size_t adjacent_width = 10;
    std::uint64_t seed = 0;

    /// The desk configuration: window 100, d_model 64, 4 heads, 3 layers, lambda 3.
    static RunConfig desk_default();
    /// Model, training and detection settings only; paths are not checked here.
    void validate() const;
    ScoreOptions score_options() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing keys keep their desk defaults. Unknown top-level keys are rejected.
void from_json(const nlohmann::json& j, RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

/// Normalization statistics travel inside the checkpoint meta.
struct TrainedModel {
    ModelConfig config;
    ModelParams params;
    NormStats norm;
    TrainLog log;

    Checkpoint checkpoint(const RunConfig& run) const;
    static TrainedModel from_checkpoint(const Checkpoint& ck);
};

/// Normalizes with train statistics, then fits with `run.seed` as the training seed.
TrainedModel train_model(const TimeSeries& train, const TimeSeries& val, const RunConfig& run,
                         const EpochCallback& on_epoch = {});

/// Normalizes with the model's stored statistics and scores every point.
ScoreSeries score_with(const TrainedModel& model, const TimeSeries& series, const ScoreOptions& opts);

/// Threshold from the validation scores, point-adjusted P/R/F1, ROC over r_grid, and
/// the contrast of adjacent weights when they are available.
EvalReport evaluate_scores(std::span<const double> test_scores, std::span<const std::uint8_t> truth,
                           std::span<const double> val_scores, const ThresholdSpec& threshold,
                           std::span<const double> r_grid, std::span<const double> adjacent_weight = {});

struct ExperimentResult {
    TrainedModel model;
    ScoreSeries val_scores;
    ScoreSeries test_scores;
    EvalReport report;
};

/// train, score val and test, evaluate. Test labels must be present.
ExperimentResult run_experiment(const SynthData& data, const RunConfig& run);

}  // namespace atx
