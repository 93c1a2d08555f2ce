#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "atx/pipeline.hpp"

namespace atx::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kInternal = 1, kConfig = 2, kIo = 3, kNumeric = 4, kCompat = 5 };

int exit_code_for(const std::exception& e);

struct SynthArgs {
    std::optional<fs::path> spec;  // desk default when absent
    fs::path out_dir = "data";
    std::optional<std::uint64_t> seed;
};

struct TrainArgs {
    std::optional<fs::path> config;
    std::optional<fs::path> train, val, output;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs, batch_size, patience;
    std::optional<double> lr, lambda;
    std::optional<std::string> strategy;
};

struct ScoreArgs {
    fs::path checkpoint;
    fs::path data;
    std::optional<fs::path> config;
    std::optional<std::string> criterion;
    fs::path output = "scores.csv";
};

struct EvalArgs {
    fs::path test_scores, val_scores, labels;
    std::optional<fs::path> config;
    std::optional<double> r, delta;
    std::optional<fs::path> assoc;  // defaults to the sidecar of test_scores when it exists
    fs::path out_dir = "eval";
    std::string name = "synthetic";
};

struct PlotArgs {
    fs::path scores;
    std::optional<fs::path> labels, data, report;
    std::optional<double> delta;
    fs::path out_dir = "plot";
};

// Each command validates and computes everything before it writes.
void cmd_synth(const SynthArgs& a, std::ostream& log);
RunConfig resolve_train_config(const TrainArgs& a);
TrainedModel cmd_train(const TrainArgs& a, std::ostream& log);
void cmd_score(const ScoreArgs& a, std::ostream& log);
EvalReport cmd_eval(const EvalArgs& a, std::ostream& log);
void cmd_plot(const PlotArgs& a, std::ostream& log);

// scores.csv -> scores.assoc.csv (index, window_id, adjacent_weight, sigma_mean)
fs::path assoc_path_for(const fs::path& scores);

std::string render_svg(const std::vector<double>& series, const std::vector<double>& score,
                       const std::vector<std::uint8_t>& labels, std::optional<double> delta);

int main(int argc, char** argv);

}  // namespace atx::cli
