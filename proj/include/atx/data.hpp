#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "atx/tensor.hpp"

namespace atx {

/// M observations of d channels, row-major, with optional 0/1 labels per observation.
struct TimeSeries {
    std::size_t length = 0;
    std::size_t dims = 0;
    std::vector<double> values;
    std::optional<std::vector<std::uint8_t>> labels;

    TimeSeries() = default;
    TimeSeries(std::size_t length, std::size_t dims, std::vector<double> values,
               std::optional<std::vector<std::uint8_t>> labels = std::nullopt);

    double at(std::size_t t, std::size_t c) const { return values[t * dims + c]; }
    double& at(std::size_t t, std::size_t c) { return values[t * dims + c]; }
    void validate() const;
};

enum class AnomalyKind { point_global, point_contextual, pattern_shapelet, pattern_seasonal, pattern_trend };

AnomalyKind parse_anomaly_kind(std::string_view name);
std::string_view to_string(AnomalyKind kind);

struct AnomalyEvent {
    AnomalyKind kind = AnomalyKind::point_global;
    std::size_t start = 0;   // index within the test split
    std::size_t length = 1;  // point kinds always 1
    double magnitude = 0.0;  // 0 selects the kind's default
    std::size_t channel = 0;

    double effective_magnitude() const;
};

struct BaseSignal {
    std::vector<double> amplitudes{1.0, 0.4};
    std::vector<double> periods{40.0, 13.0};
    std::vector<double> phases{0.0, 1.0};
    double noise_std = 0.05;
};

struct SynthSpec {
    std::size_t train_length = 2000;
    std::size_t val_length = 1000;
    std::size_t test_length = 2000;
    std::size_t dims = 1;
    BaseSignal base;
    std::vector<AnomalyEvent> events;
    std::uint64_t seed = 0;

    /// Throws ConfigError naming the offending event(s).
    void validate() const;
    /// Desk-scale default: all five kinds, anomaly ratio about 1.6% of the test split.
    static SynthSpec desk_default(std::uint64_t seed);
};

void to_json(nlohmann::json& j, const AnomalyEvent& e);
void from_json(const nlohmann::json& j, AnomalyEvent& e);
void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

struct SynthData {
    TimeSeries train, val, test;

    double anomaly_ratio() const;
};

/// Deterministic in spec. Train and val are anomaly-free; test carries the events
/// with exact labels. One contiguous base signal is split train | val | test.
SynthData generate(const SynthSpec& spec);

/// Headerless numeric CSV, one row per observation. The optional label file holds a
/// single 0/1 column of the same length.
TimeSeries load_csv(const std::filesystem::path& path,
                    const std::optional<std::filesystem::path>& label_path = std::nullopt);
TimeSeries parse_csv(std::string_view text, std::string_view source = "<memory>");
std::vector<std::uint8_t> parse_labels(std::string_view text, std::string_view source = "<memory>");

/// 17 significant digits, comma separated, LF endings.
std::string format_csv(const TimeSeries& series);
std::string format_labels(const std::vector<std::uint8_t>& labels);
void save_csv(const std::filesystem::path& path, const TimeSeries& series);
void save_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

struct NormStats {
    static constexpr double std_floor = 1e-8;
    std::vector<double> mean;
    std::vector<double> std;  // population std, already floored
};

void to_json(nlohmann::json& j, const NormStats& s);
void from_json(const nlohmann::json& j, NormStats& s);

NormStats compute_norm_stats(const TimeSeries& train);
TimeSeries normalize(const TimeSeries& series, const NormStats& stats);

enum class WindowMode { train_drop_tail, infer_overlap_tail };

/// A window of N consecutive points starting at `start`; only positions
/// [keep_from, N) contribute scores (nonzero only for the overlapping tail window).
struct WindowSlice {
    std::size_t start = 0;
    std::size_t keep_from = 0;
};

std::vector<WindowSlice> window_slices(std::size_t series_length, std::size_t window, WindowMode mode);

/// N×d tensor view of one window.
Tensor window_tensor(const TimeSeries& series, std::size_t start, std::size_t window);

/// Writes content to path via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace atx
