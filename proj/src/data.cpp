#include "atx/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "atx/rng.hpp"

namespace atx {

TimeSeries::TimeSeries(std::size_t length_, std::size_t dims_, std::vector<double> values_,
                       std::optional<std::vector<std::uint8_t>> labels_)
    : length(length_), dims(dims_), values(std::move(values_)), labels(std::move(labels_)) {
    validate();
}

void TimeSeries::validate() const {
    if (values.size() != length * dims) {
        throw ConfigError("time series holds " + std::to_string(values.size()) + " values, expected " +
                          std::to_string(length) + "x" + std::to_string(dims));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw ConfigError("time series value at row " + std::to_string(i / std::max<std::size_t>(dims, 1) + 1) +
                              " is not finite");
        }
    }
    if (labels && labels->size() != length) {
        throw ConfigError("label length " + std::to_string(labels->size()) + " does not match series length " +
                          std::to_string(length));
    }
}

AnomalyKind parse_anomaly_kind(std::string_view name) {
    if (name == "point_global") return AnomalyKind::point_global;
    if (name == "point_contextual") return AnomalyKind::point_contextual;
    if (name == "pattern_shapelet") return AnomalyKind::pattern_shapelet;
    if (name == "pattern_seasonal") return AnomalyKind::pattern_seasonal;
    if (name == "pattern_trend") return AnomalyKind::pattern_trend;
    throw ConfigError("unknown anomaly kind '" + std::string(name) + "'");
}

std::string_view to_string(AnomalyKind kind) {
    switch (kind) {
        case AnomalyKind::point_global: return "point_global";
        case AnomalyKind::point_contextual: return "point_contextual";
        case AnomalyKind::pattern_shapelet: return "pattern_shapelet";
        case AnomalyKind::pattern_seasonal: return "pattern_seasonal";
        case AnomalyKind::pattern_trend: return "pattern_trend";
    }
    return "?";
}

double AnomalyEvent::effective_magnitude() const {
    if (magnitude != 0.0) return magnitude;
    switch (kind) {
        case AnomalyKind::point_global: return 5.0;
        case AnomalyKind::point_contextual: return 3.0;
        case AnomalyKind::pattern_shapelet: return 1.0;
        case AnomalyKind::pattern_seasonal: return 2.0;
        case AnomalyKind::pattern_trend: return 3.0;
    }
    return 0.0;
}

namespace {

std::string describe(const AnomalyEvent& e, std::size_t index) {
    return "event " + std::to_string(index) + " (" + std::string(to_string(e.kind)) + " at " +
           std::to_string(e.start) + ", length " + std::to_string(e.length) + ")";
}

bool is_point_kind(AnomalyKind k) { return k == AnomalyKind::point_global || k == AnomalyKind::point_contextual; }

}  // namespace

void SynthSpec::validate() const {
    if (train_length == 0 || val_length == 0 || test_length == 0) throw ConfigError("synth: split lengths must be positive");
    if (dims == 0) throw ConfigError("synth: dims must be positive");
    const auto& b = base;
    if (b.amplitudes.empty() || b.amplitudes.size() != b.periods.size() || b.amplitudes.size() != b.phases.size()) {
        throw ConfigError("synth: base amplitudes, periods and phases must be non-empty and equally long");
    }
    for (double p : b.periods)
        if (!(p > 0.0)) throw ConfigError("synth: base periods must be positive");
    if (b.noise_std < 0.0) throw ConfigError("synth: noise_std must be nonnegative");

    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (e.length == 0) throw ConfigError("synth: " + describe(e, i) + " has zero length");
        if (is_point_kind(e.kind) && e.length != 1) throw ConfigError("synth: " + describe(e, i) + " must have length 1");
        if (e.start + e.length > test_length) {
            throw ConfigError("synth: " + describe(e, i) + " exceeds test length " + std::to_string(test_length));
        }
        if (e.channel >= dims) throw ConfigError("synth: " + describe(e, i) + " targets a missing channel");
        const double mag = e.effective_magnitude();
        if (is_point_kind(e.kind) && std::abs(mag) < 3.0) {
            throw ConfigError("synth: " + describe(e, i) + " needs |magnitude| >= 3");
        }
        if (e.kind == AnomalyKind::pattern_seasonal && !(mag > 0.0)) {
            throw ConfigError("synth: " + describe(e, i) + " needs a positive frequency factor");
        }
        for (std::size_t k = 0; k < i; ++k) {
            const auto& o = events[k];
            if (e.start < o.start + o.length && o.start < e.start + e.length) {
                throw ConfigError("synth: " + describe(e, i) + " overlaps " + describe(o, k));
            }
        }
    }
}

SynthSpec SynthSpec::desk_default(std::uint64_t seed) {
    SynthSpec s;
    s.seed = seed;
    using K = AnomalyKind;
    s.events = {
        {K::point_global, 163, 1, 5.0, 0},      {K::point_contextual, 437, 1, 3.0, 0},
        {K::pattern_shapelet, 712, 8, 1.0, 0},  {K::pattern_seasonal, 968, 12, 2.0, 0},
        {K::point_global, 1271, 1, -4.0, 0},    {K::point_contextual, 1593, 1, -3.0, 0},
        {K::pattern_trend, 1822, 10, 3.0, 0},
    };
    return s;
}

void to_json(nlohmann::json& j, const AnomalyEvent& e) {
    j = {{"kind", std::string(to_string(e.kind))},
         {"start", e.start},
         {"length", e.length},
         {"magnitude", e.effective_magnitude()},
         {"channel", e.channel}};
}

void from_json(const nlohmann::json& j, AnomalyEvent& e) {
    e.kind = parse_anomaly_kind(j.at("kind").get<std::string>());
    e.start = j.at("start").get<std::size_t>();
    e.length = j.value("length", std::size_t{1});
    e.magnitude = j.value("magnitude", 0.0);
    e.channel = j.value("channel", std::size_t{0});
}

void to_json(nlohmann::json& j, const SynthSpec& s) {
    j = {{"train_length", s.train_length},
         {"val_length", s.val_length},
         {"test_length", s.test_length},
         {"dims", s.dims},
         {"base",
          {{"amplitudes", s.base.amplitudes},
           {"periods", s.base.periods},
           {"phases", s.base.phases},
           {"noise_std", s.base.noise_std}}},
         {"events", s.events},
         {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SynthSpec& s) {
    s.train_length = j.value("train_length", s.train_length);
    s.val_length = j.value("val_length", s.val_length);
    s.test_length = j.value("test_length", s.test_length);
    s.dims = j.value("dims", s.dims);
    if (j.contains("base")) {
        const auto& b = j.at("base");
        s.base.amplitudes = b.value("amplitudes", s.base.amplitudes);
        s.base.periods = b.value("periods", s.base.periods);
        s.base.phases = b.value("phases", s.base.phases);
        s.base.noise_std = b.value("noise_std", s.base.noise_std);
    }
    if (j.contains("events")) s.events = j.at("events").get<std::vector<AnomalyEvent>>();
    s.seed = j.value("seed", s.seed);
}

double SynthData::anomaly_ratio() const {
    if (!test.labels || test.length == 0) return 0.0;
    double n = 0;
    for (auto l : *test.labels) n += l;
    return n / static_cast<double>(test.length);
}

namespace {

constexpr double kChannelPhaseShift = 0.7;
constexpr std::size_t kContextWindow = 20;

double base_value(const BaseSignal& b, double t, std::size_t channel, double freq_factor) {
    double v = 0.0;
    for (std::size_t k = 0; k < b.amplitudes.size(); ++k) {
        const double phase = b.phases[k] + kChannelPhaseShift * static_cast<double>(channel);
        v += b.amplitudes[k] * std::sin(2.0 * std::numbers::pi * freq_factor * t / b.periods[k] + phase);
    }
    return v;
}

}  // namespace

SynthData generate(const SynthSpec& spec) {
    spec.validate();
    const std::size_t total = spec.train_length + spec.val_length + spec.test_length;
    const std::size_t d = spec.dims;
    Rng rng(spec.seed);
    std::vector<double> noise(total * d);
    for (auto& v : noise) v = rng.normal(0.0, spec.base.noise_std);

    std::vector<double> clean(total * d);
    for (std::size_t t = 0; t < total; ++t)
        for (std::size_t c = 0; c < d; ++c)
            clean[t * d + c] = base_value(spec.base, static_cast<double>(t), c, 1.0) + noise[t * d + c];

    auto split = [&](std::size_t begin, std::size_t len) {
        return std::vector<double>(clean.begin() + static_cast<std::ptrdiff_t>(begin * d),
                                   clean.begin() + static_cast<std::ptrdiff_t>((begin + len) * d));
    };
    SynthData out;
    out.train = TimeSeries(spec.train_length, d, split(0, spec.train_length));
    out.val = TimeSeries(spec.val_length, d, split(spec.train_length, spec.val_length));

    const std::size_t offset = spec.train_length + spec.val_length;
    const std::size_t m = spec.test_length;
    std::vector<double> test = split(offset, m);
    std::vector<std::uint8_t> labels(m, 0);

    // Statistics of the clean test split, per channel.
    std::vector<double> gmean(d, 0.0), gstd(d, 0.0), gmin(d, INFINITY), gmax(d, -INFINITY);
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t t = 0; t < m; ++t) {
            const double v = test[t * d + c];
            gmean[c] += v;
            gmin[c] = std::min(gmin[c], v);
            gmax[c] = std::max(gmax[c], v);
        }
        gmean[c] /= static_cast<double>(m);
        for (std::size_t t = 0; t < m; ++t) gstd[c] += (test[t * d + c] - gmean[c]) * (test[t * d + c] - gmean[c]);
        gstd[c] = std::sqrt(gstd[c] / static_cast<double>(m));
    }

    for (const auto& e : spec.events) {
        const std::size_t c = e.channel;
        const double mag = e.effective_magnitude();
        auto cell = [&](std::size_t t) -> double& { return test[t * d + c]; };
        switch (e.kind) {
            case AnomalyKind::point_global:
                cell(e.start) = gmean[c] + mag * gstd[c];
                break;
            case AnomalyKind::point_contextual: {
                const std::size_t lo = e.start >= kContextWindow / 2 ? e.start - kContextWindow / 2 : 0;
                const std::size_t hi = std::min(m, e.start + kContextWindow / 2);
                double lm = 0.0, ls = 0.0;
                for (std::size_t t = lo; t < hi; ++t) lm += cell(t);
                lm /= static_cast<double>(hi - lo);
                for (std::size_t t = lo; t < hi; ++t) ls += (cell(t) - lm) * (cell(t) - lm);
                ls = std::sqrt(ls / static_cast<double>(hi - lo));
                double target = lm + mag * ls;
                if (target > gmax[c] || target < gmin[c]) target = lm - mag * ls;
                cell(e.start) = std::clamp(target, gmin[c], gmax[c]);
                break;
            }
            case AnomalyKind::pattern_shapelet: {
                const double amp = spec.base.amplitudes[0] * mag;
                for (std::size_t t = e.start; t < e.start + e.length; ++t) {
                    const double at = static_cast<double>(offset + t);
                    const double phase = spec.base.phases[0] + kChannelPhaseShift * static_cast<double>(c);
                    const double s = std::sin(2.0 * std::numbers::pi * at / spec.base.periods[0] + phase);
                    cell(t) = (s >= 0.0 ? amp : -amp) + noise[(offset + t) * d + c];
                }
                break;
            }
            case AnomalyKind::pattern_seasonal:
                for (std::size_t t = e.start; t < e.start + e.length; ++t) {
                    cell(t) = base_value(spec.base, static_cast<double>(offset + t), c, mag) + noise[(offset + t) * d + c];
                }
                break;
            case AnomalyKind::pattern_trend:
                for (std::size_t t = e.start; t < e.start + e.length; ++t) {
                    cell(t) += mag * gstd[c] * static_cast<double>(t - e.start + 1) / static_cast<double>(e.length);
                }
                break;
        }
        for (std::size_t t = e.start; t < e.start + e.length; ++t) labels[t] = 1;
    }

    out.test = TimeSeries(m, d, std::move(test), std::move(labels));
    out.train.labels = std::vector<std::uint8_t>(spec.train_length, 0);
    out.val.labels = std::vector<std::uint8_t>(spec.val_length, 0);
    return out;
}

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        pos = nl + 1;
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

double parse_cell(std::string_view cell, std::string_view source, std::size_t line_no) {
    while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
    while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ConfigError(std::string(source) + ":" + std::to_string(line_no) + ": non-numeric cell '" +
                          std::string(cell) + "'");
    }
    return v;
}

}  // namespace

TimeSeries parse_csv(std::string_view text, std::string_view source) {
    const auto lines = split_lines(text);
    std::size_t dims = 0;
    std::vector<double> values;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::size_t count = 0;
        std::size_t pos = 0;
        const auto line = lines[i];
        while (true) {
            auto comma = line.find(',', pos);
            auto cell = line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
            values.push_back(parse_cell(cell, source, i + 1));
            ++count;
            if (comma == std::string_view::npos) break;
            pos = comma + 1;
        }
        if (i == 0) {
            dims = count;
        } else if (count != dims) {
            throw ConfigError(std::string(source) + ":" + std::to_string(i + 1) + ": ragged row with " +
                              std::to_string(count) + " columns, expected " + std::to_string(dims));
        }
    }
    if (lines.empty()) throw ConfigError(std::string(source) + ": empty data file");
    return TimeSeries(lines.size(), dims, std::move(values));
}

std::vector<std::uint8_t> parse_labels(std::string_view text, std::string_view source) {
    std::vector<std::uint8_t> labels;
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const double v = parse_cell(lines[i], source, i + 1);
        if (v != 0.0 && v != 1.0) {
            throw ConfigError(std::string(source) + ":" + std::to_string(i + 1) + ": label must be 0 or 1");
        }
        labels.push_back(static_cast<std::uint8_t>(v));
    }
    return labels;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw IoError("cannot write " + tmp.string());
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!os) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

TimeSeries load_csv(const std::filesystem::path& path, const std::optional<std::filesystem::path>& label_path) {
    auto series = parse_csv(read_file(path), path.string());
    if (label_path) {
        auto labels = parse_labels(read_file(*label_path), label_path->string());
        if (labels.size() != series.length) {
            throw ConfigError("label file " + label_path->string() + " has " + std::to_string(labels.size()) +
                              " rows but data file " + path.string() + " has " + std::to_string(series.length));
        }
        series.labels = std::move(labels);
    }
    return series;
}

std::string format_csv(const TimeSeries& series) {
    std::string out;
    out.reserve(series.values.size() * 24);
    char buf[40];
    for (std::size_t t = 0; t < series.length; ++t) {
        for (std::size_t c = 0; c < series.dims; ++c) {
            if (c) out.push_back(',');
            const int n = std::snprintf(buf, sizeof buf, "%.17g", series.at(t, c));
            out.append(buf, static_cast<std::size_t>(n));
        }
        out.push_back('\n');
    }
    return out;
}

std::string format_labels(const std::vector<std::uint8_t>& labels) {
    std::string out;
    out.reserve(labels.size() * 2);
    for (auto l : labels) {
        out.push_back(l ? '1' : '0');
        out.push_back('\n');
    }
    return out;
}

void save_csv(const std::filesystem::path& path, const TimeSeries& series) { write_file_atomic(path, format_csv(series)); }

void save_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
    write_file_atomic(path, format_labels(labels));
}

void to_json(nlohmann::json& j, const NormStats& s) { j = {{"mean", s.mean}, {"std", s.std}}; }

void from_json(const nlohmann::json& j, NormStats& s) {
    s.mean = j.at("mean").get<std::vector<double>>();
    s.std = j.at("std").get<std::vector<double>>();
    if (s.mean.size() != s.std.size()) throw ConfigError("norm stats: mean/std length mismatch");
}

NormStats compute_norm_stats(const TimeSeries& train) {
    if (train.length == 0) throw ConfigError("cannot compute normalization stats of an empty series");
    NormStats s;
    s.mean.assign(train.dims, 0.0);
    s.std.assign(train.dims, 0.0);
    const double n = static_cast<double>(train.length);
    for (std::size_t c = 0; c < train.dims; ++c) {
        for (std::size_t t = 0; t < train.length; ++t) s.mean[c] += train.at(t, c);
        s.mean[c] /= n;
        for (std::size_t t = 0; t < train.length; ++t) {
            const double dv = train.at(t, c) - s.mean[c];
            s.std[c] += dv * dv;
        }
        s.std[c] = std::max(std::sqrt(s.std[c] / n), NormStats::std_floor);
    }
    return s;
}

TimeSeries normalize(const TimeSeries& series, const NormStats& stats) {
    if (stats.mean.size() != series.dims) {
        throw CompatibilityError("normalization stats cover " + std::to_string(stats.mean.size()) +
                                 " channels, series has " + std::to_string(series.dims));
    }
    TimeSeries out = series;
    for (std::size_t t = 0; t < series.length; ++t)
        for (std::size_t c = 0; c < series.dims; ++c)
            out.at(t, c) = (series.at(t, c) - stats.mean[c]) / std::max(stats.std[c], NormStats::std_floor);
    return out;
}

std::vector<WindowSlice> window_slices(std::size_t series_length, std::size_t window, WindowMode mode) {
    if (window == 0) throw ConfigError("window size must be positive");
    if (series_length < window) {
        throw ConfigError("series of length " + std::to_string(series_length) + " is shorter than one window (" +
                          std::to_string(window) + ")");
    }
    std::vector<WindowSlice> out;
    const std::size_t full = series_length / window;
    for (std::size_t k = 0; k < full; ++k) out.push_back({k * window, 0});
    const std::size_t tail = series_length - full * window;
    if (mode == WindowMode::infer_overlap_tail && tail > 0) out.push_back({series_length - window, window - tail});
    return out;
}

Tensor window_tensor(const TimeSeries& series, std::size_t start, std::size_t window) {
    if (start + window > series.length) throw ShapeError("window exceeds series");
    const auto first = series.values.begin() + static_cast<std::ptrdiff_t>(start * series.dims);
    return Tensor::from({window, series.dims},
                        std::vector<double>(first, first + static_cast<std::ptrdiff_t>(window * series.dims)));
}

}  // namespace atx
