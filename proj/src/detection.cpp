#include "atx/detection.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>

#include "atx/evaluation.hpp"
#include "atx/ops.hpp"

namespace atx {

Criterion parse_criterion(std::string_view name) {
    if (name == "multiplication") return Criterion::multiplication;
    if (name == "addition") return Criterion::addition;
    if (name == "assdis_only") return Criterion::assdis_only;
    if (name == "recon_only") return Criterion::recon_only;
    throw ConfigError("unknown criterion '" + std::string(name) + "'");
}

std::string_view to_string(Criterion c) {
    switch (c) {
        case Criterion::multiplication: return "multiplication";
        case Criterion::addition: return "addition";
        case Criterion::assdis_only: return "assdis_only";
        case Criterion::recon_only: return "recon_only";
    }
    return "?";
}

WindowScores combine_criterion(std::span<const double> assdis, std::span<const double> recon, Criterion criterion) {
    if (assdis.size() != recon.size()) throw ShapeError("combine_criterion: length mismatch");
    const std::size_t n = assdis.size();
    WindowScores w;
    w.assdis.assign(assdis.begin(), assdis.end());
    w.recon.assign(recon.begin(), recon.end());
    w.assdis_weight.resize(n);
    w.score.resize(n);
    if (n == 0) return w;

    const double mn = *std::min_element(assdis.begin(), assdis.end());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += (w.assdis_weight[i] = std::exp(mn - assdis[i]));
    for (auto& v : w.assdis_weight) v /= total;

    for (std::size_t i = 0; i < n; ++i) {
        switch (criterion) {
            case Criterion::multiplication: w.score[i] = w.assdis_weight[i] * recon[i]; break;
            case Criterion::addition: w.score[i] = w.assdis_weight[i] + recon[i]; break;
            case Criterion::assdis_only: w.score[i] = w.assdis_weight[i]; break;
            case Criterion::recon_only: w.score[i] = recon[i]; break;
        }
    }
    return w;
}

WindowScores window_score(const ForwardResult& fr, const Tensor& x, Criterion criterion, const DiscrepancyConfig& cfg) {
    NoGradGuard no_grad;
    if (x.shape() != fr.x_hat.shape()) throw ShapeError("window_score: reconstruction shape differs from input");
    const std::size_t n = x.rows(), d = x.cols();
    auto xv = x.data(), xh = fr.x_hat.data();
    std::vector<double> recon(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d; ++c) {
            const double e = xv[i * d + c] - xh[i * d + c];
            recon[i] += e * e;
        }
        recon[i] /= static_cast<double>(d);
    }
    auto dis = assoc_discrepancy(fr.layers, cfg);
    return combine_criterion(dis.data(), recon, criterion);
}

std::vector<double> adjacent_weights(std::span<const double> series_map, std::size_t n, std::size_t width) {
    if (series_map.size() != n * n) throw ShapeError("adjacent_weights: map is not N×N");
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        std::size_t count = 0;
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t dist = i > j ? i - j : j - i;
            if (dist >= 1 && dist <= width) {
                s += series_map[i * n + j];
                ++count;
            }
        }
        out[i] = count ? s / static_cast<double>(count) : 0.0;
    }
    return out;
}

std::vector<double> adjacent_weights(const ForwardResult& fr, std::size_t width, const std::vector<std::size_t>& layers) {
    NoGradGuard no_grad;
    std::vector<std::size_t> selected = layers;
    if (selected.empty())
        for (std::size_t l = 0; l < fr.layers.size(); ++l) selected.push_back(l);
    std::vector<Tensor> maps;
    for (auto l : selected) {
        if (l >= fr.layers.size()) throw ConfigError("adjacent_weights: layer out of range");
        maps.insert(maps.end(), fr.layers[l].series.begin(), fr.layers[l].series.end());
    }
    auto avg = ops::average(maps);
    return adjacent_weights(avg.data(), avg.rows(), width);
}

std::string ScoreSeries::to_csv() const {
    std::string out = "index,score,recon_component,assdis_component\n";
    char buf[128];
    for (std::size_t i = 0; i < score.size(); ++i) {
        const int n = std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", i, score[i], recon[i], assdis_weight[i]);
        out.append(buf, static_cast<std::size_t>(n));
    }
    return out;
}

ScoreSeries score_series(const TimeSeries& series, const ModelParams& params, const ModelConfig& model_cfg,
                         const ScoreOptions& opts) {
    NoGradGuard no_grad;
    if (series.dims != model_cfg.input_dim) {
        throw CompatibilityError("input_dim: model expects " + std::to_string(model_cfg.input_dim) +
                                 " channels, series has " + std::to_string(series.dims));
    }
    opts.discrepancy.validate(model_cfg.layers);
    const std::size_t n = model_cfg.window;
    const auto slices = window_slices(series.length, n, WindowMode::infer_overlap_tail);
    const std::size_t width = effective_adjacent_width(n, opts.adjacent_width);

    ScoreSeries out;
    out.adjacent_width = width;
    for (std::size_t w = 0; w < slices.size(); ++w) {
        const auto& s = slices[w];
        auto x = window_tensor(series, s.start, n);
        auto fr = forward(x, params, model_cfg);
        auto ws = window_score(fr, x, opts.criterion, opts.discrepancy);
        auto adj = adjacent_weights(fr, width, opts.discrepancy.layers);

        std::vector<double> sigma_mean(n, 0.0);
        std::size_t cols = 0;
        for (const auto& layer : fr.layers) {
            const std::size_t h = layer.sigma.cols();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t m = 0; m < h; ++m) sigma_mean[i] += layer.sigma.at(i, m);
            cols += h;
        }
        for (auto& v : sigma_mean) v /= static_cast<double>(cols);

        for (std::size_t i = s.keep_from; i < n; ++i) {
            out.score.push_back(ws.score[i]);
            out.recon.push_back(ws.recon[i]);
            out.assdis.push_back(ws.assdis[i]);
            out.assdis_weight.push_back(ws.assdis_weight[i]);
            out.window_id.push_back(w);
            out.adjacent_weight.push_back(adj[i]);
            out.sigma_mean.push_back(sigma_mean[i]);
        }
    }
    return out;
}

ScoreSeries parse_scores_csv(std::string_view text, std::string_view source) {
    ScoreSeries out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (line_no == 1 && line.starts_with("index")) continue;
        double cells[4];
        std::size_t k = 0, p = 0;
        while (k < 4) {
            auto comma = line.find(',', p);
            auto cell = line.substr(p, comma == std::string_view::npos ? std::string_view::npos : comma - p);
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), cells[k]);
            if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
                throw ConfigError(std::string(source) + ":" + std::to_string(line_no) + ": bad score cell '" +
                                  std::string(cell) + "'");
            }
            ++k;
            if (comma == std::string_view::npos) break;
            p = comma + 1;
        }
        if (k != 4) throw ConfigError(std::string(source) + ":" + std::to_string(line_no) + ": expected 4 columns");
        if (static_cast<std::size_t>(cells[0]) != out.score.size()) {
            throw ConfigError(std::string(source) + ":" + std::to_string(line_no) + ": index out of sequence");
        }
        out.score.push_back(cells[1]);
        out.recon.push_back(cells[2]);
        out.assdis_weight.push_back(cells[3]);
    }
    return out;
}

void ThresholdSpec::validate() const {
    if (mode == Mode::ratio && !(r > 0.0 && r < 1.0)) {
        throw ConfigError("threshold ratio r must be in (0, 1), got " + std::to_string(r));
    }
    if (mode == Mode::fixed && !std::isfinite(delta)) throw ConfigError("threshold delta must be finite");
}

void to_json(nlohmann::json& j, const ThresholdSpec& t) {
    if (t.mode == ThresholdSpec::Mode::ratio) {
        j = {{"mode", "ratio"}, {"r", t.r}};
    } else {
        j = {{"mode", "fixed"}, {"delta", t.delta}};
    }
}

void from_json(const nlohmann::json& j, ThresholdSpec& t) {
    const auto mode = j.value("mode", std::string("ratio"));
    if (mode == "ratio") {
        t = ThresholdSpec::ratio(j.value("r", 0.01));
    } else if (mode == "fixed") {
        t = ThresholdSpec::fixed(j.value("delta", 0.1));
    } else {
        throw ConfigError("unknown threshold mode '" + mode + "'");
    }
}

double select_threshold(std::span<const double> val_scores, const ThresholdSpec& spec) {
    spec.validate();
    if (spec.mode == ThresholdSpec::Mode::fixed) return spec.delta;
    if (val_scores.empty()) throw ContractError("select_threshold: no validation scores");
    std::vector<double> sorted(val_scores.begin(), val_scores.end());
    const auto rank = static_cast<std::size_t>(std::floor(spec.r * static_cast<double>(sorted.size())));
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank), sorted.end(), std::greater<>());
    return sorted[rank];
}

std::vector<std::uint8_t> predict(std::span<const double> scores, double delta) {
    std::vector<std::uint8_t> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > delta ? 1 : 0;
    return out;
}

}  // namespace atx
