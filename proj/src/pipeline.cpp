#include "atx/pipeline.hpp"

#include <set>

#include "atx/errors.hpp"

namespace atx {

RunConfig RunConfig::desk_default() {
    RunConfig c;
    c.model.window = 100;
    c.model.d_model = 64;
    c.model.heads = 4;
    c.model.layers = 3;
    c.train.lambda = 3.0;
    return c;
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    train.discrepancy.validate(model.layers);
    threshold.validate();
    if (r_grid.empty()) throw ConfigError("r_grid must not be empty");
    for (double r : r_grid) {
        if (!(r > 0.0 && r < 1.0)) throw ConfigError("r_grid entries must lie in (0, 1), got " + std::to_string(r));
    }
    if (adjacent_width == 0) throw ConfigError("adjacent_width must be positive");
}

ScoreOptions RunConfig::score_options() const {
    ScoreOptions o;
    o.criterion = criterion;
    o.discrepancy = train.discrepancy;
    o.adjacent_width = adjacent_width;
    return o;
}

void to_json(nlohmann::json& j, const RunConfig& c) {
    j = {{"paths",
          {{"train", c.paths.train.string()},
           {"val", c.paths.val.string()},
           {"test", c.paths.test.string()},
           {"labels", c.paths.labels.string()},
           {"output", c.paths.output.string()}}},
         {"model", c.model},
         {"train", c.train},
         {"threshold", c.threshold},
         {"criterion", std::string(to_string(c.criterion))},
         {"r_grid", c.r_grid},
         {"adjacent_width", c.adjacent_width},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    static const std::set<std::string> known{"paths", "model", "train", "threshold", "criterion",
                                             "r_grid", "adjacent_width", "seed"};
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ConfigError("run config: unknown key '" + key + "'");
    }
    c = RunConfig::desk_default();
    try {
        if (j.contains("paths")) {
            const auto& p = j.at("paths");
            auto path = [&](const char* key, std::filesystem::path& out) {
                if (p.contains(key)) out = p.at(key).get<std::string>();
            };
            path("train", c.paths.train);
            path("val", c.paths.val);
            path("test", c.paths.test);
            path("labels", c.paths.labels);
            path("output", c.paths.output);
        }
        if (j.contains("model")) {
            nlohmann::json merged = c.model;
            merged.update(j.at("model"));
            c.model = merged.get<ModelConfig>();
        }
        if (j.contains("train")) {
            nlohmann::json merged = c.train;
            merged.update(j.at("train"));
            c.train = merged.get<TrainConfig>();
        }
        if (j.contains("threshold")) c.threshold = j.at("threshold").get<ThresholdSpec>();
        if (j.contains("criterion")) c.criterion = parse_criterion(j.at("criterion").get<std::string>());
        if (j.contains("r_grid")) c.r_grid = j.at("r_grid").get<std::vector<double>>();
        c.adjacent_width = j.value("adjacent_width", c.adjacent_width);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
}

RunConfig load_run_config(const std::filesystem::path& path) {
    const auto text = read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return j.get<RunConfig>();
}

Checkpoint TrainedModel::checkpoint(const RunConfig& run) const {
    Checkpoint ck{config, params.clone(), nlohmann::json::object()};
    ck.meta["norm"] = norm;
    ck.meta["train"] = run.train;
    ck.meta["seed"] = run.seed;
    ck.meta["best_epoch"] = log.best_epoch;
    ck.meta["epochs"] = log.epochs.size();
    return ck;
}

TrainedModel TrainedModel::from_checkpoint(const Checkpoint& ck) {
    TrainedModel m;
    m.config = ck.config;
    m.params = ck.params.clone();
    if (!ck.meta.contains("norm")) throw CompatibilityError("checkpoint has no normalization statistics");
    m.norm = ck.meta.at("norm").get<NormStats>();
    if (m.norm.mean.size() != m.config.input_dim) {
        throw CompatibilityError("checkpoint normalization covers " + std::to_string(m.norm.mean.size()) +
                                 " channels but input_dim is " + std::to_string(m.config.input_dim));
    }
    return m;
}

TrainedModel train_model(const TimeSeries& train, const TimeSeries& val, const RunConfig& run,
                         const EpochCallback& on_epoch) {
    run.validate();
    if (train.dims != run.model.input_dim || val.dims != run.model.input_dim) {
        throw CompatibilityError("input_dim: config says " + std::to_string(run.model.input_dim) +
                                 ", data has " + std::to_string(train.dims) + " (train) and " +
                                 std::to_string(val.dims) + " (val) channels");
    }
    TrainedModel m;
    m.config = run.model;
    m.norm = compute_norm_stats(train);
    TrainConfig tc = run.train;
    tc.seed = run.seed;
    auto fr = fit(normalize(train, m.norm), normalize(val, m.norm), run.model, tc, on_epoch);
    m.params = std::move(fr.params);
    m.log = std::move(fr.log);
    return m;
}

ScoreSeries score_with(const TrainedModel& model, const TimeSeries& series, const ScoreOptions& opts) {
    if (series.dims != model.config.input_dim) {
        throw CompatibilityError("input_dim: model expects " + std::to_string(model.config.input_dim) +
                                 " channels, series has " + std::to_string(series.dims));
    }
    return score_series(normalize(series, model.norm), model.params, model.config, opts);
}

EvalReport evaluate_scores(std::span<const double> test_scores, std::span<const std::uint8_t> truth,
                           std::span<const double> val_scores, const ThresholdSpec& threshold,
                           std::span<const double> r_grid, std::span<const double> adjacent_weight) {
    if (test_scores.size() != truth.size()) {
        throw ConfigError("test scores have " + std::to_string(test_scores.size()) + " rows but labels have " +
                          std::to_string(truth.size()));
    }
    EvalReport rep;
    rep.r = threshold.mode == ThresholdSpec::Mode::ratio ? threshold.r : 0.0;
    rep.delta = select_threshold(val_scores, threshold);
    const auto pred = predict(test_scores, rep.delta);
    rep.unadjusted = prf(pred, truth);
    rep.adjusted = prf(point_adjust(pred, truth), truth);
    rep.roc = roc_auc(test_scores, truth, val_scores, r_grid);
    if (!adjacent_weight.empty()) rep.contrast = contrast_statistic(adjacent_weight, truth);
    return rep;
}

ExperimentResult run_experiment(const SynthData& data, const RunConfig& run) {
    if (!data.test.labels) throw ConfigError("run_experiment: test split has no labels");
    ExperimentResult out;
    out.model = train_model(data.train, data.val, run);
    const auto opts = run.score_options();
    out.val_scores = score_with(out.model, data.val, opts);
    out.test_scores = score_with(out.model, data.test, opts);
    out.report = evaluate_scores(out.test_scores.score, *data.test.labels, out.val_scores.score, run.threshold,
                                 run.r_grid, out.test_scores.adjacent_weight);
    return out;
}

}  // namespace atx
