#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "atx/errors.hpp"

namespace atx::cli {

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kConfig;
    if (dynamic_cast<const IoError*>(&e)) return kIo;
    if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
    if (dynamic_cast<const CompatibilityError*>(&e)) return kCompat;
    if (dynamic_cast<const nlohmann::json::exception*>(&e)) return kConfig;
    if (dynamic_cast<const fs::filesystem_error*>(&e)) return kIo;
    return kInternal;
}

namespace {

void require_file(const fs::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string(what) + " path is not set");
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) throw ConfigError(std::string(what) + " file not found: " + p.string());
}

nlohmann::json read_json(const fs::path& p, const char* what) {
    require_file(p, what);
    try {
        return nlohmann::json::parse(read_file(p));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

void make_dir(const fs::path& dir) {
    if (dir.empty()) return;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

ScoreSeries read_scores(const fs::path& p, const char* what) {
    require_file(p, what);
    return parse_scores_csv(read_file(p), p.string());
}

std::vector<std::uint8_t> read_labels(const fs::path& p) {
    require_file(p, "labels");
    const auto text = read_file(p);
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) return {};
    return parse_labels(text, p.string());
}

std::vector<double> read_assoc(const fs::path& p) {
    const auto text = read_file(p);
    std::vector<double> out;
    std::istringstream is(text);
    std::string line;
    std::getline(is, line);
    if (line.rfind("index,window_id,adjacent_weight", 0) != 0) throw ConfigError(p.string() + ": not an association file");
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        for (int k = 0; k < 3 && std::getline(row, cell, ','); ++k) {
            if (k < 2) continue;
            try {
                out.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ConfigError(p.string() + ":" + std::to_string(line_no) + ": bad cell '" + cell + "'");
            }
        }
    }
    return out;
}

std::string assoc_csv(const ScoreSeries& s) {
    std::string out = "index,window_id,adjacent_weight,sigma_mean\n";
    char buf[128];
    for (std::size_t i = 0; i < s.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g\n", i, s.window_id[i], s.adjacent_weight[i], s.sigma_mean[i]);
        out += buf;
    }
    return out;
}

// every model field except dropout has to agree
void check_model_compat(const ModelConfig& run, const ModelConfig& ck) {
    const nlohmann::json a = run, b = ck;
    for (const auto& [key, value] : b.items()) {
        if (key == "dropout") continue;
        if (!a.contains(key) || a.at(key) != value) {
            throw CompatibilityError("model." + key + ": config has " + (a.contains(key) ? a.at(key).dump() : "nothing") +
                                     ", checkpoint has " + value.dump());
        }
    }
}

}  // namespace

fs::path assoc_path_for(const fs::path& scores) {
    auto p = scores;
    p.replace_extension();
    return fs::path(p.string() + ".assoc.csv");
}

void cmd_synth(const SynthArgs& a, std::ostream& log) {
    SynthSpec spec = SynthSpec::desk_default(a.seed.value_or(0));
    if (a.spec) {
        try {
            spec = read_json(*a.spec, "spec").get<SynthSpec>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(a.spec->string() + ": " + e.what());
        }
        if (a.seed) spec.seed = *a.seed;
    }
    const auto data = generate(spec);

    std::size_t anomalous = 0;
    for (auto l : *data.test.labels) anomalous += l;
    nlohmann::json manifest = {
        {"spec", spec},
        {"anomaly_ratio", data.anomaly_ratio()},
        {"anomalous_points", anomalous},
        {"lengths", {{"train", data.train.length}, {"val", data.val.length}, {"test", data.test.length}}},
        {"files", {{"train", "train.csv"}, {"val", "val.csv"}, {"test", "test.csv"}, {"labels", "test_labels.csv"}}}};

    make_dir(a.out_dir);
    save_csv(a.out_dir / "train.csv", data.train);
    save_csv(a.out_dir / "val.csv", data.val);
    save_csv(a.out_dir / "test.csv", data.test);
    save_labels(a.out_dir / "test_labels.csv", *data.test.labels);
    write_file_atomic(a.out_dir / "manifest.json", dump(manifest));
    char buf[160];
    std::snprintf(buf, sizeof buf, "synth: %zu/%zu/%zu points, %zu anomalous (%.2f%%) -> %s\n", data.train.length,
                  data.val.length, data.test.length, anomalous, 100.0 * data.anomaly_ratio(), a.out_dir.c_str());
    log << buf;
}

RunConfig resolve_train_config(const TrainArgs& a) {
    RunConfig run = RunConfig::desk_default();
    if (a.config) run = read_json(*a.config, "config").get<RunConfig>();
    if (a.train) run.paths.train = *a.train;
    if (a.val) run.paths.val = *a.val;
    if (a.output) run.paths.output = *a.output;
    if (a.seed) run.seed = *a.seed;
    if (a.epochs) run.train.max_epochs = *a.epochs;
    if (a.batch_size) run.train.batch_size = *a.batch_size;
    if (a.patience) run.train.patience = *a.patience;
    if (a.lr) run.train.learning_rate = *a.lr;
    if (a.lambda) run.train.lambda = *a.lambda;
    if (a.strategy) run.train.strategy = parse_strategy(*a.strategy);
    run.validate();
    return run;
}

TrainedModel cmd_train(const TrainArgs& a, std::ostream& log) {
    const auto run = resolve_train_config(a);
    require_file(run.paths.train, "train data");
    require_file(run.paths.val, "validation data");
    const auto train = load_csv(run.paths.train);
    const auto val = load_csv(run.paths.val);

    char buf[200];
    auto model = train_model(train, val, run, [&](const EpochLog& e, const ModelParams&) {
        std::snprintf(buf, sizeof buf, "epoch %zu  recon %.6g  assdis %.6g  val %.6g\n", e.epoch, e.recon_loss, e.assdis,
                      e.val_loss);
        log << buf << std::flush;
    });

    make_dir(run.paths.output);
    save_checkpoint(run.paths.output / "checkpoint.json", model.checkpoint(run));
    write_file_atomic(run.paths.output / "trainlog.csv", model.log.to_csv());
    write_file_atomic(run.paths.output / "config.json", dump(nlohmann::json(run)));
    const auto& last = model.log.epochs.back();
    std::snprintf(buf, sizeof buf, "final: recon %.6g  assdis %.6g  val %.6g  (best epoch %zu of %zu%s) -> %s\n",
                  last.recon_loss, last.assdis, last.val_loss, model.log.best_epoch, model.log.epochs.size(),
                  model.log.early_stopped ? ", stopped early" : "", run.paths.output.c_str());
    log << buf;
    return model;
}

void cmd_score(const ScoreArgs& a, std::ostream& log) {
    require_file(a.checkpoint, "checkpoint");
    require_file(a.data, "data");
    std::optional<RunConfig> run;
    if (a.config) run = read_json(*a.config, "config").get<RunConfig>();

    const auto ck = load_checkpoint(a.checkpoint);
    const auto model = TrainedModel::from_checkpoint(ck);
    ScoreOptions opts;
    if (run) {
        run->validate();
        check_model_compat(run->model, model.config);
        opts = run->score_options();
    } else if (ck.meta.contains("train")) {
        opts.discrepancy = ck.meta.at("train").get<TrainConfig>().discrepancy;
    }
    if (a.criterion) opts.criterion = parse_criterion(*a.criterion);

    const auto series = load_csv(a.data);
    const auto scores = score_with(model, series, opts);

    if (a.output.has_parent_path()) make_dir(a.output.parent_path());
    write_file_atomic(a.output, scores.to_csv());
    write_file_atomic(assoc_path_for(a.output), assoc_csv(scores));
    log << "score: " << scores.size() << " points, criterion " << to_string(opts.criterion) << " -> "
        << a.output.string() << "\n";
}

EvalReport cmd_eval(const EvalArgs& a, std::ostream& log) {
    RunConfig run = RunConfig::desk_default();
    if (a.config) run = read_json(*a.config, "config").get<RunConfig>();
    if (a.r && a.delta) throw ConfigError("give either --r or --delta, not both");
    if (a.r) run.threshold = ThresholdSpec::ratio(*a.r);
    if (a.delta) run.threshold = ThresholdSpec::fixed(*a.delta);
    run.validate();

    const auto test = read_scores(a.test_scores, "test scores");
    const auto val = read_scores(a.val_scores, "validation scores");
    const auto truth = read_labels(a.labels);
    if (truth.size() != test.size()) {
        throw ConfigError("labels have " + std::to_string(truth.size()) + " rows but test scores have " +
                          std::to_string(test.size()));
    }
    std::vector<double> adjacent;
    const auto assoc = a.assoc ? *a.assoc : assoc_path_for(a.test_scores);
    if (a.assoc) require_file(assoc, "association");
    if (fs::is_regular_file(assoc)) {
        adjacent = read_assoc(assoc);
        if (adjacent.size() != test.size()) {
            throw ConfigError(assoc.string() + " has " + std::to_string(adjacent.size()) + " rows but test scores have " +
                              std::to_string(test.size()));
        }
    }
    const auto rep = evaluate_scores(test.score, truth, val.score, run.threshold, run.r_grid, adjacent);

    make_dir(a.out_dir);
    write_file_atomic(a.out_dir / "report.json", dump(rep.to_json()));
    write_file_atomic(a.out_dir / "table.txt", rep.table(a.name));
    write_file_atomic(a.out_dir / "roc.csv", rep.roc_csv());
    log << rep.table(a.name);
    return rep;
}

std::string render_svg(const std::vector<double>& series, const std::vector<double>& score,
                       const std::vector<std::uint8_t>& labels, std::optional<double> delta) {
    constexpr double W = 960, left = 60, right = 20, panel_h = 180, gap = 40, top = 30;
    const bool with_series = !series.empty();
    const int panels = with_series ? 2 : 1;
    const double H = top + panels * panel_h + (panels - 1) * gap + 30;
    const std::size_t n = score.size();
    const double plot_w = W - left - right;
    auto x_of = [&](std::size_t i) { return left + (n > 1 ? plot_w * static_cast<double>(i) / static_cast<double>(n - 1) : 0.0); };

    std::string out;
    char buf[320];
    std::snprintf(buf, sizeof buf,
                  "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" viewBox=\"0 0 %g %g\" "
                  "font-family=\"sans-serif\" font-size=\"11\">\n"
                  "<rect x=\"0\" y=\"0\" width=\"%g\" height=\"%g\" fill=\"white\"/>\n",
                  W, H, W, H, W, H);
    out += buf;

    auto panel = [&](double y0, const std::vector<double>& v, const char* title, const char* colour, bool threshold) {
        double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
        if (threshold && delta) {
            lo = std::min(lo, *delta);
            hi = std::max(hi, *delta);
        }
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double pad = 0.05 * (hi - lo);
        lo -= pad;
        hi += pad;
        auto y_of = [&](double y) { return y0 + panel_h * (hi - y) / (hi - lo); };

        for (std::size_t i = 0; i < labels.size();) {
            if (!labels[i]) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < labels.size() && labels[j]) ++j;
            const double x0 = x_of(i) - 1.0, x1 = x_of(j - 1) + 1.0;
            std::snprintf(buf, sizeof buf,
                          "<rect class=\"anomaly\" x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" "
                          "fill=\"#f4a6a6\" fill-opacity=\"0.6\"/>\n",
                          x0, y0, x1 - x0, panel_h);
            out += buf;
            i = j;
        }
        std::snprintf(buf, sizeof buf,
                      "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"#888\"/>\n"
                      "<text x=\"%g\" y=\"%g\">%s</text>\n"
                      "<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.4g</text>\n"
                      "<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.4g</text>\n",
                      left, y0, plot_w, panel_h, left, y0 - 6, title, left - 4, y0 + 10, hi, left - 4, y0 + panel_h, lo);
        out += buf;
        out += "<polyline fill=\"none\" stroke=\"";
        out += colour;
        out += "\" stroke-width=\"1\" points=\"";
        for (std::size_t i = 0; i < v.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", x_of(i), y_of(v[i]));
            out += buf;
        }
        out += "\"/>\n";
        if (threshold && delta) {
            std::snprintf(buf, sizeof buf,
                          "<line id=\"threshold\" data-delta=\"%.17g\" x1=\"%g\" y1=\"%.4f\" x2=\"%g\" y2=\"%.4f\" "
                          "stroke=\"#c00\" stroke-dasharray=\"4 3\"/>\n",
                          *delta, left, y_of(*delta), left + plot_w, y_of(*delta));
            out += buf;
        }
    };

    if (n) {
        double y0 = top;
        if (with_series) {
            panel(y0, series, "series", "#1f4e8c", false);
            y0 += panel_h + gap;
        }
        panel(y0, score, "anomaly score", "#333", true);
    }
    out += "</svg>\n";
    return out;
}

void cmd_plot(const PlotArgs& a, std::ostream& log) {
    const auto scores = read_scores(a.scores, "scores");
    std::vector<std::uint8_t> labels;
    if (a.labels) {
        labels = read_labels(*a.labels);
        if (!labels.empty() && labels.size() != scores.size()) {
            throw ConfigError("labels have " + std::to_string(labels.size()) + " rows but scores have " +
                              std::to_string(scores.size()));
        }
    }
    std::vector<double> series;
    if (a.data) {
        require_file(*a.data, "data");
        const auto ts = load_csv(*a.data);
        if (ts.length != scores.size()) {
            throw ConfigError("data has " + std::to_string(ts.length) + " rows but scores have " +
                              std::to_string(scores.size()));
        }
        for (std::size_t t = 0; t < ts.length; ++t) series.push_back(ts.at(t, 0));
    }
    std::optional<double> delta = a.delta;
    if (!delta && a.report) {
        const auto rep = read_json(*a.report, "report");
        if (!rep.contains("delta")) throw ConfigError(a.report->string() + " has no delta");
        delta = rep.at("delta").get<double>();
    }

    std::string csv = "index,series,score,label,delta\n";
    char buf[160];
    for (std::size_t i = 0; i < scores.size(); ++i) {
        std::string s = series.empty() ? "" : (std::snprintf(buf, sizeof buf, "%.17g", series[i]), std::string(buf));
        std::string l = labels.empty() ? "" : std::to_string(labels[i]);
        std::string d = delta ? (std::snprintf(buf, sizeof buf, "%.17g", *delta), std::string(buf)) : "";
        std::snprintf(buf, sizeof buf, "%.17g", scores.score[i]);
        csv += std::to_string(i) + "," + s + "," + buf + "," + l + "," + d + "\n";
    }
    const auto svg = render_svg(series, scores.score, labels, delta);

    make_dir(a.out_dir);
    write_file_atomic(a.out_dir / "plot.svg", svg);
    write_file_atomic(a.out_dir / "plot.csv", csv);
    log << "plot: " << scores.size() << " points -> " << (a.out_dir / "plot.svg").string() << "\n";
}

int main(int argc, char** argv) {
    CLI::App app{"Anomaly detection with association-discrepancy transformers"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "atx 0.1.0");

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "generate a synthetic train/val/test split with labelled anomalies");
    s->add_option("spec", synth.spec, "synth spec JSON (desk default when omitted)");
    s->add_option("-o,--output", synth.out_dir, "output directory")->capture_default_str();
    s->add_option("--seed", synth.seed, "override the spec seed");

    TrainArgs train;
    auto* t = app.add_subcommand("train", "train a model; writes checkpoint.json and trainlog.csv");
    t->add_option("-c,--config", train.config, "run config JSON");
    t->add_option("--train", train.train, "training data CSV");
    t->add_option("--val", train.val, "validation data CSV");
    t->add_option("-o,--output", train.output, "output directory");
    t->add_option("--seed", train.seed);
    t->add_option("--epochs", train.epochs);
    t->add_option("--batch-size", train.batch_size);
    t->add_option("--patience", train.patience);
    t->add_option("--lr", train.lr);
    t->add_option("--lambda", train.lambda);
    t->add_option("--strategy", train.strategy, "minimax, maximize_only or recon_only");

    ScoreArgs score;
    auto* sc = app.add_subcommand("score", "score every point of a series");
    sc->add_option("--checkpoint", score.checkpoint)->required();
    sc->add_option("--data", score.data)->required();
    sc->add_option("-c,--config", score.config, "run config JSON, checked against the checkpoint");
    sc->add_option("--criterion", score.criterion, "multiplication, addition, assdis_only or recon_only");
    sc->add_option("-o,--output", score.output)->capture_default_str();

    EvalArgs eval;
    auto* e = app.add_subcommand("eval", "threshold, point-adjusted P/R/F1 and ROC");
    e->add_option("--test-scores", eval.test_scores)->required();
    e->add_option("--val-scores", eval.val_scores)->required();
    e->add_option("--labels", eval.labels)->required();
    e->add_option("-c,--config", eval.config);
    e->add_option("--r", eval.r, "ratio threshold");
    e->add_option("--delta", eval.delta, "fixed threshold");
    e->add_option("--assoc", eval.assoc, "association sidecar written by score");
    e->add_option("--name", eval.name)->capture_default_str();
    e->add_option("-o,--output", eval.out_dir)->capture_default_str();

    PlotArgs plot;
    auto* p = app.add_subcommand("plot", "SVG chart and tidy CSV of scores over time");
    p->add_option("--scores", plot.scores)->required();
    p->add_option("--labels", plot.labels);
    p->add_option("--data", plot.data, "series to draw above the scores (first channel)");
    p->add_option("--report", plot.report, "report.json providing the threshold");
    p->add_option("--delta", plot.delta);
    p->add_option("-o,--output", plot.out_dir)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*s) cmd_synth(synth, std::cout);
        if (*t) cmd_train(train, std::cout);
        if (*sc) cmd_score(score, std::cout);
        if (*e) cmd_eval(eval, std::cout);
        if (*p) cmd_plot(plot, std::cout);
    } catch (const std::exception& ex) {
        std::cerr << "atx: " << ex.what() << "\n";
        return exit_code_for(ex);
    }
    return kOk;
}

}  // namespace atx::cli
