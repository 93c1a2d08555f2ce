#include "atx/training.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "atx/ops.hpp"

namespace atx {

TrainStrategy parse_strategy(std::string_view name) {
    if (name == "minimax") return TrainStrategy::minimax;
    if (name == "maximize_only") return TrainStrategy::maximize_only;
    if (name == "recon_only") return TrainStrategy::recon_only;
    throw ConfigError("unknown training strategy '" + std::string(name) + "'");
}

std::string_view to_string(TrainStrategy s) {
    switch (s) {
        case TrainStrategy::minimax: return "minimax";
        case TrainStrategy::maximize_only: return "maximize_only";
        case TrainStrategy::recon_only: return "recon_only";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("train config: lambda must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be positive");
    if (batch_size == 0 || max_epochs == 0 || patience == 0) {
        throw ConfigError("train config: batch_size, max_epochs and patience must be positive");
    }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"lambda", c.lambda},
         {"learning_rate", c.learning_rate},
         {"batch_size", c.batch_size},
         {"max_epochs", c.max_epochs},
         {"patience", c.patience},
         {"seed", c.seed},
         {"strategy", std::string(to_string(c.strategy))},
         {"discrepancy", c.discrepancy}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.lambda = j.value("lambda", c.lambda);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
    if (j.contains("discrepancy")) c.discrepancy = j.at("discrepancy").get<DiscrepancyConfig>();
}

PhaseLosses phase_losses(const ForwardResult& fr, const Tensor& x, double lambda, const DiscrepancyConfig& cfg) {
    if (!(lambda >= 0.0)) throw ConfigError("phase_losses: lambda must be >= 0");
    PhaseLosses out;
    out.recon = ops::mse(x, fr.x_hat);
    out.assdis_min = ops::mean(assoc_discrepancy(fr.layers, cfg, StopGradient::series));
    out.assdis_max = ops::mean(assoc_discrepancy(fr.layers, cfg, StopGradient::prior));
    out.minimize = ops::add(out.recon, ops::scale(out.assdis_min, lambda));
    out.maximize = ops::sub(out.recon, ops::scale(out.assdis_max, lambda));
    return out;
}

Tensor training_objective(const ForwardResult& fr, const Tensor& x, const TrainConfig& cfg) {
    switch (cfg.strategy) {
        case TrainStrategy::minimax: {
            auto pl = phase_losses(fr, x, cfg.lambda, cfg.discrepancy);
            return ops::add(pl.recon, ops::scale(ops::sub(pl.assdis_min, pl.assdis_max), cfg.lambda));
        }
        case TrainStrategy::maximize_only: {
            auto dm = ops::mean(assoc_discrepancy(fr.layers, cfg.discrepancy));
            return ops::sub(ops::mse(x, fr.x_hat), ops::scale(dm, cfg.lambda));
        }
        case TrainStrategy::recon_only:
            return ops::mse(x, fr.x_hat);
    }
    throw ContractError("unknown strategy");
}

double validation_objective(const ForwardResult& fr, const Tensor& x, const TrainConfig& cfg) {
    if (cfg.strategy == TrainStrategy::minimax) {
        const double recon = ops::mse(x, fr.x_hat).item();
        const double dm = ops::mean(assoc_discrepancy(fr.layers, cfg.discrepancy)).item();
        return recon + cfg.lambda * dm;
    }
    return training_objective(fr, x, cfg).item();
}

StepLosses train_step(std::span<const Tensor> batch, const ModelParams& params, const ModelConfig& model_cfg,
                      Adam& optimizer, const TrainConfig& cfg, Rng* dropout_rng) {
    if (batch.empty()) throw ContractError("train_step: empty batch");
    const double w = 1.0 / static_cast<double>(batch.size());
    StepLosses losses;
    for (const auto& x : batch) {
        auto fr = forward(x, params, model_cfg, {dropout_rng});
        auto objective = training_objective(fr, x, cfg);
        {
            NoGradGuard no_grad;
            losses.recon += w * ops::mse(x, fr.x_hat).item();
            losses.assdis += w * ops::mean(assoc_discrepancy(fr.layers, cfg.discrepancy)).item();
        }
        losses.objective += w * objective.item();
        backward(ops::scale(objective, w));
    }
    optimizer.step();
    optimizer.zero_grad();
    return losses;
}

std::string TrainLog::to_csv() const {
    std::string out = "epoch,recon_loss,assdis,val_loss\n";
    char buf[160];
    for (const auto& e : epochs) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", e.epoch, e.recon_loss, e.assdis, e.val_loss);
        out += buf;
    }
    return out;
}

bool EarlyStopping::update(double val_loss) {
    ++epoch_;
    if (epoch_ == 1 || val_loss < best_) {
        best_ = val_loss;
        best_epoch_ = epoch_;
        since_best_ = 0;
        return true;
    }
    ++since_best_;
    return false;
}

double evaluate_objective(const TimeSeries& series, const ModelParams& params, const ModelConfig& model_cfg,
                          const TrainConfig& cfg) {
    NoGradGuard no_grad;
    const auto windows = window_slices(series.length, model_cfg.window, WindowMode::train_drop_tail);
    double total = 0.0;
    for (const auto& wnd : windows) {
        auto x = window_tensor(series, wnd.start, model_cfg.window);
        total += validation_objective(forward(x, params, model_cfg), x, cfg);
    }
    return total / static_cast<double>(windows.size());
}

FitResult fit(const TimeSeries& train, const TimeSeries& val, const ModelConfig& model_cfg, const TrainConfig& cfg,
              const EpochCallback& on_epoch) {
    model_cfg.validate();
    cfg.validate();
    cfg.discrepancy.validate(model_cfg.layers);
    if (train.dims != model_cfg.input_dim || val.dims != model_cfg.input_dim) {
        throw ConfigError("fit: series have " + std::to_string(train.dims) + "/" + std::to_string(val.dims) +
                          " channels, model expects " + std::to_string(model_cfg.input_dim));
    }
    const auto slices = window_slices(train.length, model_cfg.window, WindowMode::train_drop_tail);
    // Validation needs at least one window too; window_slices throws otherwise.
    window_slices(val.length, model_cfg.window, WindowMode::train_drop_tail);

    std::vector<Tensor> windows;
    for (const auto& s : slices) windows.push_back(window_tensor(train, s.start, model_cfg.window));

    auto params = init_params(model_cfg, cfg.seed);
    Adam optimizer(params.parameters(), {.lr = cfg.learning_rate});
    optimizer.zero_grad();
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    Rng dropout_rng(cfg.seed + 1);

    FitResult result;
    EarlyStopping stopper(cfg.patience);
    std::vector<std::size_t> order(windows.size());
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        EpochLog log;
        log.epoch = epoch;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            std::vector<Tensor> batch;
            for (std::size_t k = b; k < std::min(order.size(), b + cfg.batch_size); ++k) batch.push_back(windows[order[k]]);
            StepLosses sl;
            try {
                sl = train_step(batch, params, model_cfg, optimizer, cfg, model_cfg.dropout > 0 ? &dropout_rng : nullptr);
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                                   std::to_string(optimizer.steps() + 1) + ": " + e.what());
            }
            const double share = static_cast<double>(batch.size()) / static_cast<double>(windows.size());
            log.recon_loss += share * sl.recon;
            log.assdis += share * sl.assdis;
        }
        log.val_loss = evaluate_objective(val, params, model_cfg, cfg);
        if (!std::isfinite(log.val_loss) || !std::isfinite(log.recon_loss) || !std::isfinite(log.assdis)) {
            throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
        }
        result.log.epochs.push_back(log);
        if (stopper.update(log.val_loss)) result.params = params.clone();
        if (on_epoch) on_epoch(log, params);
        if (stopper.should_stop()) {
            result.log.early_stopped = epoch < cfg.max_epochs;
            break;
        }
    }
    result.log.best_epoch = stopper.best_epoch();
    return result;
}

}  // namespace atx
