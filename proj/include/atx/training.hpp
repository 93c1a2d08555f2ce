#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "atx/data.hpp"
#include "atx/discrepancy.hpp"
#include "atx/model.hpp"
#include "atx/optim.hpp"

namespace atx {

/// How the association discrepancy enters the training objective.
///   minimax: recon + lambda*AssDis(P, S_detach) - lambda*AssDis(P_detach, S)
///   maximize_only: recon - lambda*AssDis(P, S), no stop-gradient
///   recon_only: recon
enum class TrainStrategy { minimax, maximize_only, recon_only };

TrainStrategy parse_strategy(std::string_view name);
std::string_view to_string(TrainStrategy s);

struct TrainConfig {
    double lambda = 3.0;
    double learning_rate = 1e-4;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 10;
    std::size_t patience = 3;
    std::uint64_t seed = 0;
    TrainStrategy strategy = TrainStrategy::minimax;
    DiscrepancyConfig discrepancy;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Both phase losses for one window. `assdis_*` are the window means of the
/// discrepancy vector (the 1-norm divided by N).
struct PhaseLosses {
    Tensor recon;
    Tensor assdis_min;  // series detached
    Tensor assdis_max;  // prior detached
    Tensor minimize;    // recon + lambda * assdis_min
    Tensor maximize;    // recon - lambda * assdis_max
};

PhaseLosses phase_losses(const ForwardResult& fr, const Tensor& x, double lambda, const DiscrepancyConfig& cfg);

/// The scalar the optimizer descends for the given strategy. For minimax the
/// reconstruction term enters once; detachment routes the two discrepancy terms.
Tensor training_objective(const ForwardResult& fr, const Tensor& x, const TrainConfig& cfg);

/// The value used for early stopping: the minimize-phase loss for minimax,
/// otherwise the strategy's own objective.
double validation_objective(const ForwardResult& fr, const Tensor& x, const TrainConfig& cfg);

struct StepLosses {
    double recon = 0.0;
    double assdis = 0.0;
    double objective = 0.0;
};

/// One optimizer step over a batch: the objective is averaged over windows,
/// backpropagated, applied by ADAM, and grads are zeroed.
StepLosses train_step(std::span<const Tensor> batch, const ModelParams& params, const ModelConfig& model_cfg,
                      Adam& optimizer, const TrainConfig& cfg, Rng* dropout_rng = nullptr);

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double recon_loss = 0.0;
    double assdis = 0.0;
    double val_loss = 0.0;
};

struct TrainLog {
    std::vector<EpochLog> epochs;
    std::size_t best_epoch = 0;
    bool early_stopped = false;

    std::string to_csv() const;
};

/// Patience rule: an epoch improves when its validation loss is strictly below the best so far.
class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

    /// Records one epoch. Returns true if this epoch is the new best.
    bool update(double val_loss);
    bool should_stop() const { return since_best_ >= patience_; }
    std::size_t best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_; }

private:
    std::size_t patience_;
    std::size_t epoch_ = 0;
    std::size_t best_epoch_ = 0;
    std::size_t since_best_ = 0;
    double best_ = 0.0;
};

struct FitResult {
    ModelParams params;  // best-validation parameters
    TrainLog log;
};

/// Trains on non-overlapped windows of `train` (tail dropped), shuffled each
/// epoch, with early stopping on `val`. Both series must already be normalized.
/// Called after every epoch with that epoch's log and the current (not best) parameters.
using EpochCallback = std::function<void(const EpochLog&, const ModelParams&)>;

FitResult fit(const TimeSeries& train, const TimeSeries& val, const ModelConfig& model_cfg, const TrainConfig& cfg,
              const EpochCallback& on_epoch = {});

/// Window-mean validation objective over the non-overlapped windows of `series`.
double evaluate_objective(const TimeSeries& series, const ModelParams& params, const ModelConfig& model_cfg,
                          const TrainConfig& cfg);

}  // namespace atx
