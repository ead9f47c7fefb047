#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

#include "multifuse/dataset.hpp"
#include "multifuse/fusion.hpp"
#include "multifuse/metrics.hpp"

namespace multifuse {

struct TrainConfig {
  double lr = 1e-3;  // 1e-5 under --paper-fidelity
  double plateau_factor = 0.1;
  int plateau_patience = 3;
  int early_stop_patience = 6;
  int max_epochs = 200;
  int batch_size = 8;
  std::uint64_t seed = 1;
  double val_fraction = 0.35;
  int repetitions = 5;
  double min_improvement = 1e-6;
};

// Learning-rate reduction on plateau. An epoch improves when its loss is
// below best - min_improvement; `patience` consecutive non-improving epochs
// trigger a reduction, and the plateau counter restarts after each reduction.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, int patience, double min_improvement)
      : lr_(lr), factor_(factor), patience_(patience), min_improvement_(min_improvement) {}

  // Feeds one epoch's validation loss; returns the lr in force afterwards.
  double observe(double val_loss) {
    if (val_loss < best_ - min_improvement_) {
      best_ = val_loss;
      bad_ = 0;
    } else if (++bad_ >= patience_) {
      lr_ *= factor_;
      bad_ = 0;
    }
    return lr_;
  }

  double lr() const { return lr_; }

 private:
  double lr_, factor_;
  int patience_;
  double min_improvement_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_ = 0;
};

// Stops after `patience` consecutive non-improving epochs; unlike the
// scheduler its counter resets only on improvement.
class EarlyStopper {
 public:
  EarlyStopper(int patience, double min_improvement)
      : patience_(patience), min_improvement_(min_improvement) {}

  bool observe(double val_loss) {
    if (val_loss < best_ - min_improvement_) {
      best_ = val_loss;
      bad_ = 0;
      return false;
    }
    return ++bad_ >= patience_;
  }

 private:
  int patience_;
  double min_improvement_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_ = 0;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double lr_after = 0;  // lr in force after this epoch's scheduler decision
  Metrics val_metrics;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  Metrics best_val_metrics;
  bool stopped_early = false;
};

// Mini-batch Adam training with the plateau schedule and early stopping; the
// model is left holding the parameters of the best-validation-loss epoch.
TrainResult train(FusionModel<float>& model, const std::vector<const Sample*>& train_set,
                  const std::vector<const Sample*>& val_set, const TrainConfig& cfg);

// Validation loss, accuracy metrics, and predicted labels without grads.
struct EvalResult {
  double loss = 0;
  Metrics metrics;
  std::vector<int> predictions;
};
EvalResult evaluate(const FusionModel<float>& model, const std::vector<const Sample*>& samples,
                    int batch_size);

// Mean sigmoid gate value over a sample set (Gmu models only).
double mean_gate(const FusionModel<float>& model, const std::vector<const Sample*>& samples,
                 int batch_size);

// Trains each kind `repetitions` times with seeds seed..seed+r-1 and reports
// mean and population std per metric, plus the raw per-run rows.
nlohmann::json run_experiment(const std::vector<Sample>& dataset, const FusionConfig& model_cfg,
                              const TrainConfig& cfg, const std::vector<FusionKind>& kinds);

// Plain-text table of a run_experiment report.
std::string report_table(const nlohmann::json& report);

}  // namespace multifuse
