#include "multifuse/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "multifuse/adam.hpp"
#include "multifuse/rng.hpp"

namespace multifuse {

namespace {

struct BatchView {
  std::vector<const FeatureImage*> images;
  std::vector<const TokenSequence*> tokens;
  std::vector<int> labels;
};

BatchView make_batch(const std::vector<const Sample*>& samples, const std::vector<std::size_t>& order,
                     std::size_t begin, std::size_t end) {
  BatchView b;
  for (std::size_t i = begin; i < end; ++i) {
    const Sample* s = samples[order[i]];
    b.images.push_back(&s->image);
    b.tokens.push_back(&s->tokens);
    b.labels.push_back(s->label);
  }
  return b;
}

std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  return order;
}

}  // namespace

EvalResult evaluate(const FusionModel<float>& model, const std::vector<const Sample*>& samples,
                    int batch_size) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty sample set");
  NoGradGuard guard;
  const auto order = identity_order(samples.size());
  EvalResult out;
  std::vector<int> truth;
  double loss_sum = 0;
  for (std::size_t begin = 0; begin < samples.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(samples.size(), begin + static_cast<std::size_t>(batch_size));
    const BatchView b = make_batch(samples, order, begin, end);
    const Tensor<float> logits = model.forward(b.images, b.tokens);
    loss_sum += static_cast<double>(cross_entropy(logits, b.labels).item()) *
                static_cast<double>(end - begin);
    const auto& lv = logits.value();
    for (std::size_t i = 0; i < b.labels.size(); ++i) {
      out.predictions.push_back(lv[i * 2 + 1] > lv[i * 2] ? 1 : 0);
      truth.push_back(b.labels[i]);
    }
  }
  out.loss = loss_sum / static_cast<double>(samples.size());
  out.metrics = evaluate_metrics(out.predictions, truth);
  return out;
}

double mean_gate(const FusionModel<float>& model, const std::vector<const Sample*>& samples,
                 int batch_size) {
  if (model.cfg.kind != FusionKind::Gmu)
    throw std::invalid_argument("mean_gate: model is not a gated fusion model");
  NoGradGuard guard;
  const auto order = identity_order(samples.size());
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t begin = 0; begin < samples.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(samples.size(), begin + static_cast<std::size_t>(batch_size));
    const BatchView b = make_batch(samples, order, begin, end);
    const Tensor<float> gate = model.forward_detail(b.images, b.tokens).gate;
    for (float z : gate.value()) sum += z;
    count += gate.size();
  }
  return sum / static_cast<double>(count);
}

TrainResult train(FusionModel<float>& model, const std::vector<const Sample*>& train_set,
                  const std::vector<const Sample*>& val_set, const TrainConfig& cfg) {
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("train: empty train or validation set");
  if (cfg.batch_size < 1 || cfg.max_epochs < 1) throw std::invalid_argument("train: bad config");

  auto params = model.named_parameters();
  Adam<float> opt(params, cfg.lr);
  PlateauScheduler scheduler(cfg.lr, cfg.plateau_factor, cfg.plateau_patience, cfg.min_improvement);
  EarlyStopper stopper(cfg.early_stop_patience, cfg.min_improvement);
  Rng rng(cfg.seed);

  TrainResult result;
  std::vector<std::vector<float>> best_values;
  auto order = identity_order(train_set.size());

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double train_loss_sum = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const BatchView b = make_batch(train_set, order, begin, end);
      const Tensor<float> loss = cross_entropy(model.forward(b.images, b.tokens), b.labels);
      const double batch_loss = loss.item();
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train: non-finite loss in epoch " + std::to_string(epoch));
      loss.backward();
      opt.step();
      train_loss_sum += batch_loss * static_cast<double>(end - begin);
    }

    const EvalResult val = evaluate(model, val_set, cfg.batch_size);
    if (!std::isfinite(val.loss))
      throw std::runtime_error("train: non-finite validation loss in epoch " +
                               std::to_string(epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_loss_sum / static_cast<double>(train_set.size());
    rec.val_loss = val.loss;
    rec.val_metrics = val.metrics;
    rec.lr_after = scheduler.observe(val.loss);
    opt.set_lr(rec.lr_after);
    result.history.push_back(rec);

    if (val.loss < result.best_val_loss - cfg.min_improvement) {
      result.best_val_loss = val.loss;
      result.best_epoch = epoch;
      result.best_val_metrics = val.metrics;
      best_values.clear();
      for (const auto& [name, p] : params) best_values.push_back(p.value());
    }

    if (stopper.observe(val.loss)) {
      result.stopped_early = true;
      break;
    }
  }

  if (!best_values.empty())
    for (std::size_t i = 0; i < params.size(); ++i) params[i].second.value() = best_values[i];
  return result;
}

nlohmann::json run_experiment(const std::vector<Sample>& dataset, const FusionConfig& model_cfg,
                              const TrainConfig& cfg, const std::vector<FusionKind>& kinds) {
  if (cfg.repetitions < 1) throw std::invalid_argument("run_experiment: repetitions must be >= 1");

  const char* metric_names[] = {"accuracy", "precision", "recall", "f1", "specificity"};
  nlohmann::json report;
  nlohmann::json per_run = nlohmann::json::array();

  for (FusionKind kind : kinds) {
    std::vector<std::array<double, 5>> rows;
    for (int rep = 0; rep < cfg.repetitions; ++rep) {
      const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(rep);
      const auto [train_set, val_set] = split_train_val(dataset, cfg.val_fraction, seed);

      FusionConfig mc = model_cfg;
      mc.kind = kind;
      FusionModel<float> model;
      model.cfg = mc;
      model.init(seed);

      TrainConfig tc = cfg;
      tc.seed = seed;
      const TrainResult res = train(model, train_set, val_set, tc);
      const Metrics& m = res.best_val_metrics;
      rows.push_back({m.accuracy, m.precision, m.recall, m.f1, m.specificity});

      nlohmann::json row{{"kind", fusion_kind_name(kind)},
                         {"seed", seed},
                         {"best_epoch", res.best_epoch},
                         {"epochs", res.history.size()},
                         {"val_loss", res.best_val_loss},
                         {"accuracy", m.accuracy},
                         {"precision", m.precision},
                         {"recall", m.recall},
                         {"f1", m.f1},
                         {"specificity", m.specificity}};
      if (kind == FusionKind::Gmu) row["mean_gate"] = mean_gate(model, val_set, cfg.batch_size);
      per_run.push_back(std::move(row));
    }

    nlohmann::json stats;
    for (std::size_t mi = 0; mi < 5; ++mi) {
      double mean = 0;
      for (const auto& r : rows) mean += r[mi];
      mean /= static_cast<double>(rows.size());
      double var = 0;
      for (const auto& r : rows) var += (r[mi] - mean) * (r[mi] - mean);
      var /= static_cast<double>(rows.size());  // population variance
      stats[metric_names[mi]] = {{"mean", mean}, {"std", std::sqrt(std::max(0.0, var))}};
    }
    report[fusion_kind_name(kind)] = std::move(stats);
  }
  report["per_run"] = std::move(per_run);
  return report;
}

std::string report_table(const nlohmann::json& report) {
  const char* metric_names[] = {"accuracy", "precision", "recall", "f1", "specificity"};
  std::ostringstream out;
  out << "model        ";
  for (const char* m : metric_names) {
    out.width(22);
    out << std::left << m;
  }
  out << '\n';
  for (const auto& [kind, stats] : report.items()) {
    if (kind == "per_run") continue;
    out.width(13);
    out << std::left << kind;
    for (const char* m : metric_names) {
      std::ostringstream cell;
      cell.setf(std::ios::fixed);
      cell.precision(4);
      cell << stats[m]["mean"].get<double>() << " +/- " << stats[m]["std"].get<double>();
      out.width(22);
      out << std::left << cell.str();
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace multifuse
