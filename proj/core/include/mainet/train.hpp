#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mainet/data.hpp"
#include "mainet/metrics.hpp"
#include "mainet/model.hpp"
#include "mainet/tensor.hpp"

namespace mainet::train {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  double lr = 0.001;
  std::size_t plateau_patience = 5;
  double plateau_factor = 0.5;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::uint64_t seed = 1;

  void validate() const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over a fixed parameter list. Gradients are read
/// from each tensor's grad store.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamConfig cfg = {});

  void step(double lr);
  void zero_grad();

  std::size_t steps() const { return t_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(std::size_t t, std::vector<std::vector<double>> m,
               std::vector<std::vector<double>> v);

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// Halves the learning rate after `patience` consecutive epochs without a new
/// best validation metric; any improvement resets the counter.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, std::size_t patience, double factor)
      : lr_(lr), patience_(patience), factor_(factor) {}

  /// Feed one epoch's validation metric; returns the lr to use next.
  double observe(double val_metric);

  double lr() const { return lr_; }
  double best() const { return best_; }
  std::size_t since_improve() const { return since_; }
  void restore(double lr, double best, std::size_t since) {
    lr_ = lr;
    best_ = best;
    since_ = since;
  }

 private:
  double lr_;
  std::size_t patience_;
  double factor_;
  double best_ = -1e300;
  std::size_t since_ = 0;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;  // percent
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;  // percent
  metrics::Confusion confusion;
};

EvalResult evaluate(const model::Model& m, const data::Dataset& ds,
                    const std::vector<std::size_t>& indices);

struct TrainResult {
  std::vector<EpochLog> log;
  double best_val_acc = 0.0;
  std::size_t best_epoch = 0;
};

struct TrainOptions {
  std::string out_dir;      // when set: epoch log CSV + last/ and best/ checkpoints
  std::string resume_dir;   // when set: restore state from <resume_dir>/last
  std::string config_hash;  // recorded in checkpoints
  std::ostream* progress = nullptr;
};

/// Runs the full loop: stratified epochs over the train indices, Adam on all
/// parameters, plateau-halved learning rate, per-epoch train/val logging.
/// The best-validation parameters are restored into the model on return.
/// Aborts with a diagnostic naming the first offending parameter block if the
/// loss turns non-finite.
TrainResult train_model(model::Model& m, const data::Dataset& ds, const data::Split& split,
                        const TrainConfig& cfg, const TrainOptions& opts = {});

std::string format_epoch_csv(const std::vector<EpochLog>& log);

}  // namespace mainet::train
