#include "mainet/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "mainet/checkpoint.hpp"
#include "mainet/error.hpp"
#include "mainet/fusion.hpp"
#include "mainet/rng.hpp"
#include "mainet/tape.hpp"

namespace mainet::train {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (batch_size == 0 || epochs == 0) throw ConfigError("train: batch_size and epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (plateau_patience == 0) throw ConfigError("train: plateau_patience must be >= 1");
  if (!(plateau_factor > 0.0) || plateau_factor >= 1.0)
    throw ConfigError("train: plateau_factor must lie in (0,1)");
  const double sum = split[0] + split[1] + split[2];
  if (std::fabs(sum - 1.0) > 1e-9) throw ConfigError("train: split ratios must sum to 1");
}

// -- Adam ------------------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].requires_grad()) continue;
    const auto& g = params_[i].grad();
    auto& value = params_[i].mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      value[k] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::restore(std::size_t t, std::vector<std::vector<double>> m,
                   std::vector<std::vector<double>> v) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw ContractError("adam: restore with mismatched state");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

// -- scheduler --------------------------------------------------------------------

double PlateauScheduler::observe(double val_metric) {
  if (val_metric > best_) {
    best_ = val_metric;
    since_ = 0;
  } else if (++since_ >= patience_) {
    lr_ *= factor_;
    since_ = 0;
  }
  return lr_;
}

// -- evaluation -------------------------------------------------------------------

EvalResult evaluate(const model::Model& m, const data::Dataset& ds,
                    const std::vector<std::size_t>& indices) {
  const std::size_t classes = m.cfg.classes;
  EvalResult res;
  res.confusion.assign(classes, std::vector<double>(classes, 0.0));
  if (indices.empty()) return res;
  double loss = 0.0;
  std::size_t correct = 0;
  for (const std::size_t idx : indices) {
    const auto& sample = ds.at(idx);
    const model::ModelOutput out = m.forward(sample, nullptr);
    loss += m.loss(out, sample.label, nullptr).item();
    const std::size_t pred = fusion::decide(out.joint.data());
    res.confusion[static_cast<std::size_t>(sample.label)][pred] += 1.0;
    if (pred == static_cast<std::size_t>(sample.label)) ++correct;
  }
  res.loss = loss / static_cast<double>(indices.size());
  res.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(indices.size());
  return res;
}

// -- training loop ------------------------------------------------------------------

namespace {

std::string find_nonfinite_param(const std::vector<std::pair<std::string, Tensor>>& params) {
  for (const auto& [name, t] : params)
    for (double v : t.data())
      if (!std::isfinite(v)) return name;
  return "loss graph (parameters finite)";
}

std::vector<std::pair<std::string, Tensor>> adam_state_tensors(
    const std::vector<std::pair<std::string, Tensor>>& params, const Adam& adam) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.emplace_back(params[i].first + "#adam_m",
                     Tensor(params[i].second.shape(), std::vector<double>(adam.first_moments()[i])));
    out.emplace_back(params[i].first + "#adam_v",
                     Tensor(params[i].second.shape(), std::vector<double>(adam.second_moments()[i])));
  }
  return out;
}

}  // namespace

std::string format_epoch_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "epoch,lr,train_loss,train_acc,val_loss,val_acc\n";
  os.precision(17);
  for (const auto& e : log)
    os << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.train_acc << ',' << e.val_loss
       << ',' << e.val_acc << "\n";
  return os.str();
}

TrainResult train_model(model::Model& m, const data::Dataset& ds, const data::Split& split,
                        const TrainConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  auto params = m.named_parameters();
  std::vector<Tensor> param_tensors;
  for (auto& [name, t] : params) param_tensors.push_back(t);
  Adam adam(param_tensors);
  PlateauScheduler sched(cfg.lr, cfg.plateau_patience, cfg.plateau_factor);

  TrainResult result;
  std::size_t start_epoch = 0;

  if (!opts.resume_dir.empty()) {
    const std::string last = (fs::path(opts.resume_dir) / "last").string();
    const CheckpointMeta meta = load_checkpoint(last, params);
    std::vector<std::vector<double>> am, av;
    for (const auto& [name, t] : params) {
      am.push_back(load_checkpoint_tensor(last, name + "#adam_m").data());
      av.push_back(load_checkpoint_tensor(last, name + "#adam_v").data());
    }
    adam.restore(meta.adam_steps, std::move(am), std::move(av));
    sched.restore(meta.lr, meta.sched_best, meta.sched_since);
    start_epoch = meta.epoch;
    result.best_val_acc = meta.best_val_acc;
    result.best_epoch = meta.best_epoch;
  }

  // in-memory snapshot of the best-validation parameters
  std::vector<std::vector<double>> best_values;
  auto snapshot_best = [&]() {
    best_values.clear();
    for (const auto& [name, t] : params) best_values.push_back(t.data());
  };
  auto restore_best = [&]() {
    if (best_values.empty()) return;
    for (std::size_t i = 0; i < params.size(); ++i)
      params[i].second.mutable_data() = best_values[i];
  };
  if (!opts.resume_dir.empty()) {
    const std::string best_dir = (fs::path(opts.resume_dir) / "best").string();
    if (checkpoint_exists(best_dir)) {
      // reload the best snapshot so a resumed run keeps returning it when no
      // later epoch beats it
      std::vector<std::pair<std::string, Tensor>> scratch;
      for (const auto& [name, t] : params)
        scratch.emplace_back(name, Tensor(t.shape(), std::vector<double>(t.data())));
      load_checkpoint(best_dir, scratch);
      best_values.clear();
      for (const auto& [name, t] : scratch) best_values.push_back(t.data());
    }
  } else {
    snapshot_best();  // epoch-0 parameters as the fallback
  }

  const double batch_den = static_cast<double>(cfg.batch_size);
  double lr = sched.lr();

  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    rng::Xoshiro256 gen(rng::mix(cfg.seed, 0x9000 + epoch));
    rng::shuffle(order, gen);

    double train_loss = 0.0;
    std::size_t train_correct = 0;

    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t b_end = std::min(order.size(), b + cfg.batch_size);
      adam.zero_grad();
      for (std::size_t s = b; s < b_end; ++s) {
        const auto& sample = ds.at(order[s]);
        GradTape tape;
        const model::ModelOutput out = m.forward(sample, &tape);
        const Tensor loss = m.loss(out, sample.label, &tape);
        const double loss_value = loss.item();
        if (!std::isfinite(loss_value))
          throw ContractError("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                              "; first offending block: " + find_nonfinite_param(params));
        train_loss += loss_value;
        if (fusion::decide(out.joint.data()) == static_cast<std::size_t>(sample.label))
          ++train_correct;
        tape.backward(loss, 1.0 / batch_den);
      }
      adam.step(lr);
    }

    const EvalResult val = evaluate(m, ds, split.val);

    EpochLog log;
    log.epoch = epoch + 1;
    log.lr = lr;
    log.train_loss = order.empty() ? 0.0 : train_loss / static_cast<double>(order.size());
    log.train_acc =
        order.empty() ? 0.0 : 100.0 * static_cast<double>(train_correct) / static_cast<double>(order.size());
    log.val_loss = val.loss;
    log.val_acc = val.accuracy;
    result.log.push_back(log);

    if (opts.progress)
      (*opts.progress) << "epoch " << log.epoch << "/" << cfg.epochs << "  lr " << log.lr
                       << "  train_loss " << log.train_loss << "  train_acc " << log.train_acc
                       << "%  val_loss " << log.val_loss << "  val_acc " << log.val_acc << "%\n";

    const bool improved = val.accuracy > result.best_val_acc || result.best_epoch == 0;
    if (improved) {
      result.best_val_acc = val.accuracy;
      result.best_epoch = epoch + 1;
      snapshot_best();
    }
    lr = sched.observe(val.accuracy);

    if (!opts.out_dir.empty()) {
      CheckpointMeta meta;
      meta.epoch = epoch + 1;
      meta.lr = lr;
      meta.best_val_acc = result.best_val_acc;
      meta.best_epoch = result.best_epoch;
      meta.sched_best = sched.best();
      meta.sched_since = sched.since_improve();
      meta.adam_steps = adam.steps();
      meta.seed = cfg.seed;
      meta.config_hash = opts.config_hash;

      auto full = params;
      const auto state = adam_state_tensors(params, adam);
      full.insert(full.end(), state.begin(), state.end());
      save_checkpoint((fs::path(opts.out_dir) / "last").string(), full, meta);
      if (improved) save_checkpoint((fs::path(opts.out_dir) / "best").string(), params, meta);

      std::ofstream csv(fs::path(opts.out_dir) / "train_log.csv", std::ios::trunc);
      csv << format_epoch_csv(result.log);
    }
  }

  restore_best();
  return result;
}

}  // namespace mainet::train
