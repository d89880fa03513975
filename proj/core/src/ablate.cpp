#include "mainet/ablate.hpp"

#include <atomic>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mainet/error.hpp"
#include "mainet/fusion.hpp"
#include "mainet/model.hpp"
#include "mainet/ops.hpp"
#include "mainet/rng.hpp"
#include "mainet/tape.hpp"

namespace mainet::ablate {

using model::FusionMode;
using model::Modality;

namespace {

struct Job {
  std::string name;
  model::ModelConfig config;
  bool keep_model = false;  // the trimodal ARPM+ER model feeds the fusion rows
};

struct JobResult {
  Row row;
  std::optional<model::Model> model;
};

model::ModelConfig base_config(const BenchmarkConfig& cfg) {
  model::ModelConfig mc;
  mc.backbone = cfg.backbone;
  mc.backbone.input_size = cfg.synth.map_size;
  mc.attention = cfg.attention;
  mc.tokens = cfg.tokens;
  mc.classes = cfg.classes;
  mc.seed = cfg.model_seed;
  return mc;
}

JobResult run_job(const Job& job, const BenchmarkConfig& cfg, const data::Dataset& ds,
                  const data::Split& split) {
  JobResult res;
  model::Model m = model::Model::init(job.config);
  const train::TrainResult tr = train::train_model(m, ds, split, cfg.train);
  const train::EvalResult ev = train::evaluate(m, ds, split.test);
  res.row.name = job.name;
  res.row.report = metrics::compute_metrics(ev.confusion);
  res.row.best_val_acc = tr.best_val_acc;
  if (job.keep_model) res.model = std::move(m);
  return res;
}

/// Post-hoc trained fully connected fusion layer for the LF baseline.
std::pair<Tensor, Tensor> fit_learned_fusion(const std::vector<std::vector<fusion::Evidence>>& inputs,
                                             const std::vector<int>& labels, std::size_t classes,
                                             std::uint64_t seed) {
  const std::size_t m_count = inputs.front().size();
  const std::size_t in_dim = m_count * classes;
  rng::Xoshiro256 gen(rng::mix(seed, 0xf5));
  Tensor w({in_dim, classes});
  for (auto& v : w.mutable_data()) v = gen.normal() * 0.1;
  w.set_requires_grad(true);
  Tensor b({classes});
  b.set_requires_grad(true);

  train::Adam adam({w, b});
  const std::size_t steps = 300;
  for (std::size_t step = 0; step < steps; ++step) {
    adam.zero_grad();
    const double inv = 1.0 / static_cast<double>(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      GradTape tape;
      std::vector<Tensor> ps;
      for (const auto& e : inputs[i]) ps.push_back(Tensor({classes}, std::vector<double>(e.p)));
      const Tensor joint = fusion::learned_fusion_t(ps, w, b, &tape);
      const Tensor loss = ops::cross_entropy(joint, static_cast<std::size_t>(labels[i]), &tape);
      tape.backward(loss, inv);
    }
    adam.step(0.05);
  }
  return {w, b};
}

metrics::Confusion empty_confusion(std::size_t classes) {
  return metrics::Confusion(classes, std::vector<double>(classes, 0.0));
}

std::vector<Row> fusion_rows(const model::Model& trimodal, const BenchmarkConfig& cfg,
                             const data::Dataset& ds, const data::Split& split, Tensor& lf_w_out,
                             Tensor& lf_b_out) {
  const std::size_t classes = cfg.classes;

  auto head_evidences = [&](std::size_t idx) {
    const model::ModelOutput out = trimodal.forward(ds.at(idx), nullptr);
    std::vector<fusion::Evidence> es;
    for (const auto& e : out.evidences)
      es.push_back(fusion::Evidence{e.p.data(), 0.0, e.weight.item(), e.reliability.item()});
    return es;
  };

  std::vector<std::vector<fusion::Evidence>> train_ev;
  std::vector<int> train_labels;
  for (const std::size_t idx : split.train) {
    train_ev.push_back(head_evidences(idx));
    train_labels.push_back(ds.at(idx).label);
  }
  const auto [lf_w, lf_b] = fit_learned_fusion(train_ev, train_labels, classes, cfg.model_seed);
  lf_w_out = lf_w;
  lf_b_out = lf_b;

  const char* names[5] = {"MV", "PA", "LF", "DST", "ER"};
  std::vector<metrics::Confusion> confusions(5, empty_confusion(classes));
  for (const std::size_t idx : split.test) {
    const auto es = head_evidences(idx);
    const auto actual = static_cast<std::size_t>(ds.at(idx).label);
    std::array<std::size_t, 5> preds{};
    preds[0] = fusion::majority_vote(es);
    preds[1] = fusion::decide(fusion::prob_average(es));
    preds[2] = fusion::decide(fusion::learned_fusion(es, lf_w, lf_b));
    try {
      preds[3] = fusion::decide(fusion::ds_combine(es));
    } catch (const DegenerateCombinationError&) {
      preds[3] = fusion::decide(fusion::prob_average(es));  // documented fallback
    }
    try {
      preds[4] = fusion::decide(fusion::er_combine(es));
    } catch (const DegenerateCombinationError&) {
      preds[4] = fusion::decide(fusion::prob_average(es));
    }
    for (std::size_t f = 0; f < 5; ++f) confusions[f][actual][preds[f]] += 1.0;
  }

  std::vector<Row> rows;
  for (std::size_t f = 0; f < 5; ++f)
    rows.push_back(Row{names[f], metrics::compute_metrics(confusions[f]), 0.0});
  return rows;
}

}  // namespace

AblationReport run_ablation(const BenchmarkConfig& cfg, std::ostream* progress) {
  const data::Dataset ds = data::gen_synthetic(cfg.synth);
  const data::Split split = data::split_dataset(ds, cfg.train.split, cfg.train.seed);

  std::vector<Job> jobs;
  auto add = [&](const std::string& name, FusionMode mode, std::vector<Modality> mods,
                 Modality primary = Modality::image, bool keep = false) {
    Job j;
    j.name = name;
    j.config = base_config(cfg);
    j.config.mode = mode;
    j.config.modalities = std::move(mods);
    j.config.primary = primary;
    j.keep_model = keep;
    jobs.push_back(std::move(j));
  };

  std::size_t trimodal_idx = std::string::npos;
  if (cfg.run_modality || cfg.run_mechanism || cfg.run_fusion) {
    trimodal_idx = jobs.size();
    add("wave+audio+image (ARPM+ER)", FusionMode::tri_arpm_er,
        {Modality::image, Modality::audio, Modality::wave}, Modality::image, true);
  }
  std::size_t modality_begin = jobs.size();
  if (cfg.run_modality) {
    add("wave", FusionMode::single, {Modality::wave});
    add("audio", FusionMode::single, {Modality::audio});
    add("image", FusionMode::single, {Modality::image});
    add("wave+audio", FusionMode::dual_dafn2, {Modality::wave, Modality::audio});
    add("wave+image", FusionMode::dual_dafn2, {Modality::wave, Modality::image});
    add("audio+image", FusionMode::dual_dafn2, {Modality::audio, Modality::image});
  }
  std::size_t mechanism_begin = jobs.size();
  if (cfg.run_mechanism) {
    add("concat", FusionMode::tri_concat, {Modality::image, Modality::audio, Modality::wave});
    add("ARPM primary=image", FusionMode::tri_arpm_single,
        {Modality::image, Modality::audio, Modality::wave}, Modality::image);
    add("ARPM primary=audio", FusionMode::tri_arpm_single,
        {Modality::image, Modality::audio, Modality::wave}, Modality::audio);
    add("ARPM primary=wave", FusionMode::tri_arpm_single,
        {Modality::image, Modality::audio, Modality::wave}, Modality::wave);
    add("ER only", FusionMode::tri_heads_er,
        {Modality::image, Modality::audio, Modality::wave});
  }

  // Each job is self-contained (own model, own tapes), so jobs parallelize
  // across a small pool; results land in job order which keeps reports
  // byte-identical regardless of scheduling.
  std::vector<std::optional<JobResult>> results(jobs.size());
  std::atomic<std::size_t> next{0};
  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.threads, jobs.size()));
  std::vector<std::thread> pool;
  std::mutex progress_mu;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= jobs.size()) return;
        JobResult r = run_job(jobs[i], cfg, ds, split);
        if (progress) {
          std::lock_guard<std::mutex> lock(progress_mu);
          (*progress) << "[ablate] " << jobs[i].name << ": acc "
                      << r.row.report.accuracy << "%\n";
        }
        results[i] = std::move(r);
      }
    });
  for (auto& t : pool) t.join();

  AblationReport report;
  if (cfg.run_modality) {
    for (std::size_t i = modality_begin; i < mechanism_begin; ++i)
      report.modality.push_back(results[i]->row);
    report.modality.push_back(results[trimodal_idx]->row);  // Table-3 row order
  }
  if (cfg.run_mechanism) {
    for (std::size_t i = mechanism_begin; i < jobs.size(); ++i)
      report.mechanism.push_back(results[i]->row);
    Row full = results[trimodal_idx]->row;
    full.name = "ARPM all + ER";
    report.mechanism.push_back(full);
  }
  if (cfg.run_fusion)
    report.fusion =
        fusion_rows(*results[trimodal_idx]->model, cfg, ds, split, report.lf_w, report.lf_b);
  return report;
}

namespace {

void format_rows(std::ostringstream& os, const std::string& title, const std::vector<Row>& rows) {
  if (rows.empty()) return;
  os << title << "\n";
  std::size_t width = 12;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  os << std::left << std::setw(static_cast<int>(width + 2)) << "configuration"
     << std::right << std::setw(10) << "accuracy" << std::setw(11) << "precision"
     << std::setw(8) << "recall" << std::setw(10) << "f1" << "\n";
  os << std::fixed << std::setprecision(2);
  for (const auto& r : rows)
    os << std::left << std::setw(static_cast<int>(width + 2)) << r.name << std::right
       << std::setw(10) << r.report.accuracy << std::setw(11) << r.report.precision
       << std::setw(8) << r.report.recall << std::setw(10) << r.report.f1 << "\n";
  os << "\n";
}

}  // namespace

std::string format_text(const AblationReport& report) {
  std::ostringstream os;
  format_rows(os, "modality comparison", report.modality);
  format_rows(os, "mechanism ablation", report.mechanism);
  format_rows(os, "decision fusion comparison", report.fusion);
  return os.str();
}

std::string to_json_string(const AblationReport& report, const std::string& config_hash) {
  using nlohmann::json;
  auto rows_json = [](const std::vector<Row>& rows) {
    json arr = json::array();
    for (const auto& r : rows) {
      json e;
      e["name"] = r.name;
      e["accuracy"] = r.report.accuracy;
      e["precision"] = r.report.precision;
      e["recall"] = r.report.recall;
      e["f1"] = r.report.f1;
      arr.push_back(std::move(e));
    }
    return arr;
  };
  json j;
  j["modality"] = rows_json(report.modality);
  j["mechanism"] = rows_json(report.mechanism);
  j["fusion"] = rows_json(report.fusion);
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  return j.dump(2) + "\n";
}

}  // namespace mainet::ablate
