#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mainet/arpm.hpp"
#include "mainet/backbone.hpp"
#include "mainet/data.hpp"
#include "mainet/metrics.hpp"
#include "mainet/train.hpp"

namespace mainet::ablate {

/// Everything a comparison run needs: one synthetic benchmark, one training
/// budget, one architecture. Every configuration in the plan trains under the
/// same seed and budget so rows are comparable.
struct BenchmarkConfig {
  data::SynthConfig synth;
  train::TrainConfig train;
  backbone::BackboneConfig backbone;
  arpm::AttentionConfig attention;
  std::size_t tokens = 4;
  std::size_t classes = 3;
  std::uint64_t model_seed = 1;
  std::size_t threads = 2;
  bool run_modality = true;   // single / dual / trimodal rows
  bool run_mechanism = true;  // concat vs ARPM vs ER rows
  bool run_fusion = true;     // MV / PA / LF / DST / ER rows
};

struct Row {
  std::string name;
  metrics::MetricsReport report;
  double best_val_acc = 0.0;
};

struct AblationReport {
  std::vector<Row> modality;   // 7 rows: three singles, three pairs, trimodal
  std::vector<Row> mechanism;  // concat, per-primary ARPM, ER-only, ARPM+ER
  std::vector<Row> fusion;     // MV, PA, LF, DST, ER on the trained trimodal heads
  Tensor lf_w, lf_b;           // fitted learned-fusion layer (when fusion rows ran)
};

AblationReport run_ablation(const BenchmarkConfig& cfg, std::ostream* progress = nullptr);

std::string format_text(const AblationReport& report);
std::string to_json_string(const AblationReport& report, const std::string& config_hash = "");

}  // namespace mainet::ablate
