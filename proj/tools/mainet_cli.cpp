// mainet: trimodal fusion engine driver.
//
// Subcommands: gen (synthetic dataset), prep (raw recording -> windows),
// train, eval, fuse (evidence CSV -> joint decisions), ablate (comparison
// tables), verify (oracle self-checks).
//
// Exit codes: 0 ok, 2 configuration error, 3 missing input, 4 malformed data;
// verify exits with the number of failed checks.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mainet/ablate.hpp"
#include "mainet/checkpoint.hpp"
#include "mainet/configfile.hpp"
#include "mainet/data.hpp"
#include "mainet/error.hpp"
#include "mainet/fusion.hpp"
#include "mainet/media_io.hpp"
#include "mainet/model.hpp"
#include "mainet/ops.hpp"
#include "mainet/preprocess.hpp"
#include "mainet/serialize.hpp"
#include "mainet/train.hpp"
#include "mainet/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mainet;

namespace {

// -- configuration schema ---------------------------------------------------------

const std::vector<std::string>& schema() {
  static const std::vector<std::string> keys = {
      "seed",
      "synth.n", "synth.map_size", "synth.snr_image", "synth.snr_audio", "synth.snr_wave",
      "synth.correlation", "synth.ratio0", "synth.ratio1", "synth.ratio2",
      "train.batch_size", "train.epochs", "train.lr", "train.patience", "train.factor",
      "train.split_train", "train.split_val", "train.split_test",
      "model.tokens", "model.width", "model.heads", "model.classes", "model.mode",
      "model.modalities", "model.primary",
      "backbone.channels", "backbone.large_kernel", "backbone.branches", "backbone.blocks",
      "backbone.se_reduction", "backbone.input_size", "backbone.feature_dim",
      "audio.n_fft", "audio.hop", "audio.n_mels",
      "prep.width_s", "prep.overlap",
      "eval.subset",
      "ablate.threads", "ablate.modality", "ablate.mechanism", "ablate.fusion",
  };
  return keys;
}

void apply_profile(config::KeyValues& kv, const std::string& profile) {
  auto set = [&](const char* k, const char* v) { kv[k] = v; };
  if (profile == "full") {
    // paper-scale defaults; nothing to override
  } else if (profile == "desk") {
    set("synth.n", "900");
    set("synth.map_size", "32");
    set("backbone.channels", "8,16,24,32");
    set("backbone.large_kernel", "5");
    set("backbone.branches", "5x1,3x2");
    set("backbone.blocks", "1");
    set("backbone.input_size", "32");
    set("backbone.feature_dim", "128");
    set("model.width", "32");
    set("train.epochs", "14");
  } else if (profile == "smoke") {
    set("synth.n", "60");
    set("synth.map_size", "32");
    set("backbone.channels", "8,12,16,24");
    set("backbone.large_kernel", "5");
    set("backbone.branches", "5x1,3x2");
    set("backbone.blocks", "1");
    set("backbone.input_size", "32");
    set("backbone.feature_dim", "128");
    set("model.width", "32");
    set("train.epochs", "3");
    set("train.batch_size", "16");
  } else {
    throw ConfigError("unknown profile '" + profile + "' (expected smoke, desk or full)");
  }
}

std::vector<std::size_t> parse_size_list(const std::string& text, const char* key) {
  std::vector<std::size_t> out;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ','))
    try {
      out.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw ConfigError(std::string("config key '") + key + "': bad list entry '" + item + "'");
    }
  return out;
}

data::SynthConfig synth_from(const config::KeyValues& kv, std::uint64_t seed) {
  data::SynthConfig c;
  c.n_samples = config::get_u64(kv, "synth.n", c.n_samples);
  c.map_size = config::get_u64(kv, "synth.map_size", c.map_size);
  c.snr_image = config::get_double(kv, "synth.snr_image", c.snr_image);
  c.snr_audio = config::get_double(kv, "synth.snr_audio", c.snr_audio);
  c.snr_wave = config::get_double(kv, "synth.snr_wave", c.snr_wave);
  c.correlation = config::get_double(kv, "synth.correlation", c.correlation);
  c.class_ratio[0] = config::get_double(kv, "synth.ratio0", c.class_ratio[0]);
  c.class_ratio[1] = config::get_double(kv, "synth.ratio1", c.class_ratio[1]);
  c.class_ratio[2] = config::get_double(kv, "synth.ratio2", c.class_ratio[2]);
  c.seed = seed;
  return c;
}

train::TrainConfig train_from(const config::KeyValues& kv, std::uint64_t seed) {
  train::TrainConfig c;
  c.batch_size = config::get_u64(kv, "train.batch_size", c.batch_size);
  c.epochs = config::get_u64(kv, "train.epochs", c.epochs);
  c.lr = config::get_double(kv, "train.lr", c.lr);
  c.plateau_patience = config::get_u64(kv, "train.patience", c.plateau_patience);
  c.plateau_factor = config::get_double(kv, "train.factor", c.plateau_factor);
  c.split[0] = config::get_double(kv, "train.split_train", c.split[0]);
  c.split[1] = config::get_double(kv, "train.split_val", c.split[1]);
  c.split[2] = config::get_double(kv, "train.split_test", c.split[2]);
  c.seed = seed;
  return c;
}

backbone::BackboneConfig backbone_from(const config::KeyValues& kv) {
  backbone::BackboneConfig c;
  const auto channels = parse_size_list(
      config::get_string(kv, "backbone.channels", "32,64,128,256"), "backbone.channels");
  if (channels.size() != 4) throw ConfigError("backbone.channels: exactly four values required");
  std::copy(channels.begin(), channels.end(), c.stage_channels.begin());
  c.large_kernel = config::get_u64(kv, "backbone.large_kernel", c.large_kernel);
  const std::string branches = config::get_string(kv, "backbone.branches", "13x1,5x2,3x3");
  c.dilated_branches.clear();
  std::istringstream is(branches);
  std::string item;
  while (std::getline(is, item, ',')) {
    const auto x = item.find('x');
    if (x == std::string::npos)
      throw ConfigError("backbone.branches: entry '" + item + "' is not <kernel>x<dilation>");
    try {
      c.dilated_branches.emplace_back(std::stoul(item.substr(0, x)), std::stoul(item.substr(x + 1)));
    } catch (const std::exception&) {
      throw ConfigError("backbone.branches: entry '" + item + "' is not <kernel>x<dilation>");
    }
  }
  c.blocks_per_stage = config::get_u64(kv, "backbone.blocks", c.blocks_per_stage);
  c.se_reduction = config::get_u64(kv, "backbone.se_reduction", c.se_reduction);
  c.input_size = config::get_u64(kv, "backbone.input_size", c.input_size);
  c.feature_dim = config::get_u64(kv, "backbone.feature_dim", c.feature_dim);
  return c;
}

arpm::AttentionConfig attention_from(const config::KeyValues& kv) {
  arpm::AttentionConfig c;
  c.model_width = config::get_u64(kv, "model.width", c.model_width);
  c.heads = config::get_u64(kv, "model.heads", c.heads);
  return c;
}

model::Modality modality_from(const std::string& name) {
  if (name == "image") return model::Modality::image;
  if (name == "audio") return model::Modality::audio;
  if (name == "wave") return model::Modality::wave;
  throw ConfigError("unknown modality '" + name + "'");
}

preprocess::AudioMapConfig audio_from(const config::KeyValues& kv) {
  preprocess::AudioMapConfig c;
  c.mel.stft.n_fft = config::get_u64(kv, "audio.n_fft", c.mel.stft.n_fft);
  c.mel.stft.hop = config::get_u64(kv, "audio.hop", c.mel.stft.hop);
  c.mel.n_mels = config::get_u64(kv, "audio.n_mels", c.mel.n_mels);
  return c;
}

model::ModelConfig model_from(const config::KeyValues& kv, std::uint64_t seed) {
  model::ModelConfig c;
  c.backbone = backbone_from(kv);
  c.attention = attention_from(kv);
  c.tokens = config::get_u64(kv, "model.tokens", c.tokens);
  c.classes = config::get_u64(kv, "model.classes", c.classes);
  c.seed = seed;

  const std::string mode = config::get_string(kv, "model.mode", "tri_arpm_er");
  if (mode == "single")
    c.mode = model::FusionMode::single;
  else if (mode == "dual_dafn2")
    c.mode = model::FusionMode::dual_dafn2;
  else if (mode == "tri_concat")
    c.mode = model::FusionMode::tri_concat;
  else if (mode == "tri_arpm_er")
    c.mode = model::FusionMode::tri_arpm_er;
  else if (mode == "tri_arpm_single")
    c.mode = model::FusionMode::tri_arpm_single;
  else if (mode == "tri_heads_er")
    c.mode = model::FusionMode::tri_heads_er;
  else
    throw ConfigError("model.mode: unknown mode '" + mode + "'");

  const std::string mods = config::get_string(kv, "model.modalities", "image,audio,wave");
  c.modalities.clear();
  std::istringstream is(mods);
  std::string item;
  while (std::getline(is, item, ',')) c.modalities.push_back(modality_from(item));
  c.primary = modality_from(config::get_string(kv, "model.primary", "image"));
  return c;
}

// -- shared command plumbing ----------------------------------------------------------

struct CommonArgs {
  std::string config_path;
  std::string profile = "desk";
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "flat key=value config file");
  cmd->add_option("--profile", args.profile, "preset scale: smoke, desk or full")
      ->check(CLI::IsMember({"smoke", "desk", "full"}));
  cmd->add_option("--out", args.out_dir, "output directory (all writes land here)");
  cmd->add_option("--seed", args.seed, "global seed");
  cmd->add_option("--set", args.overrides, "override config key, e.g. --set train.epochs=5")
      ->take_all();
}

/// Profile defaults, then file values, then --set overrides; validated
/// against the schema before any work happens.
config::KeyValues effective_config(const CommonArgs& args) {
  config::KeyValues kv;
  apply_profile(kv, args.profile);
  if (!args.config_path.empty()) {
    const config::KeyValues file = config::load_config_file(args.config_path);
    for (const auto& [k, v] : file) kv[k] = v;
  }
  for (const auto& o : args.overrides) config::apply_override(kv, o);
  kv["seed"] = std::to_string(args.seed);
  config::validate_keys(kv, schema());
  return kv;
}

/// Echo the full effective configuration into the output directory.
std::string write_provenance(const std::string& out_dir, const config::KeyValues& kv) {
  fs::create_directories(out_dir);
  const std::string hash = config::config_hash(kv);
  std::ofstream f(fs::path(out_dir) / "effective_config.txt", std::ios::trunc);
  f << "# config_hash = " << hash << "\n" << config::canonical_text(kv);
  return hash;
}

std::uint64_t seed_of(const config::KeyValues& kv) { return config::get_u64(kv, "seed", 1); }

// -- subcommand bodies -------------------------------------------------------------------

int cmd_gen(const CommonArgs& args) {
  const config::KeyValues kv = effective_config(args);
  const std::string hash = write_provenance(args.out_dir, kv);
  const data::SynthConfig cfg = synth_from(kv, seed_of(kv));
  const data::Dataset ds = data::gen_synthetic(cfg);
  data::save_dataset(args.out_dir, ds, cfg.seed, hash);
  const auto counts = data::count_classes(ds);
  std::cout << "generated " << ds.size() << " samples (classes " << counts[0] << "/" << counts[1]
            << "/" << counts[2] << ") under " << args.out_dir << "\n";
  return 0;
}

int cmd_prep(const CommonArgs& args, const std::string& input_dir) {
  const config::KeyValues kv = effective_config(args);
  const std::string hash = write_provenance(args.out_dir, kv);

  const fs::path in(input_dir);
  if (!fs::is_directory(in)) throw MissingInputError("recording directory not found: " + input_dir);

  preprocess::TrimodalStream stream;
  const fs::path frames = in / "frames";
  if (fs::is_directory(frames)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(frames))
      if (e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const std::int64_t ts = std::stoll(f.stem().string());
      Tensor frame = io::read_png(f.string());
      if (frame.dim(1) != 224 || frame.dim(2) != 224)
        frame = ops::adaptive_avg_pool(frame, 224, 224);  // window records are 3x224x224
      stream.frames.emplace_back(ts, std::move(frame));
    }
  }
  const io::WavData wav = io::read_wav((in / "audio.wav").string());
  if (wav.samples.dim(0) == 1) {
    // mono recordings are duplicated into the two-channel window layout
    Tensor stereo({2, wav.samples.dim(1)});
    auto& sv = stereo.mutable_data();
    const auto& mono = wav.samples.data();
    std::copy(mono.begin(), mono.end(), sv.begin());
    std::copy(mono.begin(), mono.end(), sv.begin() + static_cast<std::ptrdiff_t>(mono.size()));
    stream.audio = stereo;
  } else {
    stream.audio = wav.samples;
  }
  stream.sample_rate = wav.sample_rate;

  const auto wave_rows = io::read_csv((in / "wave.csv").string());
  if (wave_rows.empty()) throw DataFormatError("wave.csv is empty");
  const std::size_t steps = wave_rows.size();
  Tensor wave({9, steps});
  for (std::size_t i = 0; i < steps; ++i) {
    if (wave_rows[i].size() != 10)
      throw DataFormatError("wave.csv row " + std::to_string(i + 1) + ": expected timestamp + 9 values",
                            static_cast<long>(i + 1));
    for (std::size_t c = 0; c < 9; ++c)
      wave.mutable_data()[c * steps + i] = std::stod(wave_rows[i][c + 1]);
  }
  stream.wave = wave;

  for (const auto& row : io::read_csv((in / "labels.csv").string())) {
    if (row.size() != 2) continue;
    if (row[0] == "window_start_ms") continue;  // header
    stream.labels.emplace_back(std::stoll(row[0]), std::stoi(row[1]));
  }

  const double width = config::get_double(kv, "prep.width_s", 1.0);
  const double overlap = config::get_double(kv, "prep.overlap", 0.5);
  const auto windows = preprocess::window_stream(stream, width, overlap);
  if (windows.empty()) {
    std::cout << "stream shorter than one window, nothing to emit\n";
    return 0;
  }
  data::save_raw_windows(args.out_dir, windows, seed_of(kv), hash);
  std::cout << "emitted " << windows.size() << " windows under " << args.out_dir << "\n";
  return 0;
}

void print_metrics(std::ostream& os, const metrics::MetricsReport& rep) {
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "accuracy " << rep.accuracy << "%  precision " << rep.precision << "%  recall "
     << rep.recall << "%  f1 " << rep.f1 << "%\n";
}

json metrics_json(const metrics::MetricsReport& rep) {
  json j;
  j["accuracy"] = rep.accuracy;
  j["precision"] = rep.precision;
  j["recall"] = rep.recall;
  j["f1"] = rep.f1;
  j["confusion"] = rep.confusion;
  return j;
}

int cmd_train(const CommonArgs& args, const std::string& data_dir, const std::string& resume_dir) {
  const config::KeyValues kv = effective_config(args);
  const std::string hash = write_provenance(args.out_dir, kv);

  const data::Dataset ds = data::load_dataset(data_dir, audio_from(kv));
  const train::TrainConfig tcfg = train_from(kv, seed_of(kv));
  const data::Split split = data::split_dataset(ds, tcfg.split, tcfg.seed);

  model::Model m = model::Model::init(model_from(kv, seed_of(kv)));

  train::TrainOptions opts;
  opts.out_dir = args.out_dir;
  opts.resume_dir = resume_dir;
  opts.config_hash = hash;
  opts.progress = &std::cout;
  const train::TrainResult result = train::train_model(m, ds, split, tcfg, opts);

  const train::EvalResult val = train::evaluate(m, ds, split.val);
  const metrics::MetricsReport rep = metrics::compute_metrics(val.confusion);
  std::cout << "best val acc " << result.best_val_acc << "% (epoch " << result.best_epoch << ")\n";
  std::cout << "final val: ";
  print_metrics(std::cout, rep);
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& data_dir, const std::string& ckpt_dir) {
  const config::KeyValues kv = effective_config(args);
  const std::string hash = write_provenance(args.out_dir, kv);

  const data::Dataset ds = data::load_dataset(data_dir, audio_from(kv));
  const train::TrainConfig tcfg = train_from(kv, seed_of(kv));
  const data::Split split = data::split_dataset(ds, tcfg.split, tcfg.seed);

  model::Model m = model::Model::init(model_from(kv, seed_of(kv)));
  const std::string best = (fs::path(ckpt_dir) / "best").string();
  const std::string chosen = train::checkpoint_exists(best) ? best : ckpt_dir;
  const train::CheckpointMeta meta = train::load_checkpoint(chosen, m.named_parameters());
  if (!meta.config_hash.empty() && meta.config_hash != hash)
    std::cerr << "note: checkpoint config hash " << meta.config_hash
              << " differs from the current config " << hash << "\n";

  const std::string subset = config::get_string(kv, "eval.subset", "test");
  std::vector<std::size_t> indices;
  if (subset == "test")
    indices = split.test;
  else if (subset == "val")
    indices = split.val;
  else if (subset == "train")
    indices = split.train;
  else if (subset == "all")
    for (std::size_t i = 0; i < ds.size(); ++i) indices.push_back(i);
  else
    throw ConfigError("eval.subset: unknown subset '" + subset + "'");

  const train::EvalResult ev = train::evaluate(m, ds, indices);
  const metrics::MetricsReport rep = metrics::compute_metrics(ev.confusion);

  json out = metrics_json(rep);
  out["subset"] = subset;
  out["config_hash"] = hash;
  io::write_file((fs::path(args.out_dir) / "report.json").string(), out.dump(2) + "\n");
  std::ostringstream text;
  text << "subset " << subset << "\n";
  print_metrics(text, rep);
  io::write_file((fs::path(args.out_dir) / "report.txt").string(), text.str());
  std::cout << text.str();
  return 0;
}

int cmd_fuse(const CommonArgs& args, const std::string& evidence_csv, const std::string& method,
             const std::string& lf_dir) {
  const config::KeyValues kv = effective_config(args);
  write_provenance(args.out_dir, kv);

  const auto rows = io::read_csv(evidence_csv);
  if (rows.empty()) throw DataFormatError("evidence CSV is empty", 0);
  const auto& header = rows.front();
  if (header.size() < 5 || header[0] != "sample_id" || header[1] != "modality_id")
    throw DataFormatError("evidence CSV header must be sample_id,modality_id,p_1..p_N,w,r", 1);
  const std::size_t n_classes = header.size() - 4;

  std::vector<std::string> order;
  std::map<std::string, std::vector<fusion::Evidence>> groups;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const long line = static_cast<long>(r + 1);
    if (row.size() != header.size())
      throw DataFormatError("evidence CSV row " + std::to_string(line) + ": expected " +
                            std::to_string(header.size()) + " cells, got " +
                            std::to_string(row.size()), line);
    fusion::Evidence e;
    try {
      for (std::size_t c = 0; c < n_classes; ++c) e.p.push_back(std::stod(row[2 + c]));
      e.weight = std::stod(row[2 + n_classes]);
      e.reliability = std::stod(row[3 + n_classes]);
    } catch (const std::exception&) {
      throw DataFormatError("evidence CSV row " + std::to_string(line) + ": non-numeric cell", line);
    }
    double sum = 0.0;
    for (double v : e.p) {
      if (!(v >= 0.0))
        throw DataFormatError("evidence CSV row " + std::to_string(line) + ": negative confidence",
                              line);
      sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-6)
      throw DataFormatError("evidence CSV row " + std::to_string(line) +
                            ": confidences sum to " + std::to_string(sum), line);
    for (double& v : e.p) v /= sum;  // exact renormalization
    if (groups.find(row[0]) == groups.end()) order.push_back(row[0]);
    groups[row[0]].push_back(std::move(e));
  }

  std::vector<std::string> methods;
  if (method == "all") {
    methods = {"mv", "pa", "dst", "er"};
    if (!lf_dir.empty()) methods.push_back("lf");
  } else {
    methods = {method};
  }

  Tensor lf_w, lf_b;
  if (std::find(methods.begin(), methods.end(), "lf") != methods.end()) {
    if (lf_dir.empty()) throw ConfigError("method lf needs --lf-weights <checkpoint dir>");
    lf_w = train::load_checkpoint_tensor(lf_dir, "lf.w");
    lf_b = train::load_checkpoint_tensor(lf_dir, "lf.b");
  }

  json records = json::array();
  for (const auto& id : order) {
    const auto& es = groups[id];
    for (const auto& mname : methods) {
      std::vector<double> joint;
      if (mname == "mv") {
        const std::size_t cls = fusion::majority_vote(es);
        joint.assign(n_classes, 0.0);
        joint[cls] = 1.0;
      } else if (mname == "pa") {
        joint = fusion::prob_average(es);
      } else if (mname == "dst") {
        joint = fusion::ds_combine(es);
      } else if (mname == "er") {
        joint = fusion::er_combine(es);
      } else if (mname == "lf") {
        joint = fusion::learned_fusion(es, lf_w, lf_b);
      } else {
        throw ConfigError("unknown fusion method '" + mname + "'");
      }
      json rec;
      rec["sample_id"] = id;
      rec["method"] = mname;
      rec["p"] = joint;
      rec["decision"] = fusion::decide(joint);
      records.push_back(std::move(rec));
    }
  }
  const std::string payload = records.dump(2) + "\n";
  io::write_file((fs::path(args.out_dir) / "fused.json").string(), payload);
  std::cout << payload;
  return 0;
}

int cmd_ablate(const CommonArgs& args) {
  const config::KeyValues kv = effective_config(args);
  const std::string hash = write_provenance(args.out_dir, kv);

  ablate::BenchmarkConfig cfg;
  cfg.synth = synth_from(kv, seed_of(kv));
  cfg.train = train_from(kv, seed_of(kv));
  cfg.backbone = backbone_from(kv);
  cfg.attention = attention_from(kv);
  cfg.tokens = config::get_u64(kv, "model.tokens", cfg.tokens);
  cfg.classes = config::get_u64(kv, "model.classes", cfg.classes);
  cfg.model_seed = seed_of(kv);
  cfg.threads = config::get_u64(kv, "ablate.threads", cfg.threads);
  cfg.run_modality = config::get_bool(kv, "ablate.modality", true);
  cfg.run_mechanism = config::get_bool(kv, "ablate.mechanism", true);
  cfg.run_fusion = config::get_bool(kv, "ablate.fusion", true);

  const ablate::AblationReport report = ablate::run_ablation(cfg, &std::cerr);
  const std::string text = ablate::format_text(report);
  io::write_file((fs::path(args.out_dir) / "ablation.txt").string(), text);
  io::write_file((fs::path(args.out_dir) / "ablation.json").string(),
                 ablate::to_json_string(report, hash));
  if (report.lf_w.defined()) {
    train::CheckpointMeta meta;
    meta.seed = cfg.model_seed;
    meta.config_hash = hash;
    train::save_checkpoint((fs::path(args.out_dir) / "lf").string(),
                           {{"lf.w", report.lf_w}, {"lf.b", report.lf_b}}, meta);
  }
  std::cout << text;
  return 0;
}

int cmd_verify(const CommonArgs& args) {
  const config::KeyValues kv = effective_config(args);
  write_provenance(args.out_dir, kv);
  const auto results = verify::run_all(seed_of(kv));
  int failures = 0;
  std::ostringstream os;
  for (const auto& r : results) {
    os << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << " (" << r.detail << ")\n";
    if (!r.pass) ++failures;
  }
  os << (failures == 0 ? "all checks passed\n"
                       : std::to_string(failures) + " check(s) failed\n");
  std::cout << os.str();
  io::write_file((fs::path(args.out_dir) / "verify.txt").string(), os.str());
  return failures;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mainet: multimodal fusion engine (unified backbone + attention interaction + "
               "evidential decision fusion)"};
  app.require_subcommand(1);

  CommonArgs gen_args, prep_args, train_args, eval_args, fuse_args, ablate_args, verify_args;
  std::uint64_t gen_n = 0;
  std::string prep_input, train_data, train_resume, eval_data, eval_ckpt;
  std::string fuse_csv, fuse_method = "all", fuse_lf;

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic trimodal dataset");
  add_common(gen, gen_args);
  gen->add_option("--n", gen_n, "sample count (shortcut for --set synth.n=N)");

  CLI::App* prep = app.add_subcommand("prep", "window a raw recording into dataset records");
  add_common(prep, prep_args);
  prep->add_option("--input", prep_input, "recording directory (frames/, audio.wav, wave.csv, labels.csv)")
      ->required();

  CLI::App* tr = app.add_subcommand("train", "train a model on a dataset directory");
  add_common(tr, train_args);
  tr->add_option("--data", train_data, "dataset directory from gen/prep")->required();
  tr->add_option("--resume", train_resume, "checkpoint directory to resume from");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint and emit a metrics report");
  add_common(ev, eval_args);
  ev->add_option("--data", eval_data, "dataset directory")->required();
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint directory (train --out)")->required();

  CLI::App* fu = app.add_subcommand("fuse", "fuse an evidence CSV into joint decisions");
  add_common(fu, fuse_args);
  fu->add_option("--evidence", fuse_csv, "CSV: sample_id,modality_id,p_1..p_N,w,r")->required();
  fu->add_option("--method", fuse_method, "mv, pa, lf, dst, er or all")
      ->check(CLI::IsMember({"mv", "pa", "lf", "dst", "er", "all"}));
  fu->add_option("--lf-weights", fuse_lf, "checkpoint dir holding lf.w / lf.b");

  CLI::App* ab = app.add_subcommand("ablate", "run the modality/mechanism/fusion comparison suite");
  add_common(ab, ablate_args);

  CLI::App* ve = app.add_subcommand("verify", "run the oracle self-check suite");
  add_common(ve, verify_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      if (gen_n > 0) gen_args.overrides.push_back("synth.n=" + std::to_string(gen_n));
      return cmd_gen(gen_args);
    }
    if (prep->parsed()) return cmd_prep(prep_args, prep_input);
    if (tr->parsed()) return cmd_train(train_args, train_data, train_resume);
    if (ev->parsed()) return cmd_eval(eval_args, eval_data, eval_ckpt);
    if (fu->parsed()) return cmd_fuse(fuse_args, fuse_csv, fuse_method, fuse_lf);
    if (ab->parsed()) return cmd_ablate(ablate_args);
    if (ve->parsed()) return cmd_verify(verify_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const MissingInputError& e) {
    std::cerr << "missing input: " << e.what() << "\n";
    return 3;
  } catch (const DataFormatError& e) {
    std::cerr << "malformed data: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
