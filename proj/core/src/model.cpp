#include "mainet/model.hpp"

#include <cmath>

#include "mainet/error.hpp"
#include "mainet/ops.hpp"
#include "mainet/rng.hpp"

namespace mainet::model {

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::image: return "image";
    case Modality::audio: return "audio";
    case Modality::wave: return "wave";
  }
  return "?";
}

std::size_t modality_channels(Modality m) {
  switch (m) {
    case Modality::image: return 3;
    case Modality::audio: return 2;
    case Modality::wave: return 1;
  }
  return 0;
}

const char* fusion_mode_name(FusionMode m) {
  switch (m) {
    case FusionMode::single: return "single";
    case FusionMode::dual_dafn2: return "dual_dafn2";
    case FusionMode::tri_concat: return "tri_concat";
    case FusionMode::tri_arpm_er: return "tri_arpm_er";
    case FusionMode::tri_arpm_single: return "tri_arpm_single";
    case FusionMode::tri_heads_er: return "tri_heads_er";
  }
  return "?";
}

void ModelConfig::validate() const {
  backbone.validate();
  attention.validate();
  if (classes < 2) throw ConfigError("model: at least two classes required");
  if (modalities.empty() || modalities.size() > 3)
    throw ConfigError("model: 1..3 modalities required");
  for (std::size_t i = 0; i < modalities.size(); ++i)
    for (std::size_t j = i + 1; j < modalities.size(); ++j)
      if (modalities[i] == modalities[j]) throw ConfigError("model: duplicate modality");
  const std::size_t want = mode == FusionMode::single        ? 1
                           : mode == FusionMode::dual_dafn2 ? 2
                                                            : 3;
  if (modalities.size() != want)
    throw ConfigError(std::string("model: mode ") + fusion_mode_name(mode) + " needs " +
                      std::to_string(want) + " modalities, got " +
                      std::to_string(modalities.size()));
  if (backbone.feature_dim % tokens != 0)
    throw ConfigError("model: feature_dim must divide into the token count");
}

Model Model::init(const ModelConfig& cfg) {
  cfg.validate();
  Model m;
  m.cfg = cfg;

  bool uses_wave = false;
  for (std::size_t i = 0; i < cfg.modalities.size(); ++i) {
    const Modality mod = cfg.modalities[i];
    if (mod == Modality::wave) uses_wave = true;
    const std::uint64_t mseed = rng::mix(cfg.seed, 1000 + static_cast<std::uint64_t>(mod));
    m.backbones.push_back(
        backbone::Backbone::init(cfg.backbone, modality_channels(mod), rng::mix(mseed, 1)));
    m.fusers.push_back(backbone::StageFuser::init(cfg.backbone, rng::mix(mseed, 2)));
    m.tokenizers.push_back(
        arpm::Tokenizer::init(cfg.backbone.feature_dim, cfg.tokens, cfg.attention, rng::mix(mseed, 3)));
  }
  if (uses_wave)
    m.wave_embed = preprocess::WaveEmbedding::init(cfg.backbone.input_size, rng::mix(cfg.seed, 4));

  switch (cfg.mode) {
    case FusionMode::single:
      m.heads.push_back(fusion::Head::init(cfg.attention.model_width, cfg.classes,
                                           rng::mix(cfg.seed, 50)));
      break;
    case FusionMode::dual_dafn2:
      m.dual_params = arpm::Dafn2Params::init(cfg.attention, rng::mix(cfg.seed, 60));
      m.heads.push_back(fusion::Head::init(cfg.attention.model_width, cfg.classes,
                                           rng::mix(cfg.seed, 61)));
      break;
    case FusionMode::tri_concat: {
      rng::Xoshiro256 gen(rng::mix(cfg.seed, 70));
      const std::size_t in = 3 * cfg.backbone.feature_dim;
      m.concat_w = Tensor({in, cfg.classes});
      const double s = std::sqrt(1.0 / static_cast<double>(in));
      for (auto& v : m.concat_w.mutable_data()) v = gen.normal() * s;
      m.concat_w.set_requires_grad(true);
      m.concat_b = Tensor({cfg.classes});
      m.concat_b.set_requires_grad(true);
      break;
    }
    case FusionMode::tri_arpm_er:
      m.arpm_params = arpm::ArpmParams::init(cfg.attention, rng::mix(cfg.seed, 80));
      for (std::size_t i = 0; i < 3; ++i)
        m.heads.push_back(fusion::Head::init(cfg.attention.model_width, cfg.classes,
                                             rng::mix(cfg.seed, 81 + i)));
      break;
    case FusionMode::tri_arpm_single:
      m.arpm_params = arpm::ArpmParams::init(cfg.attention, rng::mix(cfg.seed, 80));
      m.heads.push_back(fusion::Head::init(cfg.attention.model_width, cfg.classes,
                                           rng::mix(cfg.seed, 85)));
      break;
    case FusionMode::tri_heads_er:
      for (std::size_t i = 0; i < 3; ++i)
        m.heads.push_back(fusion::Head::init(cfg.attention.model_width, cfg.classes,
                                             rng::mix(cfg.seed, 91 + i)));
      break;
  }
  return m;
}

namespace {

const Tensor& map_for(const data::ModalSample& sample, Modality mod) {
  switch (mod) {
    case Modality::image: return sample.image_map;
    case Modality::audio: return sample.audio_map;
    case Modality::wave: break;
  }
  if (!sample.wave_map)
    throw ShapeError("model: sample has no wave map (raw wave needs the learned embedding path)");
  return *sample.wave_map;
}

}  // namespace

ModelOutput Model::forward(const data::ModalSample& sample, GradTape* tape) const {
  // per-modality feature extraction
  std::vector<Tensor> features;  // [feature_dim] each
  std::vector<Tensor> tokens;    // [L, d_m] each
  for (std::size_t i = 0; i < cfg.modalities.size(); ++i) {
    const Modality mod = cfg.modalities[i];
    Tensor map;
    if (mod == Modality::wave && !sample.wave_map) {
      if (!sample.wave_raw) throw ShapeError("model: sample carries neither wave map nor raw wave");
      preprocess::WaveMapConfig wm;
      wm.out_h = cfg.backbone.input_size;
      wm.out_w = cfg.backbone.input_size;
      map = preprocess::wave_to_map(*sample.wave_raw, *wave_embed, wm, tape);
    } else {
      map = map_for(sample, mod);
    }
    const backbone::StageOutputs stages = backbones[i].forward_stages(map, tape);
    Tensor feature = fusers[i].fuse(stages, tape);
    tokens.push_back(tokenizers[i].tokenize(feature, tape));
    features.push_back(std::move(feature));
  }

  ModelOutput out;
  switch (cfg.mode) {
    case FusionMode::single: {
      const fusion::EvidenceT e = heads[0].forward(tokens[0], tape);
      out.joint = e.p;
      out.evidences.push_back(e);
      break;
    }
    case FusionMode::dual_dafn2: {
      // residually fused, like the trimodal path: the head starts from the
      // sum of both token sets and DAFN-2 learns the correction
      const Tensor mixed = arpm::dafn2(tokens[0], tokens[1], *dual_params, cfg.attention, tape);
      const Tensor fused = ops::add(ops::add(tokens[0], tokens[1], tape), mixed, tape);
      const fusion::EvidenceT e = heads[0].forward(fused, tape);
      out.joint = e.p;
      out.evidences.push_back(e);
      break;
    }
    case FusionMode::tri_concat: {
      const Tensor joined = ops::concat(features, 0, tape);
      out.joint = ops::softmax(ops::linear(joined, concat_w, concat_b, tape), 0, tape);
      break;
    }
    case FusionMode::tri_arpm_er: {
      const std::array<Tensor, 3> enhanced =
          arpm::arpm_forward({tokens[0], tokens[1], tokens[2]}, *arpm_params, tape);
      for (std::size_t i = 0; i < 3; ++i)
        out.evidences.push_back(heads[i].forward(enhanced[i], tape));
      out.joint = fusion::er_combine_t(out.evidences, tape);
      break;
    }
    case FusionMode::tri_arpm_single: {
      const std::size_t primary = static_cast<std::size_t>(cfg.primary);
      const Tensor enhanced =
          arpm::arpm_enhance({tokens[0], tokens[1], tokens[2]}, primary, *arpm_params, tape);
      const fusion::EvidenceT e = heads[0].forward(enhanced, tape);
      out.joint = e.p;
      out.evidences.push_back(e);
      break;
    }
    case FusionMode::tri_heads_er: {
      for (std::size_t i = 0; i < 3; ++i)
        out.evidences.push_back(heads[i].forward(tokens[i], tape));
      out.joint = fusion::er_combine_t(out.evidences, tape);
      break;
    }
  }
  return out;
}

Tensor Model::loss(const ModelOutput& out, int label, GradTape* tape) const {
  const auto lbl = static_cast<std::size_t>(label);
  Tensor total = ops::cross_entropy(out.joint, lbl, tape);
  if (cfg.mode == FusionMode::tri_arpm_er || cfg.mode == FusionMode::tri_heads_er)
    for (const auto& e : out.evidences)
      total = ops::add(total, ops::cross_entropy(e.p, lbl, tape), tape);
  return total;
}

std::size_t Model::predict(const data::ModalSample& sample) const {
  const ModelOutput out = forward(sample, nullptr);
  return fusion::decide(out.joint.data());
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> params;
  for (std::size_t i = 0; i < cfg.modalities.size(); ++i) {
    const std::string base = modality_name(cfg.modalities[i]);
    backbones[i].named_parameters(base + ".backbone", params);
    fusers[i].named_parameters(base + ".fuser", params);
    tokenizers[i].named_parameters(base + ".tokenizer", params);
  }
  if (wave_embed) {
    params.emplace_back("wave.embed.w", wave_embed->weight);
    params.emplace_back("wave.embed.b", wave_embed->bias);
  }
  if (arpm_params) arpm_params->named_parameters("arpm", params);
  if (dual_params) dual_params->named_parameters("dafn2", params);
  for (std::size_t i = 0; i < heads.size(); ++i)
    heads[i].named_parameters("head" + std::to_string(i), params);
  if (concat_w.defined()) {
    params.emplace_back("concat_head.w", concat_w);
    params.emplace_back("concat_head.b", concat_b);
  }
  return params;
}

}  // namespace mainet::model
