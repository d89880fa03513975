#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mainet/arpm.hpp"
#include "mainet/backbone.hpp"
#include "mainet/data.hpp"
#include "mainet/fusion.hpp"
#include "mainet/preprocess.hpp"
#include "mainet/tape.hpp"

namespace mainet::model {

enum class Modality : std::size_t { image = 0, audio = 1, wave = 2 };

const char* modality_name(Modality m);
std::size_t modality_channels(Modality m);

/// How the used modalities are combined into a decision.
enum class FusionMode {
  single,       // one modality, head on its tokens
  dual_dafn2,   // two modalities fused by DAFN-2, one head
  tri_concat,   // three features concatenated into a single linear head
  tri_arpm_er,  // full pipeline: ARPM + per-modality heads + ER joint
  tri_arpm_single,  // ARPM rotation for `primary` only, head on its output
  tri_heads_er,     // per-modality heads without interaction, fused by ER
};

const char* fusion_mode_name(FusionMode m);

struct ModelConfig {
  backbone::BackboneConfig backbone;
  arpm::AttentionConfig attention;
  std::size_t tokens = 4;
  std::size_t classes = 3;
  FusionMode mode = FusionMode::tri_arpm_er;
  std::vector<Modality> modalities{Modality::image, Modality::audio, Modality::wave};
  Modality primary = Modality::image;  // tri_arpm_single only
  std::uint64_t seed = 1;

  void validate() const;
};

struct ModelOutput {
  std::vector<fusion::EvidenceT> evidences;  // one per used modality (ER modes)
  Tensor joint;                              // final class distribution [N]
};

struct Model {
  ModelConfig cfg;
  std::vector<backbone::Backbone> backbones;  // parallel to cfg.modalities
  std::vector<backbone::StageFuser> fusers;
  std::vector<arpm::Tokenizer> tokenizers;
  std::optional<preprocess::WaveEmbedding> wave_embed;  // when wave is used
  std::optional<arpm::ArpmParams> arpm_params;
  std::optional<arpm::Dafn2Params> dual_params;
  std::vector<fusion::Head> heads;
  Tensor concat_w, concat_b;  // tri_concat head

  static Model init(const ModelConfig& cfg);

  ModelOutput forward(const data::ModalSample& sample, GradTape* tape = nullptr) const;

  /// Training loss: cross-entropy on the joint plus, in ER modes, the
  /// per-modality head losses (so weights/reliabilities receive gradient).
  Tensor loss(const ModelOutput& out, int label, GradTape* tape = nullptr) const;

  std::size_t predict(const data::ModalSample& sample) const;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
};

}  // namespace mainet::model
