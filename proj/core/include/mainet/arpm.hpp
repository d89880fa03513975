#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mainet/tape.hpp"
#include "mainet/tensor.hpp"

namespace mainet::arpm {

struct AttentionConfig {
  std::size_t model_width = 256;  // d_m
  std::size_t heads = 4;          // h

  std::size_t head_width() const { return model_width / heads; }  // d_k
  void validate() const;
};

/// Per-head projection matrices plus the output projection. No biases and no
/// positional encoding: tokens are channel groups, not temporal positions.
struct AttentionParams {
  std::vector<Tensor> wq, wk, wv;  // h matrices of [d_m, d_k]
  Tensor wo;                       // [h*d_k, d_m]

  static AttentionParams init(const AttentionConfig& cfg, std::uint64_t seed);
  static AttentionParams zeros(const AttentionConfig& cfg);
  void named_parameters(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor>>& out) const;
};

/// Multi-head self-attention over a token sequence [L, d_m]:
/// per head, softmax(Q K^T / sqrt(d_k)) V; heads concatenated, then W_O.
Tensor mhsa(const Tensor& x, const AttentionParams& p, const AttentionConfig& cfg,
            GradTape* tape = nullptr);

/// Multi-head cross-attention: queries from `xq`, keys and values from `xkv`.
/// Output has xq's token count.
Tensor mhca(const Tensor& xq, const Tensor& xkv, const AttentionParams& p,
            const AttentionConfig& cfg, GradTape* tape = nullptr);

/// Channel-attention fusion: concatenate two [L, d_m] features on the channel
/// axis, squeeze over tokens, excite (reduction 4), rescale per channel, and
/// project back to d_m.
struct CafnParams {
  Tensor w1, b1;      // [2d, 2d/4]
  Tensor w2, b2;      // [2d/4, 2d]
  Tensor proj, proj_b;  // [2d, d]

  static CafnParams init(const AttentionConfig& cfg, std::uint64_t seed);
  static CafnParams zeros(const AttentionConfig& cfg);
  void named_parameters(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor>>& out) const;
};

Tensor cafn(const Tensor& fx, const Tensor& fy, const CafnParams& p, const AttentionConfig& cfg,
            GradTape* tape = nullptr);

/// Serial self+cross attention: S = mhsa(aux); C = mhca(S as query, primary
/// as key/value); refined = mhsa(S + C).
struct Dafn1Params {
  AttentionParams self_aux, cross, refine;

  static Dafn1Params init(const AttentionConfig& cfg, std::uint64_t seed);
  static Dafn1Params zeros(const AttentionConfig& cfg);
  void named_parameters(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor>>& out) const;
};

Tensor dafn1(const Tensor& primary, const Tensor& aux, const Dafn1Params& p,
             const AttentionConfig& cfg, GradTape* tape = nullptr);

/// Parallel symmetric cross-attention: the two mixed features alternate as
/// query and key/value, CAFN fuses the two views, self-attention refines.
struct Dafn2Params {
  AttentionParams cross_fwd, cross_rev;
  CafnParams fuse;
  AttentionParams refine;

  static Dafn2Params init(const AttentionConfig& cfg, std::uint64_t seed);
  static Dafn2Params zeros(const AttentionConfig& cfg);
  void named_parameters(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor>>& out) const;
};

Tensor dafn2(const Tensor& f_ab, const Tensor& f_ac, const Dafn2Params& p,
             const AttentionConfig& cfg, GradTape* tape = nullptr);

/// One rotation = one choice of primary modality, with its own parameters:
/// shallow interaction against each auxiliary (DAFN-1 + CAFN, merged by
/// addition), deep interaction by DAFN-2, residual into the primary.
struct RotationParams {
  Dafn1Params dafn1_first, dafn1_second;
  CafnParams cafn_first, cafn_second;
  Dafn2Params deep;

  static RotationParams init(const AttentionConfig& cfg, std::uint64_t seed);
  static RotationParams zeros(const AttentionConfig& cfg);
  void named_parameters(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor>>& out) const;
};

struct ArpmParams {
  AttentionConfig cfg;
  std::array<RotationParams, 3> rotations;  // primary = modality 0, 1, 2

  static ArpmParams init(const AttentionConfig& cfg, std::uint64_t seed);
  static ArpmParams zeros(const AttentionConfig& cfg);
  void named_parameters(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor>>& out) const;
};

/// Enhances one modality using the other two as auxiliaries. `features` holds
/// the three token sequences in modality order; `primary` picks the rotation.
Tensor arpm_enhance(const std::array<Tensor, 3>& features, std::size_t primary,
                    const ArpmParams& p, GradTape* tape = nullptr);

/// Full two-stage mechanism: every modality takes a turn as primary. With all
/// fusion parameters zero this is exactly the identity on all three inputs.
std::array<Tensor, 3> arpm_forward(const std::array<Tensor, 3>& features, const ArpmParams& p,
                                   GradTape* tape = nullptr);

/// Reshapes a flat feature vector into L tokens and projects each token to
/// d_m. feature length must be divisible by the token count.
struct Tokenizer {
  std::size_t tokens = 4;
  Tensor w;  // [feature/L, d_m]
  Tensor b;  // [d_m]

  static Tokenizer init(std::size_t feature_dim, std::size_t tokens, const AttentionConfig& cfg,
                        std::uint64_t seed);
  static Tokenizer zeros(std::size_t feature_dim, std::size_t tokens, const AttentionConfig& cfg);
  Tensor tokenize(const Tensor& feature, GradTape* tape = nullptr) const;
  void named_parameters(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor>>& out) const;
};

}  // namespace mainet::arpm
