#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mainet/tape.hpp"
#include "mainet/tensor.hpp"

namespace mainet::backbone {

struct BackboneConfig {
  std::array<std::size_t, 4> stage_channels{32, 64, 128, 256};
  std::size_t large_kernel = 13;
  // (kernel, dilation) pairs; every branch footprint d*(k-1)+1 must fit
  // inside large_kernel.
  std::vector<std::pair<std::size_t, std::size_t>> dilated_branches{{13, 1}, {5, 2}, {3, 3}};
  std::size_t blocks_per_stage = 2;
  std::size_t se_reduction = 4;
  std::size_t input_size = 224;  // expected H == W of input maps
  std::size_t feature_dim = 512;

  void validate() const;
};

/// Squeeze-and-Excitation: y = x * sigmoid(W2 relu(W1 gap(x))), per channel.
struct SeBlock {
  Tensor w1, b1;  // [c, c/r], [c/r]
  Tensor w2, b2;  // [c/r, c], [c]

  static SeBlock init(std::size_t channels, std::size_t reduction, std::uint64_t seed);
  static SeBlock zeros(std::size_t channels, std::size_t reduction);
  Tensor forward(const Tensor& x, GradTape* tape = nullptr) const;
};

struct DilatedBranch {
  std::size_t kernel = 0;
  std::size_t dilation = 1;
  Tensor weight;  // [c,1,k,k], bias-free
};

/// Multi-branch depthwise convolution: the training-time form runs every
/// dilated branch and sums; `merged_kernel` zero-interleaves the taps onto
/// the large-kernel grid, giving a single equivalent depthwise kernel.
struct DilatedReparamConv {
  std::size_t channels = 0;
  std::size_t large_kernel = 0;
  std::vector<DilatedBranch> branches;

  static DilatedReparamConv init(std::size_t channels, std::size_t large_kernel,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& specs,
                                 std::uint64_t seed);
  static DilatedReparamConv zeros(std::size_t channels, std::size_t large_kernel,
                                  const std::vector<std::pair<std::size_t, std::size_t>>& specs);

  Tensor forward(const Tensor& x, GradTape* tape = nullptr) const;
  /// Single [c,1,K,K] kernel with conv(x, merged) == forward(x) for all x.
  Tensor merged_kernel() const;
  Tensor forward_merged(const Tensor& x) const;
};

/// Residual block: x + pointwise_mlp(se(dilated_reparam(x))).
struct Block {
  DilatedReparamConv dw;
  SeBlock se;
  Tensor pw1, pw1_b;  // 1x1 conv weights [c,c,1,1], bias [c]
  Tensor pw2, pw2_b;

  Tensor forward(const Tensor& x, GradTape* tape = nullptr) const;
};

struct StageOutputs {
  std::array<Tensor, 4> f;  // F0..F3, spatial dims halving per stage
};

struct Backbone {
  BackboneConfig cfg;
  std::size_t in_channels = 3;
  Tensor stem_w, stem_b;  // [c0, in, 3, 3]
  std::array<std::vector<Block>, 4> stages;
  std::array<Tensor, 3> down_w;  // stride-2 3x3 convs between stages
  std::array<Tensor, 3> down_b;

  static Backbone init(const BackboneConfig& cfg, std::size_t in_channels, std::uint64_t seed);
  static Backbone zeros(const BackboneConfig& cfg, std::size_t in_channels);

  StageOutputs forward_stages(const Tensor& map, GradTape* tape = nullptr) const;
  void named_parameters(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor>>& out) const;
};

/// Pools each stage output to a channel vector, projects it to feature_dim/4
/// and concatenates the four projections into one feature vector.
struct StageFuser {
  std::array<Tensor, 4> w;  // [c_i, feature_dim/4]
  std::array<Tensor, 4> b;

  static StageFuser init(const BackboneConfig& cfg, std::uint64_t seed);
  static StageFuser zeros(const BackboneConfig& cfg);

  Tensor fuse(const StageOutputs& s, GradTape* tape = nullptr) const;
  void named_parameters(const std::string& prefix,
                        std::vector<std::pair<std::string, Tensor>>& out) const;
};

}  // namespace mainet::backbone
