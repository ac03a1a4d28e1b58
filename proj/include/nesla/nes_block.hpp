#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nesla/parameters.hpp"
#include "nesla/rng.hpp"
#include "nesla/tensor.hpp"

namespace nesla {

struct NesConfig {
  std::size_t channels = 64;     // C
  std::size_t splits = 8;        // J, must divide C
  std::size_t ws_branches = 2;   // parallel dilated convs mixed by WS
  std::size_t se_reduction = 4;  // SE bottleneck is (C/J)/r, at least 1
  std::size_t kernel_size = 3;   // odd

  std::size_t subset_width() const { return channels / splits; }
  std::size_t se_hidden() const;
  // Throws std::invalid_argument when the fields are inconsistent.
  void validate() const;
};

struct SqueezeExciteParams {
  Tensor w1;  // [hidden x width]
  Tensor b1;  // [hidden]
  Tensor w2;  // [width x hidden]
  Tensor b2;  // [width]
};

// Parameters owned by one channel subset j. Convolutions are not shared
// across subsets.
struct SubsetParams {
  Tensor pre_kernel, pre_bias;
  std::vector<Tensor> branch_kernels, branch_biases;  // branch b uses dilation b+1
  Tensor branch_logits;                               // [ws_branches]
  Tensor post_kernel, post_bias;
  SqueezeExciteParams se;
};

struct NesBlockParams {
  std::vector<SubsetParams> subsets;
};

struct SubsetActivations {
  std::vector<Tensor> x;  // input subsets
  std::vector<Tensor> z;  // WS outputs
  std::vector<Tensor> h;  // refined outputs
};

SqueezeExciteParams init_squeeze_excite(std::size_t width, std::size_t hidden,
                                        Rng& rng, double stddev);
NesBlockParams init_nes_block(const NesConfig& cfg, Rng& rng);
// All-zero parameters of the right shapes (branch logits included).
NesBlockParams zero_nes_block(const NesConfig& cfg);

void register_parameters(const SqueezeExciteParams& p, const std::string& prefix,
                         ParameterMap& out);
void register_parameters(const NesBlockParams& p, const std::string& prefix,
                         ParameterMap& out);

// sum_b softmax(weights)_b * branches[b]
Tensor weighted_summation(std::span<const Tensor> branches, const Tensor& weights);

// x * sigmoid(W2 relu(W1 mean_t(x) + b1) + b2), gating each channel.
Tensor squeeze_excite(const Tensor& x, const SqueezeExciteParams& params);

// Nested block over x [C x T']:
//   z_1 = WS(Conv(x_1)),  z_j = WS(Conv(x_j + z_{j-1})) for j > 1
//   h_j = x_j + SE(Conv(z_j))
SubsetActivations nes_block_forward(const Tensor& x, const NesBlockParams& params,
                                    const NesConfig& cfg);

}  // namespace nesla
