#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nesla/parameters.hpp"
#include "nesla/rng.hpp"
#include "nesla/tensor.hpp"

namespace nesla {

struct LAConfig {
  std::size_t window_radius = 1;  // K
  std::size_t attn_dim = 8;       // query/key width
  std::size_t n_classes = 2;      // 0 = bonafide, 1 = spoof for detection
};

// Attention projections are shared by every block position j.
struct LAParams {
  Tensor w_query;  // [attn_dim x width]
  Tensor w_key;    // [attn_dim x width]
  Tensor w_value;  // [width x width]
  Tensor w_out;    // [width x width]; all zeros turns the head into the plain concat head
  Tensor fc_weight;  // [n_classes x C]
  Tensor fc_bias;    // [n_classes]
};

LAParams init_la_params(const LAConfig& cfg, std::size_t subset_width,
                        std::size_t channels, Rng& rng);
void register_parameters(const LAParams& p, const std::string& prefix,
                         ParameterMap& out, bool include_attention = true);

// Indices k with max(0, j-K) <= k <= min(J-1, j+K), ascending (0-based j).
std::vector<std::size_t> neighborhood(std::size_t j, std::size_t J, std::size_t K);

struct AttentionResult {
  Tensor output;   // [width x T']
  Tensor weights;  // [neighbors x T'], each column sums to 1
};

// Per frame t: q = Wq h_j[:,t], k_m = Wk n_m[:,t], v_m = Wv n_m[:,t],
// alpha = softmax_m(q.k_m / sqrt(attn_dim)), y[:,t] = Wo sum_m alpha_m v_m.
AttentionResult local_attention(const Tensor& query_block,
                                std::span<const Tensor> neighbors,
                                const LAParams& params);

// y_j for every block over its clamped window; keys and values are projected
// once per block.
std::vector<Tensor> local_attention_sweep(std::span<const Tensor> blocks,
                                          const LAParams& params, std::size_t K);

// concat(h) -> mean over time -> FC. The head without local attention.
Tensor concat_pool_head(std::span<const Tensor> blocks, const LAParams& params);

// o_j = h_j + y_j, then concat -> mean over time -> FC.
Tensor la_head_forward(std::span<const Tensor> blocks, const LAParams& params,
                       const LAConfig& cfg);

// logit(bonafide) - logit(spoof); higher means more bonafide.
double detection_score(const Tensor& logits);

}  // namespace nesla
