#include "nesla/nes_block.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nesla {

std::size_t NesConfig::se_hidden() const {
  return std::max<std::size_t>(1, subset_width() / std::max<std::size_t>(1, se_reduction));
}

void NesConfig::validate() const {
  if (splits == 0 || channels == 0 || channels % splits != 0) {
    throw std::invalid_argument("nes block: J=" + std::to_string(splits) +
                                " must divide C=" + std::to_string(channels));
  }
  if (ws_branches == 0) throw std::invalid_argument("nes block: ws_branches must be >= 1");
  if (se_reduction == 0) throw std::invalid_argument("nes block: se_reduction must be >= 1");
  if (kernel_size % 2 == 0) throw std::invalid_argument("nes block: kernel_size must be odd");
}

SqueezeExciteParams init_squeeze_excite(std::size_t width, std::size_t hidden,
                                        Rng& rng, double stddev) {
  return {random_tensor({hidden, width}, rng, stddev),
          Tensor::zeros({hidden}, true),
          random_tensor({width, hidden}, rng, stddev),
          Tensor::zeros({width}, true)};
}

NesBlockParams init_nes_block(const NesConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto w = cfg.subset_width();
  const auto k = cfg.kernel_size;
  const double conv_std = 1.0 / std::sqrt(static_cast<double>(w * k));
  NesBlockParams p;
  for (std::size_t j = 0; j < cfg.splits; ++j) {
    SubsetParams s;
    s.pre_kernel = random_tensor({w, w, k}, rng, conv_std);
    s.pre_bias = Tensor::zeros({w}, true);
    for (std::size_t b = 0; b < cfg.ws_branches; ++b) {
      s.branch_kernels.push_back(random_tensor({w, w, k}, rng, conv_std));
      s.branch_biases.push_back(Tensor::zeros({w}, true));
    }
    s.branch_logits = Tensor::zeros({cfg.ws_branches}, true);
    s.post_kernel = random_tensor({w, w, k}, rng, conv_std);
    s.post_bias = Tensor::zeros({w}, true);
    s.se = init_squeeze_excite(w, cfg.se_hidden(), rng,
                               1.0 / std::sqrt(static_cast<double>(w)));
    p.subsets.push_back(std::move(s));
  }
  return p;
}

NesBlockParams zero_nes_block(const NesConfig& cfg) {
  cfg.validate();
  const auto w = cfg.subset_width();
  const auto k = cfg.kernel_size;
  const auto hidden = cfg.se_hidden();
  NesBlockParams p;
  for (std::size_t j = 0; j < cfg.splits; ++j) {
    SubsetParams s;
    s.pre_kernel = Tensor::zeros({w, w, k}, true);
    s.pre_bias = Tensor::zeros({w}, true);
    for (std::size_t b = 0; b < cfg.ws_branches; ++b) {
      s.branch_kernels.push_back(Tensor::zeros({w, w, k}, true));
      s.branch_biases.push_back(Tensor::zeros({w}, true));
    }
    s.branch_logits = Tensor::zeros({cfg.ws_branches}, true);
    s.post_kernel = Tensor::zeros({w, w, k}, true);
    s.post_bias = Tensor::zeros({w}, true);
    s.se = {Tensor::zeros({hidden, w}, true), Tensor::zeros({hidden}, true),
            Tensor::zeros({w, hidden}, true), Tensor::zeros({w}, true)};
    p.subsets.push_back(std::move(s));
  }
  return p;
}

void register_parameters(const SqueezeExciteParams& p, const std::string& prefix,
                         ParameterMap& out) {
  out.add(prefix + ".w1", p.w1);
  out.add(prefix + ".b1", p.b1);
  out.add(prefix + ".w2", p.w2);
  out.add(prefix + ".b2", p.b2);
}

void register_parameters(const NesBlockParams& p, const std::string& prefix,
                         ParameterMap& out) {
  for (std::size_t j = 0; j < p.subsets.size(); ++j) {
    const auto& s = p.subsets[j];
    const auto base = prefix + ".subset" + std::to_string(j);
    out.add(base + ".pre.kernel", s.pre_kernel);
    out.add(base + ".pre.bias", s.pre_bias);
    for (std::size_t b = 0; b < s.branch_kernels.size(); ++b) {
      out.add(base + ".ws.branch" + std::to_string(b) + ".kernel", s.branch_kernels[b]);
      out.add(base + ".ws.branch" + std::to_string(b) + ".bias", s.branch_biases[b]);
    }
    out.add(base + ".ws.logits", s.branch_logits);
    out.add(base + ".post.kernel", s.post_kernel);
    out.add(base + ".post.bias", s.post_bias);
    register_parameters(s.se, base + ".se", out);
  }
}

Tensor weighted_summation(std::span<const Tensor> branches, const Tensor& weights) {
  if (branches.empty()) throw ShapeError("weighted_summation: no branches");
  if (weights.rank() != 1 || weights.extent(0) != branches.size()) {
    throw ShapeError("weighted_summation: " + std::to_string(branches.size()) +
                     " branches but weights " + shape_to_string(weights.shape()));
  }
  const Tensor mix = softmax(weights);
  Tensor out;
  for (std::size_t b = 0; b < branches.size(); ++b) {
    if (branches[b].shape() != branches.front().shape()) {
      throw ShapeError("weighted_summation: branch shapes differ: " +
                       shape_to_string(branches.front().shape()) + " vs " +
                       shape_to_string(branches[b].shape()));
    }
    Tensor term = scale_by(branches[b], pick(mix, b));
    out = out.defined() ? add(out, term) : term;
  }
  return out;
}

Tensor squeeze_excite(const Tensor& x, const SqueezeExciteParams& params) {
  const Tensor pooled = global_avg_pool_time(x);
  const Tensor hidden = relu(linear(params.w1, pooled, params.b1));
  const Tensor gate = sigmoid(linear(params.w2, hidden, params.b2));
  return scale_channels(x, gate);
}

SubsetActivations nes_block_forward(const Tensor& x, const NesBlockParams& params,
                                    const NesConfig& cfg) {
  cfg.validate();
  if (x.rank() != 2 || x.extent(0) != cfg.channels) {
    throw ShapeError("nes_block_forward: expected [" + std::to_string(cfg.channels) +
                     " x T'] input, got " + shape_to_string(x.shape()));
  }
  if (params.subsets.size() != cfg.splits) {
    throw ShapeError("nes_block_forward: parameters hold " +
                     std::to_string(params.subsets.size()) + " subsets, config J=" +
                     std::to_string(cfg.splits));
  }

  SubsetActivations act;
  act.x = split_channels(x, cfg.splits);
  for (std::size_t j = 0; j < cfg.splits; ++j) {
    const auto& p = params.subsets[j];
    const Tensor in = j == 0 ? act.x[j] : add(act.x[j], act.z[j - 1]);
    const Tensor u = conv1d(in, p.pre_kernel, p.pre_bias);
    std::vector<Tensor> branches;
    branches.reserve(p.branch_kernels.size());
    for (std::size_t b = 0; b < p.branch_kernels.size(); ++b)
      branches.push_back(conv1d(u, p.branch_kernels[b], p.branch_biases[b], b + 1));
    act.z.push_back(weighted_summation(branches, p.branch_logits));
    const Tensor refined = conv1d(act.z[j], p.post_kernel, p.post_bias);
    act.h.push_back(add(act.x[j], squeeze_excite(refined, p.se)));
  }
  return act;
}

}  // namespace nesla
