#include "nesla/detector.hpp"

#include <stdexcept>

namespace nesla {

std::string to_string(Variant v) {
  return v == Variant::nes2net_x ? "nes2net-x" : "nes2net-la";
}

Variant parse_variant(const std::string& text) {
  if (text == "nes2net-x") return Variant::nes2net_x;
  if (text == "nes2net-la") return Variant::nes2net_la;
  throw std::invalid_argument("unknown model variant '" + text +
                              "' (expected nes2net-x or nes2net-la)");
}

Detector::Detector(DetectorConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.nes.validate();
  if (cfg_.n_blocks == 0) throw std::invalid_argument("detector: n_blocks must be >= 1");
  if (cfg_.la.attn_dim == 0) throw std::invalid_argument("detector: d_attn must be >= 1");
  Rng rng(seed);
  for (std::size_t i = 0; i < cfg_.n_blocks; ++i)
    params_.blocks.push_back(init_nes_block(cfg_.nes, rng));
  params_.head = init_la_params(cfg_.la, cfg_.nes.subset_width(), cfg_.nes.channels, rng);
}

Tensor Detector::logits(const Tensor& features) const {
  Tensor x = features;
  SubsetActivations act;
  for (std::size_t i = 0; i < params_.blocks.size(); ++i) {
    act = nes_block_forward(x, params_.blocks[i], cfg_.nes);
    if (i + 1 < params_.blocks.size()) x = concat_channels(act.h);
  }
  if (cfg_.variant == Variant::nes2net_x) return concat_pool_head(act.h, params_.head);
  return la_head_forward(act.h, params_.head, cfg_.la);
}

double Detector::score(const Tensor& features) const {
  NoGradGuard no_grad;
  return detection_score(logits(features));
}

ParameterMap Detector::all_parameters() const {
  ParameterMap out;
  for (std::size_t i = 0; i < params_.blocks.size(); ++i)
    register_parameters(params_.blocks[i], "block" + std::to_string(i), out);
  register_parameters(params_.head, "head", out, true);
  return out;
}

ParameterMap Detector::trainable_parameters() const {
  ParameterMap out;
  for (std::size_t i = 0; i < params_.blocks.size(); ++i)
    register_parameters(params_.blocks[i], "block" + std::to_string(i), out);
  register_parameters(params_.head, "head", out, cfg_.variant == Variant::nes2net_la);
  return out;
}

}  // namespace nesla
