#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace poseforge {

struct ModelConfig {
  std::size_t d = 64;          // atom embedding width
  std::size_t heads = 8;       // attention heads; also the pair channel count
  std::size_t d_pair = 8;      // width of the initial 2D/3D pair features
  std::size_t encoder_layers = 4;
  std::size_t binding_layers = 2;
  std::size_t structure_layers = 4;
  int spd_max = 15;
  std::size_t kernels = 16;    // Gaussian basis size
  double kernel_mu_max = 10.0;
  double kernel_sigma = 1.0;
  bool gaussian_verbatim = true;
  std::size_t gpe_axis_width = 16;  // sinusoid slots per coordinate axis
  std::size_t mlp_ratio = 2;
  std::size_t head_hidden = 32;     // distance head width
  std::size_t conf_hidden = 32;
  double layer_norm_eps = 1e-5;
  double pair_gain_init = 1.0;
  double intra_distance_init = 3.0;  // initial bias of the distance heads (A)
  double inter_distance_init = 5.0;
  double coord_eps = 1e-6;
  double score_scale_init = 1.0;     // initial weight of the score output layer

  // Ablation switches.
  bool use_gpe = true;
  bool use_2d = true;
  bool use_talking_head = true;
  bool talking_head_pocket = false;
  bool end_to_end_decode = true;

  std::uint64_t seed = 1;

  // Throws ContractError when widths or layer counts are inconsistent.
  void validate() const;

  // Presets.
  static ModelConfig desk();
  static ModelConfig large();
  static ModelConfig toy();  // gradient-check scale
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace poseforge
