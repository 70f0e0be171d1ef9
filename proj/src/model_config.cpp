#include "poseforge/model_config.hpp"

#include <nlohmann/json.hpp>

#include "poseforge/errors.hpp"

namespace poseforge {

void ModelConfig::validate() const {
  if (heads == 0 || d % heads != 0) {
    throw ContractError("model width d=" + std::to_string(d) + " must be divisible by heads=" +
                        std::to_string(heads));
  }
  if (encoder_layers < 1 || binding_layers < 1 || structure_layers < 1) {
    throw ContractError("layer counts must be at least 1");
  }
  if (d_pair < 2 || d_pair % 2 != 0) throw ContractError("d_pair must be even and >= 2");
  if (gpe_axis_width < 2 || gpe_axis_width % 2 != 0) {
    throw ContractError("gpe_axis_width must be even so the sinusoid width is divisible by 6");
  }
  if (kernels < 1 || kernel_sigma <= 0) throw ContractError("Gaussian basis needs K >= 1 and sigma > 0");
  if (spd_max < 1) throw ContractError("spd_max must be >= 1");
  if (layer_norm_eps <= 0) throw ContractError("layer_norm_eps must be positive");
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::large() {
  ModelConfig c;
  c.encoder_layers = 15;
  c.binding_layers = 4;
  c.structure_layers = 8;
  return c;
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.d = 32;
  c.heads = 4;
  c.d_pair = 4;
  c.encoder_layers = 2;
  c.binding_layers = 1;
  c.structure_layers = 2;
  c.kernels = 8;
  c.gpe_axis_width = 8;
  c.head_hidden = 16;
  c.conf_hidden = 8;
  return c;
}

#define PF_FIELDS(X)                                                                        \
  X(d) X(heads) X(d_pair) X(encoder_layers) X(binding_layers) X(structure_layers) X(spd_max) \
  X(kernels) X(kernel_mu_max) X(kernel_sigma) X(gaussian_verbatim) X(gpe_axis_width)         \
  X(mlp_ratio) X(head_hidden) X(conf_hidden) X(layer_norm_eps) X(pair_gain_init)            \
  X(intra_distance_init) X(inter_distance_init) X(coord_eps) X(score_scale_init) X(use_gpe) \
  X(use_2d) X(use_talking_head) X(talking_head_pocket) X(end_to_end_decode) X(seed)

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json::object();
#define PF_TO(f) j[#f] = c.f;
  PF_FIELDS(PF_TO)
#undef PF_TO
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
#define PF_KNOWN(f) known = known || it.key() == #f;
    PF_FIELDS(PF_KNOWN)
#undef PF_KNOWN
    if (!known) throw ContractError("unknown model config field '" + it.key() + "'");
  }
#define PF_FROM(f) if (j.contains(#f)) j.at(#f).get_to(c.f);
  PF_FIELDS(PF_FROM)
#undef PF_FROM
}

#undef PF_FIELDS

}  // namespace poseforge
