#pragma once

#include <compare>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "stylescope/matrix.hpp"

namespace stylescope {

enum class HookSite {
  resid_pre,       // residual stream entering block `layer`
  attn_out,        // attention sublayer output (after projection), d_model wide
  mlp_pre_act,     // W1 h + b1, d_mlp wide
  mlp_post_act,    // GELU(W1 h + b1), d_mlp wide: the analysed neurons
  resid_post,      // residual stream leaving block `layer`
  final_norm_out,  // final layer norm output; only valid at the last layer
};

std::string_view to_string(HookSite site);
HookSite parse_hook_site(std::string_view name);

struct HookPoint {
  int layer = 0;
  HookSite site = HookSite::mlp_post_act;

  auto operator<=>(const HookPoint&) const = default;
};

std::string to_string(const HookPoint& point);

enum class InterventionKind {
  ablate_zero,  // a_i = 0 for i in neurons
  add_vector,   // a = a + coefficient * vector
  scale_set,    // a_i = coefficient * a_i for i in neurons
  clamp_min,    // a_i = max(a_i, coefficient) for i in neurons
};

std::string_view to_string(InterventionKind kind);
InterventionKind parse_intervention_kind(std::string_view name);

struct InterventionSpec {
  InterventionKind kind = InterventionKind::ablate_zero;
  HookPoint point;
  std::vector<int> neurons;
  std::vector<float> vector;
  float coefficient = 0.0f;

  static InterventionSpec ablate(int layer, std::vector<int> neurons);
  static InterventionSpec add(int layer, std::vector<float> vector, float alpha);
  static InterventionSpec scale(int layer, std::vector<int> neurons, float beta);
  static InterventionSpec clamp(int layer, std::vector<int> neurons, float gamma);

  // Throws InvalidIntervention unless the spec fits a site of `width` columns.
  void validate(std::size_t width) const;
};

// Applies `spec` to rows [first_row, rows) of `activations` in place.
void apply_intervention(Matrix& activations, const InterventionSpec& spec, std::size_t first_row = 0);

// Value-returning form.
inline Matrix with_intervention(Matrix activations, const InterventionSpec& spec) {
  apply_intervention(activations, spec);
  return activations;
}

}  // namespace stylescope
