#include "stylescope/hooks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stylescope/error.hpp"

namespace stylescope {

std::string_view to_string(HookSite site) {
  switch (site) {
    case HookSite::resid_pre: return "resid_pre";
    case HookSite::attn_out: return "attn_out";
    case HookSite::mlp_pre_act: return "mlp_pre_act";
    case HookSite::mlp_post_act: return "mlp_post_act";
    case HookSite::resid_post: return "resid_post";
    case HookSite::final_norm_out: return "final_norm_out";
  }
  return "?";
}

HookSite parse_hook_site(std::string_view name) {
  for (auto s : {HookSite::resid_pre, HookSite::attn_out, HookSite::mlp_pre_act, HookSite::mlp_post_act,
                 HookSite::resid_post, HookSite::final_norm_out}) {
    if (to_string(s) == name) return s;
  }
  throw InvalidHookPoint("unknown hook site '" + std::string(name) + "'");
}

std::string to_string(const HookPoint& point) {
  return "blocks." + std::to_string(point.layer) + "." + std::string(to_string(point.site));
}

std::string_view to_string(InterventionKind kind) {
  switch (kind) {
    case InterventionKind::ablate_zero: return "ablate_zero";
    case InterventionKind::add_vector: return "add_vector";
    case InterventionKind::scale_set: return "scale_set";
    case InterventionKind::clamp_min: return "clamp_min";
  }
  return "?";
}

InterventionKind parse_intervention_kind(std::string_view name) {
  for (auto k : {InterventionKind::ablate_zero, InterventionKind::add_vector, InterventionKind::scale_set,
                 InterventionKind::clamp_min}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidIntervention("unknown intervention kind '" + std::string(name) + "'");
}

InterventionSpec InterventionSpec::ablate(int layer, std::vector<int> neurons) {
  InterventionSpec s;
  s.kind = InterventionKind::ablate_zero;
  s.point = {layer, HookSite::mlp_post_act};
  s.neurons = std::move(neurons);
  return s;
}

InterventionSpec InterventionSpec::add(int layer, std::vector<float> vector, float alpha) {
  InterventionSpec s;
  s.kind = InterventionKind::add_vector;
  s.point = {layer, HookSite::mlp_post_act};
  s.vector = std::move(vector);
  s.coefficient = alpha;
  return s;
}

InterventionSpec InterventionSpec::scale(int layer, std::vector<int> neurons, float beta) {
  InterventionSpec s;
  s.kind = InterventionKind::scale_set;
  s.point = {layer, HookSite::mlp_post_act};
  s.neurons = std::move(neurons);
  s.coefficient = beta;
  return s;
}

InterventionSpec InterventionSpec::clamp(int layer, std::vector<int> neurons, float gamma) {
  InterventionSpec s;
  s.kind = InterventionKind::clamp_min;
  s.point = {layer, HookSite::mlp_post_act};
  s.neurons = std::move(neurons);
  s.coefficient = gamma;
  return s;
}

void InterventionSpec::validate(std::size_t width) const {
  const std::string where = to_string(point) + " " + std::string(to_string(kind));
  if (kind == InterventionKind::add_vector) {
    if (vector.size() != width) {
      throw InvalidIntervention(where + ": vector has " + std::to_string(vector.size()) + " entries, site width is " +
                                std::to_string(width));
    }
    if (!std::isfinite(coefficient)) throw InvalidIntervention(where + ": non-finite coefficient");
    if (!std::all_of(vector.begin(), vector.end(), [](float v) { return std::isfinite(v); })) {
      throw InvalidIntervention(where + ": non-finite vector entry");
    }
    return;
  }
  if (neurons.empty()) throw InvalidIntervention(where + ": empty neuron set");
  for (int n : neurons) {
    if (n < 0 || static_cast<std::size_t>(n) >= width) {
      throw InvalidIntervention(where + ": neuron " + std::to_string(n) + " outside [0, " + std::to_string(width) + ")");
    }
  }
  // clamp_min accepts -inf as the no-op floor.
  if (kind == InterventionKind::scale_set && !std::isfinite(coefficient)) {
    throw InvalidIntervention(where + ": non-finite coefficient");
  }
  if (kind == InterventionKind::clamp_min && std::isnan(coefficient)) {
    throw InvalidIntervention(where + ": NaN floor");
  }
}

void apply_intervention(Matrix& activations, const InterventionSpec& spec, std::size_t first_row) {
  spec.validate(activations.cols);
  for (std::size_t r = first_row; r < activations.rows; ++r) {
    auto row = activations.row(r);
    switch (spec.kind) {
      case InterventionKind::add_vector:
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += spec.coefficient * spec.vector[c];
        break;
      case InterventionKind::scale_set:
        for (int n : spec.neurons) row[n] *= spec.coefficient;
        break;
      case InterventionKind::clamp_min:
        for (int n : spec.neurons) row[n] = std::max(row[n], spec.coefficient);
        break;
      case InterventionKind::ablate_zero:
        for (int n : spec.neurons) row[n] = 0.0f;
        break;
    }
  }
}

}  // namespace stylescope
