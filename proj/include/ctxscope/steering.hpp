#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxscope/model.hpp"

namespace ctxscope {

// Reweights one attention row toward user positions:
//   user entries scaled by 1/Z, other entries by alpha/Z,
//   Z = sum_user(row) + alpha * sum_nonuser(row).
// Throws DegenerateRow when Z == 0 and InvalidArgument when alpha is outside
// (0, 1] or the mask length differs from the row length.
std::vector<double> steer_row(std::span<const double> row,
                              const std::vector<bool>& user_mask, double alpha);

// In-place variant used inside the forward pass. Positions at or beyond
// user_mask.size() are treated as non-user.
void steer_row_inplace(std::span<double> row, const std::vector<bool>& user_mask,
                       double alpha);

// One representative context-retrieval head per layer.
struct HeadSelection {
  std::vector<int> heads;  // heads[layer]
  std::string probe_id;
  std::size_t probe_position = 0;

  nlohmann::json to_json() const;
  static HeadSelection from_json(const nlohmann::json& j);
};

// Per layer, the head whose query row at `query_position` (default: last
// position) puts the most mass on user keys. Ties go to the lowest index.
HeadSelection select_heads(const AttentionRecord& record,
                           const std::vector<bool>& user_mask,
                           std::optional<std::size_t> query_position = {});

// Steering every selected head (one per layer) with the given alpha.
SteeringSpec steering_for(const HeadSelection& selection, double alpha,
                          const std::vector<bool>& user_mask);

inline const std::vector<double>& default_alphas() {
  static const std::vector<double> alphas{0.01, 0.1, 0.3, 0.5, 0.7, 0.9};
  return alphas;
}

}  // namespace ctxscope
