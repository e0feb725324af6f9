#include "ctxscope/steering.hpp"

#include "ctxscope/error.hpp"

namespace ctxscope {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "alpha must lie in (0, 1]");
  }
}

bool is_user(const std::vector<bool>& mask, std::size_t i) {
  return i < mask.size() && mask[i];
}

}  // namespace

void steer_row_inplace(std::span<double> row, const std::vector<bool>& user_mask,
                       double alpha) {
  check_alpha(alpha);
  if (alpha == 1.0) return;
  double user = 0.0;
  double other = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    (is_user(user_mask, i) ? user : other) += row[i];
  }
  const double z = user + alpha * other;
  if (z == 0.0) fail(ErrorKind::DegenerateRow, "attention row has zero mass");
  for (std::size_t i = 0; i < row.size(); ++i) {
    row[i] = is_user(user_mask, i) ? row[i] / z : alpha * row[i] / z;
  }
}

std::vector<double> steer_row(std::span<const double> row,
                              const std::vector<bool>& user_mask, double alpha) {
  if (user_mask.size() != row.size()) {
    fail(ErrorKind::InvalidArgument, "user mask length differs from row length");
  }
  check_alpha(alpha);
  std::vector<double> out(row.begin(), row.end());
  double total = 0.0;
  for (double v : out) total += v;
  if (total == 0.0) fail(ErrorKind::DegenerateRow, "attention row has zero mass");
  steer_row_inplace(out, user_mask, alpha);
  return out;
}

nlohmann::json HeadSelection::to_json() const {
  nlohmann::json layers = nlohmann::json::object();
  for (std::size_t l = 0; l < heads.size(); ++l) {
    layers[std::to_string(l)] = heads[l];
  }
  return {{"heads", layers},
          {"probe_id", probe_id},
          {"probe_position", probe_position}};
}

HeadSelection HeadSelection::from_json(const nlohmann::json& j) {
  HeadSelection s;
  try {
    const auto& layers = j.at("heads");
    s.heads.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      s.heads[l] = layers.at(std::to_string(l)).get<int>();
    }
    s.probe_id = j.value("probe_id", std::string{});
    s.probe_position = j.value("probe_position", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("head selection: ") + e.what());
  }
  return s;
}

HeadSelection select_heads(const AttentionRecord& record,
                           const std::vector<bool>& user_mask,
                           std::optional<std::size_t> query_position) {
  const std::size_t T = record.seq_len();
  bool any_user = false;
  for (std::size_t k = 0; k < T; ++k) any_user = any_user || is_user(user_mask, k);
  if (!any_user) fail(ErrorKind::EmptyUserMask, "no user positions in the probe");
  const std::size_t q = query_position.value_or(T - 1);
  if (q >= T) fail(ErrorKind::InvalidArgument, "query position out of range");

  HeadSelection sel;
  sel.probe_position = q;
  for (int l = 0; l < record.n_layers(); ++l) {
    int best = 0;
    double best_mass = -1.0;
    for (int h = 0; h < record.n_heads(); ++h) {
      const auto row = record.row(l, h, q);
      double mass = 0.0;
      for (std::size_t k = 0; k <= q; ++k) {
        if (is_user(user_mask, k)) mass += row[k];
      }
      if (mass > best_mass) {
        best_mass = mass;
        best = h;
      }
    }
    sel.heads.push_back(best);
  }
  return sel;
}

SteeringSpec steering_for(const HeadSelection& selection, double alpha,
                          const std::vector<bool>& user_mask) {
  SteeringSpec spec;
  spec.alpha = alpha;
  spec.user_mask = user_mask;
  for (std::size_t l = 0; l < selection.heads.size(); ++l) {
    spec.targets.emplace_back(static_cast<int>(l), selection.heads[l]);
  }
  return spec;
}

}  // namespace ctxscope
