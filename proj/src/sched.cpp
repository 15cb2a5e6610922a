#include "vmsched/sched.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <tuple>

#include "vmsched/error.hpp"

namespace vmsched {

namespace {

[[noreturn]] void no_feasible() { throw Error(ErrorCode::NoFeasibleAction, "mask has no feasible entry"); }

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Free resources of the target of a flat action: the node, or the whole server for large requests.
ResourceVec target_free(const Observation& obs, std::size_t flat) {
  const auto nps = static_cast<std::size_t>(obs.nodes_per_server);
  if (obs.request.is_large) {
    const auto base = (flat / nps) * nps;
    return obs.node_free[base] + obs.node_free[base + 1];
  }
  return obs.node_free[flat];
}

}  // namespace

Action first_fit(const Observation& obs, std::span<const std::uint8_t> mask) {
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) return action_from_index(i, obs.nodes_per_server);
  }
  no_feasible();
}

Action best_fit(const Observation& obs, std::span<const std::uint8_t> mask) {
  const ResourceVec demand{obs.request.cpu, obs.request.mem};
  std::optional<std::tuple<std::int64_t, std::int64_t, std::size_t>> best;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const auto residual = target_free(obs, i) - demand;
    const auto key = std::make_tuple(residual.cpu, residual.mem, i);
    if (!best || key < *best) best = key;
  }
  if (!best) no_feasible();
  return action_from_index(std::get<2>(*best), obs.nodes_per_server);
}

Action RandomPolicy::act(const Observation& obs, std::span<const std::uint8_t> mask) {
  std::size_t count = 0;
  for (auto m : mask) count += m ? 1 : 0;
  if (count == 0) no_feasible();
  auto pick = static_cast<std::size_t>(unit_uniform(rng_) * static_cast<double>(count));
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] && pick-- == 0) return action_from_index(i, obs.nodes_per_server);
  }
  no_feasible();
}

const std::array<std::string_view, kFeatureCount>& feature_names() {
  static constexpr std::array<std::string_view, kFeatureCount> names = {
      "free_cpu", "free_mem", "residual_cpu", "residual_mem", "request_cpu",
      "request_mem", "is_large", "cluster_free_cpu", "bias"};
  return names;
}

FeatureVec linear_q_features(const Observation& obs, std::size_t flat_action) {
  const auto cap = obs.request.is_large ? obs.server_capacity : obs.node_capacity;
  const auto free = target_free(obs, flat_action);
  const ResourceVec demand{obs.request.cpu, obs.request.mem};
  const auto residual = free - demand;

  // Same for every action: soaks up state value so the other weights rank actions.
  std::int64_t cluster_free = 0;
  for (const auto& n : obs.node_free) cluster_free += n.cpu;
  const auto cluster_cap = obs.node_capacity.cpu * static_cast<std::int64_t>(obs.node_free.size());

  auto frac = [](std::int64_t v, std::int64_t c) { return static_cast<double>(v) / static_cast<double>(c); };
  return {frac(free.cpu, cap.cpu),
          frac(free.mem, cap.mem),
          frac(residual.cpu, cap.cpu),
          frac(residual.mem, cap.mem),
          frac(demand.cpu, obs.server_capacity.cpu),
          frac(demand.mem, obs.server_capacity.mem),
          obs.request.is_large ? 1.0 : 0.0,
          frac(cluster_free, cluster_cap),
          1.0};
}

double q_value(const Weights& w, const FeatureVec& phi) {
  double q = 0.0;
  for (std::size_t k = 0; k < kFeatureCount; ++k) q += w[k] * phi[k];
  return q;
}

std::size_t greedy_index(const Weights& w, const Observation& obs, std::span<const std::uint8_t> mask) {
  std::optional<std::size_t> best;
  double best_q = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const double q = q_value(w, linear_q_features(obs, i));
    if (!best || q > best_q) {
      best = i;
      best_q = q;
    }
  }
  if (!best) no_feasible();
  return *best;
}

Action LinearQPolicy::act(const Observation& obs, std::span<const std::uint8_t> mask) {
  return action_from_index(greedy_index(weights_, obs, mask), obs.nodes_per_server);
}

std::string LinearQParams::check() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) return "learning_rate must be >= 0";
  if (!(discount >= 0.0 && discount <= 1.0)) return "discount must be in [0,1]";
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0)) return "epsilon_start must be in [0,1]";
  if (!(epsilon_end >= 0.0 && epsilon_end <= 1.0)) return "epsilon_end must be in [0,1]";
  return {};
}

double LinearQParams::epsilon_at(std::size_t global_step) const {
  if (epsilon_decay_steps == 0 || global_step >= epsilon_decay_steps) return epsilon_end;
  const double t = static_cast<double>(global_step) / static_cast<double>(epsilon_decay_steps);
  return epsilon_start + (epsilon_end - epsilon_start) * t;
}

TrainResult train_linear_q(const EnvFactory& factory, const LinearQParams& params, const TrainHooks& hooks) {
  if (auto problem = params.check(); !problem.empty()) throw Error(ErrorCode::InvalidConfig, problem);

  TrainResult result;
  result.weights = params.initial_weights;
  auto& w = result.weights;

  RandomPolicy explorer(params.seed);
  std::mt19937_64 coin(params.seed ^ 0x9e3779b97f4a7c15ULL);

  for (std::size_t episode = 0; episode < params.episodes; ++episode) {
    auto spec = factory(episode);
    Environment env;
    auto obs = env.reset(spec.cfg, spec.scenario, std::move(spec.trace));

    while (!env.done()) {
      const auto& mask = env.action_mask();
      const double eps = params.epsilon_at(result.total_steps);
      std::size_t index = 0;
      if (unit_uniform(coin) < eps) {
        index = flat_index(explorer.act(obs, mask), obs.nodes_per_server);
      } else {
        index = greedy_index(w, obs, mask);
      }
      const auto action = action_from_index(index, obs.nodes_per_server);
      if (hooks.on_action) hooks.on_action(episode, action);

      const auto phi = linear_q_features(obs, index);
      const double q = q_value(w, phi);
      auto step = env.step(action);
      ++result.total_steps;

      double target = step.reward;
      if (!step.done) {
        const auto& next_mask = env.action_mask();
        target += params.discount * q_value(w, linear_q_features(step.obs, greedy_index(w, step.obs, next_mask)));
      }
      const double td = target - q;
      for (std::size_t k = 0; k < kFeatureCount; ++k) w[k] += params.learning_rate * td * phi[k];
      obs = std::move(step.obs);
    }
    result.scheduled_per_episode.push_back(env.info().scheduled_total);
  }
  return result;
}

nlohmann::json linear_q_to_json(const Weights& w, const LinearQParams& params) {
  using nlohmann::json;
  json names = json::array();
  for (auto n : feature_names()) names.push_back(n);
  return json{{"feature_names", std::move(names)},
              {"weights", std::vector<double>(w.begin(), w.end())},
              {"params",
               {{"learning_rate", params.learning_rate},
                {"discount", params.discount},
                {"epsilon_start", params.epsilon_start},
                {"epsilon_end", params.epsilon_end},
                {"epsilon_decay_steps", params.epsilon_decay_steps},
                {"episodes", params.episodes},
                {"seed", params.seed}}}};
}

Weights linear_q_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("weights") || !doc["weights"].is_array())
    throw Error(ErrorCode::InvalidConfig, "weights document lacks a weights array");
  const auto& arr = doc["weights"];
  if (arr.size() != kFeatureCount)
    throw Error(ErrorCode::InvalidConfig, "expected " + std::to_string(kFeatureCount) + " weights");
  if (doc.contains("feature_names")) {
    const auto& names = doc["feature_names"];
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      if (!names.is_array() || names.size() != kFeatureCount || names[k] != feature_names()[k])
        throw Error(ErrorCode::InvalidConfig, "feature_names do not match this build");
    }
  }
  Weights w{};
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    if (!arr[k].is_number()) throw Error(ErrorCode::InvalidConfig, "weights must be numbers");
    w[k] = arr[k].get<double>();
  }
  return w;
}

Weights load_linear_q(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open weights file " + path);
  try {
    return linear_q_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("weights file: ") + e.what());
  }
}

}  // namespace vmsched
