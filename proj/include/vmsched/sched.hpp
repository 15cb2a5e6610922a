#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>

#include "json.hpp"
#include "vmsched/env.hpp"

namespace vmsched {

// Lowest flat index with mask[i] set. Throws NoFeasibleAction.
Action first_fit(const Observation& obs, std::span<const std::uint8_t> mask);

// Minimizes post-placement residual of the target node(s): residual cpu first
// (summed over both nodes for large requests), then residual mem, then the
// flat index. Throws NoFeasibleAction.
Action best_fit(const Observation& obs, std::span<const std::uint8_t> mask);

class FirstFitPolicy final : public Policy {
 public:
  std::string name() const override { return "first-fit"; }
  Action act(const Observation& obs, std::span<const std::uint8_t> mask) override { return first_fit(obs, mask); }
};

class BestFitPolicy final : public Policy {
 public:
  std::string name() const override { return "best-fit"; }
  Action act(const Observation& obs, std::span<const std::uint8_t> mask) override { return best_fit(obs, mask); }
};

// Uniform over feasible entries. Draws are a pure function of the seed and call sequence.
class RandomPolicy final : public Policy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : rng_(seed) {}
  std::string name() const override { return "random"; }
  Action act(const Observation& obs, std::span<const std::uint8_t> mask) override;

 private:
  std::mt19937_64 rng_;
};

inline constexpr std::size_t kFeatureCount = 9;
using FeatureVec = std::array<double, kFeatureCount>;
using Weights = std::array<double, kFeatureCount>;

const std::array<std::string_view, kFeatureCount>& feature_names();

// Target node for small requests, both nodes' sum for large ones, normalized by
// the matching capacity: free cpu, free mem, residual cpu, residual mem after
// the hypothetical placement, request cpu and mem over server capacity,
// is_large, cluster-wide free cpu fraction, bias.
FeatureVec linear_q_features(const Observation& obs, std::size_t flat_action);

double q_value(const Weights& w, const FeatureVec& phi);

struct LinearQParams {
  double learning_rate = 0.001;
  double discount = 0.99;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::size_t epsilon_decay_steps = 50000;
  std::size_t episodes = 1000;
  std::uint64_t seed = 0;
  Weights initial_weights{};

  std::string check() const;
  // Linear decay from start to end over epsilon_decay_steps.
  double epsilon_at(std::size_t global_step) const;
};

// Greedy over w . features; ties go to the smallest flat index.
class LinearQPolicy final : public Policy {
 public:
  explicit LinearQPolicy(Weights w, std::string label = "linear-q") : weights_(w), label_(std::move(label)) {}
  std::string name() const override { return label_; }
  Action act(const Observation& obs, std::span<const std::uint8_t> mask) override;

  const Weights& weights() const { return weights_; }
  void set_label(std::string label) { label_ = std::move(label); }

 private:
  Weights weights_;
  std::string label_;
};

// Greedy action index for the given weights. Throws NoFeasibleAction.
std::size_t greedy_index(const Weights& w, const Observation& obs, std::span<const std::uint8_t> mask);

struct EpisodeSpec {
  EnvConfig cfg;
  Scenario scenario = Scenario::Fading;
  std::shared_ptr<const Trace> trace;
};
using EnvFactory = std::function<EpisodeSpec(std::size_t episode)>;

struct TrainHooks {
  // Called with every action taken during training.
  std::function<void(std::size_t episode, const Action&)> on_action;
};

struct TrainResult {
  Weights weights{};
  std::size_t total_steps = 0;
  std::vector<std::size_t> scheduled_per_episode;
};

// Epsilon-greedy semi-gradient Q-learning over masked actions. Exploration
// draws come from a RandomPolicy seeded with params.seed, so epsilon 1.0
// reproduces that policy's choices exactly.
TrainResult train_linear_q(const EnvFactory& factory, const LinearQParams& params, const TrainHooks& hooks = {});

nlohmann::json linear_q_to_json(const Weights& w, const LinearQParams& params);
// Throws InvalidConfig on a malformed document, IoError on unreadable files.
Weights linear_q_from_json(const nlohmann::json& doc);
Weights load_linear_q(const std::string& path);

}  // namespace vmsched
