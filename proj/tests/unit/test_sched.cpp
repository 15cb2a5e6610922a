#include <doctest.h>

#include <cmath>
#include <tuple>

#include "support.hpp"
#include "vmsched/error.hpp"
#include "vmsched/sched.hpp"

using namespace vmsched;

namespace {

Observation obs_with(const ClusterConfig& cfg, const std::vector<ResourceVec>& free, Flavor request) {
  ClusterState s(cfg);
  Request r{0, "pending", RequestKind::Alloc, request, 0};
  auto obs = make_observation(s, &r);
  obs.node_free = free;
  return obs;
}

// Brute-force feasibility and best-fit scoring straight from node free vectors.
ActionMask brute_mask(const Observation& obs) {
  ActionMask m(obs.node_free.size(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (obs.request.is_large) {
      const auto base = i - i % 2;
      m[i] = obs.node_free[base].cpu >= obs.request.cpu / 2 && obs.node_free[base].mem >= obs.request.mem / 2 &&
             obs.node_free[base + 1].cpu >= obs.request.cpu / 2 && obs.node_free[base + 1].mem >= obs.request.mem / 2;
    } else {
      m[i] = obs.node_free[i].cpu >= obs.request.cpu && obs.node_free[i].mem >= obs.request.mem;
    }
  }
  return m;
}

std::size_t brute_best_fit(const Observation& obs, const ActionMask& mask) {
  std::size_t best = mask.size();
  std::int64_t best_cpu = 0, best_mem = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    std::int64_t cpu = 0, mem = 0;
    if (obs.request.is_large) {
      const auto base = i - i % 2;
      cpu = obs.node_free[base].cpu + obs.node_free[base + 1].cpu - obs.request.cpu;
      mem = obs.node_free[base].mem + obs.node_free[base + 1].mem - obs.request.mem;
    } else {
      cpu = obs.node_free[i].cpu - obs.request.cpu;
      mem = obs.node_free[i].mem - obs.request.mem;
    }
    if (best == mask.size() || cpu < best_cpu || (cpu == best_cpu && mem < best_mem)) {
      best = i;
      best_cpu = cpu;
      best_mem = mem;
    }
  }
  return best;
}

ErrorCode error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoError;
}

const ClusterConfig kTwoServers{2, 40, 90, true};

}  // namespace

TEST_CASE("first_fit examples") {
  const auto obs = obs_with(kTwoServers, {{20, 45}, {20, 45}, {20, 45}, {20, 45}}, {4, 8});
  const ActionMask m{0, 1, 1, 1};
  CHECK(first_fit(obs, m) == Action{0, 1});
  CHECK(first_fit(obs, ActionMask{1, 1, 1, 1}) == Action{0, 0});
  CHECK(error_of([&] { first_fit(obs, ActionMask{0, 0, 0, 0}); }) == ErrorCode::NoFeasibleAction);
}

TEST_CASE("best_fit worked example") {
  const auto obs = obs_with(kTwoServers, {{4, 10}, {4, 10}, {6, 10}, {2, 3}}, {4, 8});
  const auto mask = brute_mask(obs);
  CHECK(mask == ActionMask{1, 1, 1, 0});
  CHECK(brute_best_fit(obs, mask) == 0);
  CHECK(best_fit(obs, mask) == Action{0, 0});
}

TEST_CASE("best_fit: single entry, symmetry, large requests") {
  const auto obs = obs_with(kTwoServers, {{20, 45}, {20, 45}, {20, 45}, {20, 45}}, {4, 8});
  CHECK(best_fit(obs, ActionMask{0, 0, 1, 0}) == Action{1, 0});
  CHECK(best_fit(obs, ActionMask{1, 1, 1, 1}) == Action{0, 0});
  CHECK(error_of([&] { best_fit(obs, ActionMask{0, 0, 0, 0}); }) == ErrorCode::NoFeasibleAction);

  // Large {8,16}: server residual sums (20+20-8) vs (6+10-8); server 1 wins.
  const auto big = obs_with(kTwoServers, {{20, 45}, {20, 45}, {6, 30}, {10, 30}}, {8, 16});
  REQUIRE(big.request.is_large);
  const auto mask = brute_mask(big);
  CHECK(mask == ActionMask{1, 1, 1, 1});
  CHECK(best_fit(big, mask) == Action{1, 0});
}

TEST_CASE("property: heuristics stay feasible, are pure, and best_fit matches the brute-force scorer") {
  std::mt19937_64 rng(2024);
  for (int iter = 0; iter < 500; ++iter) {
    ClusterConfig cfg{static_cast<std::int64_t>(1 + rng() % 5), 40, 90, true};
    const auto state = vmsched::testing::random_state(rng, cfg, static_cast<int>(rng() % 40));
    Request r{0, "p", RequestKind::Alloc, vmsched::testing::random_flavor(rng), 0};
    const auto obs = make_observation(state, &r);
    const auto mask = state.feasible_actions(r.flavor);
    if (std::none_of(mask.begin(), mask.end(), [](auto m) { return m != 0; })) continue;
    CHECK(mask == brute_mask(obs));

    const auto ff = first_fit(obs, mask);
    const auto bf = best_fit(obs, mask);
    CHECK(mask[flat_index(ff, 2)]);
    CHECK(mask[flat_index(bf, 2)]);
    CHECK(first_fit(obs, mask) == ff);
    CHECK(best_fit(obs, mask) == bf);
    CHECK(flat_index(bf, 2) == brute_best_fit(obs, mask));

    RandomPolicy rp(rng());
    CHECK(mask[flat_index(rp.act(obs, mask), 2)]);
    Weights w;
    for (auto& x : w) x = static_cast<double>(static_cast<std::int64_t>(rng() % 2001) - 1000) / 100.0;
    LinearQPolicy lq(w);
    CHECK(mask[flat_index(lq.act(obs, mask), 2)]);
  }
}

TEST_CASE("random_policy examples") {
  const auto obs = obs_with(kTwoServers, {{20, 45}, {20, 45}, {20, 45}, {20, 45}}, {4, 8});
  RandomPolicy one(1);
  CHECK(one.act(obs, ActionMask{0, 0, 0, 1}) == Action{1, 1});
  CHECK(error_of([&] { one.act(obs, ActionMask{0, 0, 0, 0}); }) == ErrorCode::NoFeasibleAction);

  RandomPolicy a(42), b(42);
  const ActionMask all{1, 1, 1, 1};
  CHECK(a.act(obs, all) == b.act(obs, all));
  CHECK(a.act(obs, all) == b.act(obs, all));
}

TEST_CASE("random_policy is uniform over feasible entries") {
  const auto obs = obs_with(kTwoServers, {{20, 45}, {20, 45}, {20, 45}, {20, 45}}, {4, 8});
  RandomPolicy rp(7);
  const ActionMask all{1, 1, 1, 1};
  constexpr int n = 100000;
  std::array<int, 4> counts{};
  for (int i = 0; i < n; ++i) ++counts[flat_index(rp.act(obs, all), 2)];
  const double sigma = std::sqrt(0.25 * 0.75 / n);
  double chi2 = 0.0;
  for (int c : counts) {
    CHECK(std::fabs(c / static_cast<double>(n) - 0.25) <= 3 * sigma);
    chi2 += (c - n / 4.0) * (c - n / 4.0) / (n / 4.0);
  }
  CHECK(chi2 < 16.27);  // chi-square, 3 dof, p = 0.001
}

TEST_CASE("linear_q_features boundary values") {
  ClusterState s(kTwoServers);
  Request zero{0, "z", RequestKind::Alloc, Flavor{0, 0}, 0};
  const auto obs = make_observation(s, &zero);
  CHECK(linear_q_features(obs, 0) == FeatureVec{1, 1, 1, 1, 0, 0, 0, 1, 1});

  Request small{0, "s", RequestKind::Alloc, Flavor{2, 4}, 0};
  ClusterState full(kTwoServers);
  for (int i = 0; i < 5; ++i) full.place({0, 0}, "a" + std::to_string(i), Flavor{4, 9});
  const auto fobs = make_observation(full, &small);
  const auto phi = linear_q_features(fobs, 0);
  CHECK(phi[0] == 0.0);
  CHECK(phi[1] == 0.0);
  CHECK(phi[7] == 60.0 / 80.0);
  CHECK(phi[4] == 2.0 / 40.0);
  CHECK(phi[5] == 4.0 / 90.0);
  CHECK(feature_names().size() == phi.size());
}

TEST_CASE("residual features match the state after an actual placement") {
  std::mt19937_64 rng(31);
  for (int iter = 0; iter < 200; ++iter) {
    ClusterConfig cfg{3, 40, 90, true};
    const auto state = vmsched::testing::random_state(rng, cfg, 20);
    Request r{0, "p", RequestKind::Alloc, vmsched::testing::random_flavor(rng), 0};
    const auto obs = make_observation(state, &r);
    const auto mask = state.feasible_actions(r.flavor);
    for (std::size_t a = 0; a < mask.size(); ++a) {
      if (!mask[a]) continue;
      const auto phi = linear_q_features(obs, a);
      auto scratch = state;
      scratch.place(action_from_index(a, 2), "p", r.flavor);
      const auto after = make_observation(scratch, nullptr);
      double cpu = 0, mem = 0, cap_cpu = 0, cap_mem = 0;
      if (obs.request.is_large) {
        const auto base = a - a % 2;
        cpu = static_cast<double>(after.node_free[base].cpu + after.node_free[base + 1].cpu);
        mem = static_cast<double>(after.node_free[base].mem + after.node_free[base + 1].mem);
        cap_cpu = 40;
        cap_mem = 90;
      } else {
        cpu = static_cast<double>(after.node_free[a].cpu);
        mem = static_cast<double>(after.node_free[a].mem);
        cap_cpu = 20;
        cap_mem = 45;
      }
      CHECK(phi[2] == doctest::Approx(cpu / cap_cpu).epsilon(1e-12));
      CHECK(phi[3] == doctest::Approx(mem / cap_mem).epsilon(1e-12));
    }
  }
}

TEST_CASE("act examples") {
  const auto obs = obs_with(kTwoServers, {{4, 10}, {4, 10}, {6, 10}, {2, 3}}, {4, 8});
  const ActionMask mask{1, 1, 1, 0};
  LinearQPolicy zero(Weights{});
  CHECK(zero.act(obs, mask) == Action{0, 0});

  // q = -residual_cpu - 0.001 residual_mem: node 0,1 give -(0) - 0.001*(2/45), node 2 gives -(2/20) - ...
  Weights w{};
  w[2] = -1.0;
  w[3] = -0.001;
  LinearQPolicy tight(w);
  const double q0 = q_value(w, linear_q_features(obs, 0));
  const double q2 = q_value(w, linear_q_features(obs, 2));
  CHECK(q0 == doctest::Approx(-0.001 * 2.0 / 45.0));
  CHECK(q2 == doctest::Approx(-0.1 - 0.001 * 2.0 / 45.0));
  CHECK(tight.act(obs, mask) == best_fit(obs, mask));

  Weights loud{};
  loud[0] = 100.0;
  CHECK(LinearQPolicy(loud).act(obs, ActionMask{0, 0, 1, 0}) == Action{1, 0});
  CHECK(error_of([&] { zero.act(obs, ActionMask{0, 0, 0, 0}); }) == ErrorCode::NoFeasibleAction);
}

TEST_CASE("argmax is invariant to positive weight scaling") {
  std::mt19937_64 rng(99);
  for (int iter = 0; iter < 300; ++iter) {
    const auto state = vmsched::testing::random_state(rng, ClusterConfig{4, 40, 90, true}, 30);
    Request r{0, "p", RequestKind::Alloc, vmsched::testing::random_flavor(rng), 0};
    const auto mask = state.feasible_actions(r.flavor);
    if (std::none_of(mask.begin(), mask.end(), [](auto m) { return m != 0; })) continue;
    const auto obs = make_observation(state, &r);
    Weights w;
    for (auto& x : w) x = static_cast<double>(static_cast<std::int64_t>(rng() % 2001) - 1000) / 250.0;
    const auto base = greedy_index(w, obs, mask);
    for (double c : {0.5, 2.0, 8.0, 1024.0}) {
      Weights scaled = w;
      for (auto& x : scaled) x *= c;
      CHECK(greedy_index(scaled, obs, mask) == base);
    }
  }
}

namespace {

std::shared_ptr<const Trace> toy_trace(std::uint64_t seed, std::size_t n = 60) {
  GenConfig g;
  g.n_alloc = n;
  g.seed = seed;
  g.flavor_weights = vmsched::testing::mixed_flavors();
  return std::make_shared<const Trace>(generate_trace(g));
}

EpisodeSpec toy_spec(std::uint64_t seed) {
  EnvConfig cfg;
  cfg.cluster = ClusterConfig{2, 40, 90, true};
  return {cfg, Scenario::Fading, toy_trace(seed)};
}

}  // namespace

TEST_CASE("training with epsilon 1 takes exactly the random policy's actions") {
  LinearQParams p;
  p.epsilon_start = p.epsilon_end = 1.0;
  p.episodes = 20;
  p.seed = 5;
  std::vector<Action> taken;
  train_linear_q([](std::size_t ep) { return toy_spec(100 + ep); }, p,
                 TrainHooks{[&](std::size_t, const Action& a) { taken.push_back(a); }});

  std::vector<Action> replay;
  RandomPolicy rp(5);
  for (std::size_t ep = 0; ep < p.episodes; ++ep) {
    auto spec = toy_spec(100 + ep);
    Environment env;
    auto obs = env.reset(spec.cfg, spec.scenario, spec.trace);
    while (!env.done()) {
      const auto a = rp.act(obs, env.action_mask());
      replay.push_back(a);
      obs = env.step(a).obs;
    }
  }
  CHECK(taken.size() > 100);
  CHECK(taken == replay);
}

TEST_CASE("learning rate 0 leaves weights at their initialization") {
  LinearQParams p;
  p.learning_rate = 0.0;
  p.episodes = 10;
  p.initial_weights = {0.1, -0.2, 0.3, -0.4, 0.5, -0.6, 0.7, -0.8, 0.9};
  const auto r = train_linear_q([](std::size_t ep) { return toy_spec(ep); }, p);
  CHECK(r.weights == p.initial_weights);
  CHECK(r.total_steps > 0);
}

TEST_CASE("trained linear Q is deterministic and at least matches random on the fading toy") {
  LinearQParams p;
  p.episodes = 2000;
  p.seed = 3;
  auto factory = [](std::size_t ep) { return toy_spec(10000 + ep); };
  const auto a = train_linear_q(factory, p);
  const auto b = train_linear_q(factory, p);
  CHECK(a.weights == b.weights);
  for (double x : a.weights) CHECK(std::isfinite(x));

  double learned = 0.0, random = 0.0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    auto spec = toy_spec(50000 + k);
    LinearQPolicy lq(a.weights);
    RandomPolicy rp(k);
    learned += static_cast<double>(run_episode(spec.cfg, spec.scenario, spec.trace, lq).steps.size());
    random += static_cast<double>(run_episode(spec.cfg, spec.scenario, spec.trace, rp).steps.size());
  }
  MESSAGE("mean scheduled: linear-q " << learned / 100 << ", random " << random / 100);
  CHECK(learned >= random);
}

TEST_CASE("weights JSON round trip and validation") {
  Weights w{1, 2, 3, 4, 5, 6, 7, 8, 9.5};
  LinearQParams p;
  const auto doc = linear_q_to_json(w, p);
  CHECK(doc["feature_names"].size() == kFeatureCount);
  CHECK(doc.contains("params"));
  CHECK(linear_q_from_json(doc) == w);

  auto bad = doc;
  bad["weights"].erase(0);
  CHECK(error_of([&] { linear_q_from_json(bad); }) == ErrorCode::InvalidConfig);
  bad = doc;
  bad["feature_names"][0] = "other";
  CHECK(error_of([&] { linear_q_from_json(bad); }) == ErrorCode::InvalidConfig);
  CHECK(error_of([&] { load_linear_q("/nonexistent.json"); }) == ErrorCode::IoError);
}

TEST_CASE("params validation and epsilon schedule") {
  LinearQParams p;
  p.discount = 1.5;
  CHECK_FALSE(p.check().empty());
  p = {};
  p.epsilon_start = 1.0;
  p.epsilon_end = 0.0;
  p.epsilon_decay_steps = 10;
  CHECK(p.epsilon_at(0) == 1.0);
  CHECK(p.epsilon_at(5) == doctest::Approx(0.5));
  CHECK(p.epsilon_at(10) == 0.0);
  CHECK(p.epsilon_at(1000) == 0.0);
}
