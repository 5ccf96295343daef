// Serial reference vs OpenMP kernels. Arg = worker count (0 = serial reference).

#include <benchmark/benchmark.h>

#include <numeric>

#include "bilevel/envs/taxai.hpp"
#include "bilevel/ppo.hpp"
#include "bilevel/rollout.hpp"

using namespace bilevel;

namespace {

struct Setup {
    taxai::Environment env;
    PpoLearner leader, followers;
    PolicyBinding binding;
    ActorSet actors;
    RolloutOptions opt;
    std::vector<std::uint64_t> seeds;

    Setup()
        : env([] {
              taxai::Params p;
              p.n_households = 10;
              p.horizon = 100;
              return p;
          }()),
          leader("leader", env.observation_dim(Role::Leader), env.action_space(Role::Leader),
                 env.observation_scale(Role::Leader), cfg({32, 32}), 1),
          followers("followers", env.observation_dim(Role::Follower), env.action_space(Role::Follower),
                    env.observation_scale(Role::Follower), cfg({64, 64}), 2),
          binding(PolicyBinding::shared(env.num_followers())) {
        actors.leader = &leader.actor();
        actors.groups = {&followers.actor()};
        opt.horizon = 100;
        opt.leader_period = 100;
        opt.log_steps = false;
        for (std::uint64_t i = 0; i < 8; ++i) seeds.push_back(derive_seed(3, {i}));
    }

    static PpoConfig cfg(std::vector<int> hidden) {
        PpoConfig c;
        c.hidden = std::move(hidden);
        return c;
    }
};

Setup& setup() {
    static Setup s;
    return s;
}

void BM_Rollout(benchmark::State& state) {
    auto& s = setup();
    const int jobs = static_cast<int>(state.range(0));
    const auto theta = s.env.default_characteristics();
    for (auto _ : state) {
        auto eps = jobs == 0 ? collect_episodes_serial(s.env, s.actors, s.binding, theta, s.opt, s.seeds)
                             : collect_episodes(s.env, s.actors, s.binding, theta, s.opt, s.seeds, jobs);
        benchmark::DoNotOptimize(eps.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(s.seeds.size() * s.opt.horizon));
}

void BM_Gradient(benchmark::State& state) {
    auto& s = setup();
    static PpoBatch batch = [&] {
        const auto eps = collect_episodes_serial(s.env, s.actors, s.binding, s.env.default_characteristics(), s.opt,
                                                 s.seeds);
        std::vector<const Trajectory*> tr;
        for (const auto& e : eps)
            for (const auto& f : e.followers) tr.push_back(&f);
        return make_ppo_batch(s.followers.policy(), tr, s.followers.config());
    }();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(batch.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    const int jobs = static_cast<int>(state.range(0));
    nn::Vector grad;
    for (auto _ : state) {
        auto t = jobs == 0 ? surrogate_gradient_serial(s.followers.policy(), batch, idx, 0.2, s.followers.config(), grad)
                           : surrogate_gradient(s.followers.policy(), batch, idx, 0.2, s.followers.config(), grad, jobs);
        benchmark::DoNotOptimize(t.loss);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(idx.size()));
}

}  // namespace

BENCHMARK(BM_Rollout)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Gradient)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
