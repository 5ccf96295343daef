#include "bilevel/rollout.hpp"

#include <cmath>
#include <exception>

#include "bilevel/errors.hpp"
#include "bilevel/rng.hpp"

namespace bilevel {

void PolicyBinding::add_group(std::span<const AgentId> followers) {
    if (followers.empty()) throw ConfigError("policy group is empty");
    std::vector<std::size_t> g;
    for (AgentId id : followers) {
        if (id.role() == Role::Leader) throw ConfigError("the leader cannot join a follower policy group");
        const std::size_t f = id.index - 1;
        if (index_.count(f) != 0) throw ConfigError(to_string(id) + " is bound to two policy groups");
        index_[f] = groups_.size();
        g.push_back(f);
    }
    groups_.push_back(std::move(g));
}

PolicyBinding PolicyBinding::shared(std::size_t n_followers) {
    std::vector<AgentId> ids;
    for (std::size_t i = 0; i < n_followers; ++i) ids.push_back(AgentId::follower(i));
    PolicyBinding b;
    if (!ids.empty()) b.add_group(ids);
    return b;
}

PolicyBinding PolicyBinding::singletons(std::size_t n_followers) {
    PolicyBinding b;
    for (std::size_t i = 0; i < n_followers; ++i) {
        AgentId id = AgentId::follower(i);
        b.add_group(std::span<const AgentId>(&id, 1));
    }
    return b;
}

std::size_t PolicyBinding::group_of(std::size_t follower) const {
    auto it = index_.find(follower);
    if (it == index_.end()) throw ConfigError("follower " + std::to_string(follower + 1) + " has no policy group");
    return it->second;
}

void PolicyBinding::validate(std::size_t n_followers) const {
    if (index_.size() != n_followers)
        throw ConfigError("policy binding covers " + std::to_string(index_.size()) + " followers, environment has " +
                          std::to_string(n_followers));
    for (const auto& [f, g] : index_)
        if (f >= n_followers) throw ConfigError("policy binding names follower " + std::to_string(f + 1) +
                                                " beyond the environment's " + std::to_string(n_followers));
}

PolicyBinding shared_policy_group(std::span<const AgentId> followers) {
    PolicyBinding b;
    b.add_group(followers);
    return b;
}

double Episode::leader_return(double gamma) const { return discounted_return(leader_step_rewards, gamma); }

double Episode::follower_mean_return(double gamma) const {
    if (follower_raw_rewards.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : follower_raw_rewards) s += discounted_return(r, gamma);
    return s / static_cast<double>(follower_raw_rewards.size());
}

namespace {

void check_finite(std::span<const double> v, const std::string& agent, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw NonFiniteError(agent, -1, what);
}

}  // namespace

Episode rollout_episode(Environment& env, const ActorSet& actors, const PolicyBinding& binding,
                        const Characteristics& theta, const RolloutOptions& opt, std::uint64_t seed) {
    const std::size_t n = env.num_followers();
    binding.validate(n);
    if (actors.groups.size() != binding.num_groups())
        throw ConfigError("rollout: " + std::to_string(actors.groups.size()) + " follower actors for " +
                          std::to_string(binding.num_groups()) + " policy groups");
    if (actors.leader == nullptr) throw ConfigError("rollout: no leader actor");
    if (opt.leader_period < 1) throw ConfigError("rollout: leader period must be >= 1");
    const std::size_t fdim = env.observation_dim(Role::Follower);
    const std::size_t ldim = env.observation_dim(Role::Leader);
    const ActionSpace fspace = env.action_space(Role::Follower);
    const ActionSpace lspace = env.action_space(Role::Leader);

    Episode ep;
    ep.leader.agent = AgentId::leader();
    ep.leader.gamma = opt.gamma;
    ep.followers.resize(n);
    ep.follower_raw_rewards.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ep.followers[i].agent = AgentId::follower(i);
        ep.followers[i].gamma = opt.gamma;
    }

    Rng leader_rng = make_rng(derive_seed(seed, {1, 0}));
    std::vector<Rng> follower_rngs;
    follower_rngs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) follower_rngs.push_back(make_rng(derive_seed(seed, {1, i + 1})));

    std::vector<Observation> obs = env.reset(theta, derive_seed(seed, {0}));
    if (opt.horizon == 0) {
        const auto v = env.characteristics().values();
        ep.final_theta.assign(v.begin(), v.end());
        return ep;
    }

    std::vector<ActionValue> actions(n);
    std::vector<std::vector<double>> info(n);
    bool done = false;
    std::size_t t = 0;
    for (; t < opt.horizon && !done; ++t) {
        if (t % opt.leader_period == 0) {
            Observation lo = env.leader_observe();
            if (lo.size() != ldim) throw ConfigError("leader observation has wrong dimension");
            check_finite(lo, "leader", "observation");
            Rng* r = &leader_rng;
            auto s = actors.leader->act(stack_columns(std::span<const Observation>(&lo, 1), ldim),
                                        std::span<Rng* const>(&r, 1));
            s[0].action.validate(lspace);
            env.leader_apply(s[0].action);
            obs = env.follower_observe();
            Transition tr;
            tr.observation = std::move(lo);
            tr.action = s[0].action;
            tr.raw_action = std::move(s[0].raw);
            tr.log_prob = s[0].log_prob;
            tr.value_estimate = s[0].value;
            ep.leader.steps.push_back(std::move(tr));
        }

        if (obs.size() != n) throw ConfigError("environment returned the wrong number of follower observations");
        std::vector<ActionSample> samples(n);
        for (std::size_t g = 0; g < binding.num_groups(); ++g) {
            const auto& mem = binding.members(g);
            std::vector<Observation> gobs;
            std::vector<Rng*> grng;
            gobs.reserve(mem.size());
            for (std::size_t f : mem) {
                check_finite(obs[f], to_string(AgentId::follower(f)), "observation");
                gobs.push_back(obs[f]);
                grng.push_back(&follower_rngs[f]);
            }
            auto s = actors.groups[g]->act(stack_columns(gobs, fdim), grng);
            for (std::size_t j = 0; j < mem.size(); ++j) samples[mem[j]] = std::move(s[j]);
        }
        for (std::size_t i = 0; i < n; ++i) {
            samples[i].action.validate(fspace);
            actions[i] = samples[i].action;
        }

        StepResult res = env.follower_step(actions);
        if (res.follower_rewards.size() != n || res.observations.size() != n)
            throw ConfigError("environment step returned the wrong number of followers");
        if (!std::isfinite(res.leader_reward)) throw NonFiniteError("leader", -1, "reward");
        for (std::size_t i = 0; i < n; ++i) {
            const double r = res.follower_rewards[i];
            if (!std::isfinite(r)) throw NonFiniteError(to_string(AgentId::follower(i)), -1, "reward");
            const double w = env.information_cost_weight(i);
            Transition tr;
            tr.observation = std::move(obs[i]);
            tr.action = std::move(samples[i].action);
            tr.raw_action = std::move(samples[i].raw);
            tr.log_prob = samples[i].log_prob;
            tr.value_estimate = samples[i].value;
            tr.info_cost_weight = w;
            tr.reward = r - w * samples[i].info_cost;
            ep.followers[i].steps.push_back(std::move(tr));
            ep.follower_raw_rewards[i].push_back(r);
        }
        ep.leader.steps.back().reward += res.leader_reward;
        ep.leader_step_rewards.push_back(res.leader_reward);
        if (opt.log_steps)
            for (auto& [name, v] : env.step_metrics()) ep.step_log[name].push_back(v);
        obs = std::move(res.observations);
        done = res.done;
    }
    ep.steps = t;

    const double settle = env.finish_episode();
    if (!std::isfinite(settle)) throw NonFiniteError("leader", -1, "episode settlement reward");
    ep.leader.steps.back().reward += settle;
    ep.leader_step_rewards.back() += settle;

    if (!done && n > 0) {
        for (std::size_t g = 0; g < binding.num_groups(); ++g) {
            const auto& mem = binding.members(g);
            std::vector<Observation> gobs;
            for (std::size_t f : mem) {
                check_finite(obs[f], to_string(AgentId::follower(f)), "observation");
                gobs.push_back(obs[f]);
            }
            const nn::Vector v = actors.groups[g]->values(stack_columns(gobs, fdim));
            for (std::size_t j = 0; j < mem.size(); ++j) ep.followers[mem[j]].bootstrap_value = v[static_cast<Eigen::Index>(j)];
        }
    }
    ep.episode_log = env.episode_metrics();
    const auto v = env.characteristics().values();
    ep.final_theta.assign(v.begin(), v.end());
    return ep;
}

std::vector<Episode> collect_episodes(const Environment& prototype, const ActorSet& actors, const PolicyBinding& binding,
                                      const Characteristics& theta, const RolloutOptions& opt,
                                      std::span<const std::uint64_t> seeds, int jobs) {
    const auto count = static_cast<long>(seeds.size());
    std::vector<Episode> out(seeds.size());
    std::vector<std::exception_ptr> errors(seeds.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1, jobs)) if (jobs > 1)
    for (long i = 0; i < count; ++i) {
        try {
            auto env = prototype.clone();
            out[static_cast<std::size_t>(i)] = rollout_episode(*env, actors, binding, theta, opt, seeds[static_cast<std::size_t>(i)]);
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

std::vector<Episode> collect_episodes_serial(const Environment& prototype, const ActorSet& actors,
                                             const PolicyBinding& binding, const Characteristics& theta,
                                             const RolloutOptions& opt, std::span<const std::uint64_t> seeds) {
    std::vector<Episode> out;
    out.reserve(seeds.size());
    for (std::uint64_t s : seeds) {
        auto env = prototype.clone();
        out.push_back(rollout_episode(*env, actors, binding, theta, opt, s));
    }
    return out;
}

}  // namespace bilevel
