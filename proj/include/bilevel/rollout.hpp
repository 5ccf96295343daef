#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bilevel/actor.hpp"
#include "bilevel/core.hpp"

namespace bilevel {

/// Assignment of followers to trainable policies. Group g's members all act
/// through policy g and all feed its update buffer.
class PolicyBinding {
public:
    PolicyBinding() = default;
    /// Throws ConfigError on the leader, duplicates, or an empty group.
    void add_group(std::span<const AgentId> followers);

    static PolicyBinding shared(std::size_t n_followers);
    static PolicyBinding singletons(std::size_t n_followers);

    std::size_t num_groups() const noexcept { return groups_.size(); }
    /// 0-based follower indices of group g.
    const std::vector<std::size_t>& members(std::size_t g) const { return groups_.at(g); }
    std::size_t group_of(std::size_t follower) const;
    /// Every follower 0..n-1 bound exactly once.
    void validate(std::size_t n_followers) const;

private:
    std::vector<std::vector<std::size_t>> groups_;
    std::map<std::size_t, std::size_t> index_;
};

/// One group of followers sharing one policy.
PolicyBinding shared_policy_group(std::span<const AgentId> followers);

/// Who acts: the leader's actor and one actor per follower group.
struct ActorSet {
    const Actor* leader = nullptr;
    std::vector<const Actor*> groups;
};

struct RolloutOptions {
    std::size_t horizon = 100;
    std::size_t leader_period = 1;
    double gamma = 0.99;
    bool log_steps = true;  // keep per-step env metrics
};

struct Episode {
    Trajectory leader;
    std::vector<Trajectory> followers;
    std::vector<double> leader_step_rewards;              // per env step, settlement added to the last
    std::vector<std::vector<double>> follower_raw_rewards;  // [follower][step], before information cost
    std::map<std::string, std::vector<double>> step_log;
    NamedValues episode_log;
    std::vector<double> final_theta;
    std::size_t steps = 0;

    double leader_return(double gamma) const;
    /// Mean over followers of the discounted raw return.
    double follower_mean_return(double gamma) const;
};

/// Runs one episode. The leader acts at steps t with t mod leader_period == 0
/// and its transition reward is the sum of leader rewards until its next
/// decision; followers act every step. Followers bootstrap from their value
/// estimate when the horizon truncates the episode.
Episode rollout_episode(Environment& env, const ActorSet& actors, const PolicyBinding& binding,
                        const Characteristics& theta, const RolloutOptions& opt, std::uint64_t seed);

/// Runs episodes i = 0..seeds.size()-1 on clones of `prototype`, in parallel
/// over episodes. Output order and content do not depend on `jobs`.
std::vector<Episode> collect_episodes(const Environment& prototype, const ActorSet& actors, const PolicyBinding& binding,
                                      const Characteristics& theta, const RolloutOptions& opt,
                                      std::span<const std::uint64_t> seeds, int jobs);

/// Single-threaded reference for collect_episodes.
std::vector<Episode> collect_episodes_serial(const Environment& prototype, const ActorSet& actors,
                                             const PolicyBinding& binding, const Characteristics& theta,
                                             const RolloutOptions& opt, std::span<const std::uint64_t> seeds);

}  // namespace bilevel
