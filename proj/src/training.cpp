#include "bilevel/training.hpp"

#include <algorithm>
#include <cmath>

#include "bilevel/errors.hpp"

namespace bilevel {

namespace {

std::vector<std::uint64_t> episode_seeds(std::uint64_t root, std::size_t it, std::size_t phase, std::size_t count) {
    std::vector<std::uint64_t> s(count);
    for (std::size_t e = 0; e < count; ++e) s[e] = derive_seed(root, {it, phase, e});
    return s;
}

ActorSet behaviour_actors(const Learner& leader, std::span<Learner* const> followers, bool eval_leader) {
    ActorSet a;
    a.leader = eval_leader ? &leader.eval_actor() : &leader.actor();
    for (auto* f : followers) a.groups.push_back(&f->actor());
    return a;
}

double mean_leader_return(const std::vector<Episode>& eps, double gamma) {
    if (eps.empty()) return 0.0;
    double s = 0.0;
    for (const auto& e : eps) s += e.leader_return(gamma);
    return s / static_cast<double>(eps.size());
}

double mean_follower_return(const std::vector<Episode>& eps, double gamma) {
    if (eps.empty()) return 0.0;
    double s = 0.0;
    for (const auto& e : eps) s += e.follower_mean_return(gamma);
    return s / static_cast<double>(eps.size());
}

}  // namespace

TrainingReport alternating_train(const Environment& env, Learner& leader, std::span<Learner* const> followers,
                                 const PolicyBinding& binding, const TrainingConfig& cfg) {
    cfg.schedule.validate();
    binding.validate(env.num_followers());
    if (followers.size() != binding.num_groups())
        throw ConfigError("training: " + std::to_string(followers.size()) + " follower learners for " +
                          std::to_string(binding.num_groups()) + " policy groups");

    RolloutOptions opt;
    opt.horizon = cfg.horizon;
    opt.leader_period = cfg.schedule.leader_action_period;
    opt.gamma = cfg.gamma;
    opt.log_steps = false;
    const Characteristics theta0 = env.default_characteristics();
    const std::size_t K = cfg.schedule.inner_updates_per_outer;

    TrainingReport report;
    for (std::size_t it = 0; it < cfg.schedule.total_outer_iterations; ++it) {
        try {
            const ActorSet actors = behaviour_actors(leader, followers, false);
            std::vector<Episode> last;
            for (std::size_t k = 0; k < K; ++k) {
                const bool any = std::any_of(followers.begin(), followers.end(),
                                             [](const Learner* l) { return l->needs_experience(); });
                if (any) {
                    auto seeds = episode_seeds(cfg.seed, it, k, cfg.follower_episodes);
                    last = collect_episodes(env, actors, binding, theta0, opt, seeds, cfg.jobs);
                }
                for (std::size_t g = 0; g < followers.size(); ++g) {
                    std::vector<const Trajectory*> batch;
                    for (const auto& ep : last)
                        for (std::size_t f : binding.members(g)) batch.push_back(&ep.followers[f]);
                    followers[g]->update(batch);
                }
                ++report.follower_rounds;
            }

            std::vector<Episode> leader_eps;
            if (leader.needs_experience() || last.empty()) {
                auto seeds = episode_seeds(cfg.seed, it, K, cfg.leader_episodes);
                leader_eps = collect_episodes(env, actors, binding, theta0, opt, seeds, cfg.jobs);
            } else {
                leader_eps = std::move(last);
                last.clear();
            }
            std::vector<const Trajectory*> lbatch;
            for (const auto& ep : leader_eps)
                if (ep.leader.size() > 0) lbatch.push_back(&ep.leader);
            leader.update(lbatch);
            ++report.leader_updates;

            const double lr = mean_leader_return(leader_eps, cfg.gamma);
            const double fr = mean_follower_return(last.empty() ? leader_eps : last, cfg.gamma);
            if (!std::isfinite(lr)) throw NonFiniteError(leader.name(), -1, "leader return");
            if (!std::isfinite(fr)) throw NonFiniteError("followers", -1, "follower return");
            report.leader_return.add(static_cast<long>(it), lr);
            report.follower_return.add(static_cast<long>(it), fr);
            std::vector<double> th(theta0.size(), 0.0);
            for (const auto& ep : leader_eps)
                for (std::size_t d = 0; d < th.size() && d < ep.final_theta.size(); ++d) th[d] += ep.final_theta[d];
            for (double& v : th) v /= std::max<std::size_t>(1, leader_eps.size());
            report.theta.push_back(std::move(th));
            if (cfg.on_iteration) cfg.on_iteration(it, lr, fr);
        } catch (const NonFiniteError& e) {
            throw e.at_iteration(static_cast<long>(it));
        }
    }
    return report;
}

std::vector<Episode> evaluate(const Environment& env, const Learner& leader, std::span<Learner* const> followers,
                              const PolicyBinding& binding, const RolloutOptions& opt, std::uint64_t seed,
                              std::size_t rollouts, int jobs) {
    const ActorSet actors = behaviour_actors(leader, followers, true);
    std::vector<std::uint64_t> seeds(rollouts);
    for (std::size_t r = 0; r < rollouts; ++r) seeds[r] = derive_seed(seed, {r});
    return collect_episodes(env, actors, binding, env.default_characteristics(), opt, seeds, jobs);
}

std::vector<ActionSample> ConstantActor::act(const nn::Matrix& obs, std::span<Rng* const>) const {
    std::vector<ActionSample> out(static_cast<std::size_t>(obs.cols()));
    for (auto& s : out) {
        s.action = action_;
        s.raw = action_.is_discrete() ? std::vector<double>{static_cast<double>(action_.index())} : action_.vector();
    }
    return out;
}

UpdateStats FixedLeader::update(std::span<const Trajectory* const>) {
    count_update();
    return {};
}

UpdateStats MaxEntropyLeader::update(std::span<const Trajectory* const>) {
    count_update();
    return {};
}

std::vector<ActionSample> MaxEntropyLeader::Sampler::act(const nn::Matrix& obs, std::span<Rng* const> rngs) const {
    std::vector<ActionSample> out(static_cast<std::size_t>(obs.cols()));
    for (std::size_t c = 0; c < out.size(); ++c) {
        const double w = max_entropy_sample(grid_, *rngs[c]);
        out[c].action = ActionValue::continuous({w});
        out[c].raw = {w};
        out[c].log_prob = -std::log(static_cast<double>(grid_.size()));
    }
    return out;
}

BayesLeader::BayesLeader(std::vector<Bound> bounds, std::uint64_t seed, BayesConfig cfg)
    : bounds_(std::move(bounds)), cfg_(cfg), rng_(make_rng(seed)), current_(ActionValue{}), best_(ActionValue{}) {
    auto x = bayes_suggest(state_, bounds_, rng_, cfg_);
    current_.set_action(ActionValue::continuous(x));
    best_.set_action(ActionValue::continuous(std::move(x)));
}

UpdateStats BayesLeader::update(std::span<const Trajectory* const> batch) {
    if (!batch.empty()) {
        double s = 0.0;
        for (const auto* tr : batch) s += discounted_return(tr->rewards(), tr->gamma);
        const double y = s / static_cast<double>(batch.size());
        if (!std::isfinite(y)) throw NonFiniteError(name(), -1, "outer return");
        state_.add(current_.action().vector(), y);
        best_.set_action(ActionValue::continuous(state_.xs()[state_.best_index()]));
        current_.set_action(ActionValue::continuous(bayes_suggest(state_, bounds_, rng_, cfg_)));
    }
    count_update();
    return {};
}

}  // namespace bilevel
