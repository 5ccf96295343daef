#include "bilevel/envs/entry.hpp"

#include <algorithm>
#include <cmath>

#include "bilevel/errors.hpp"

namespace bilevel::entry {

double base_reward(Position action, double demand, double capacity, double beta, double upsilon) {
    return action == StayOut ? beta : beta + upsilon * (capacity - demand);
}

double tobin_adjusted_reward(double r_star, bool position_changed, double tau, double max_tau) {
    if (!position_changed) return r_star;
    tau = std::clamp(tau, 0.0, max_tau);
    return r_star - std::abs(tau * r_star);
}

double scenario_reward(std::span<const double> demand) {
    RunningStats s;
    for (double d : demand) s.push(d);
    return -s.sample_std();
}

double mean_abs_pct_change(std::span<const double> demand, std::size_t* skipped) {
    if (demand.size() < 2) throw ParameterError("mean_abs_pct_change needs at least two points");
    double sum = 0.0;
    std::size_t used = 0, skip = 0;
    for (std::size_t t = 1; t < demand.size(); ++t) {
        if (demand[t - 1] == 0.0) {
            ++skip;
            continue;
        }
        sum += std::abs(demand[t] - demand[t - 1]) / demand[t - 1];
        ++used;
    }
    if (skipped) *skipped = skip;
    return used ? sum / static_cast<double>(used) : 0.0;
}

void RunningStats::push(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
}

double RunningStats::sample_std() const noexcept {
    return n_ < 2 ? 0.0 : std::sqrt(std::max(m2_, 0.0) / static_cast<double>(n_ - 1));
}

void Params::validate() const {
    if (n_traders == 0) throw ConfigError("entry: n_traders must be >= 1");
    if (!(capacity >= 0.0 && capacity <= static_cast<double>(n_traders)))
        throw ConfigError("entry: capacity must lie in [0, n_traders]");
    if (!(max_tax >= 0.0)) throw ConfigError("entry: max_tax must be non-negative");
    if (horizon == 0) throw ConfigError("entry: horizon must be >= 1");
}

Environment::Environment(Params p) : p_(std::move(p)) {
    p_.validate();
    theta_ = default_characteristics();
}

ActionSpace Environment::action_space(Role role) const {
    if (role == Role::Leader) return ActionSpace::continuous({{0.0, p_.max_tax}});
    return ActionSpace::discrete(2);
}

std::vector<double> Environment::observation_scale(Role role) const {
    const double n = static_cast<double>(p_.n_traders);
    const double t = p_.max_tax > 0.0 ? p_.max_tax : 1.0;
    if (role == Role::Leader) return {std::max(1.0, n / 4.0), t};
    return {n, n, 1.0, t};
}

Characteristics Environment::default_characteristics() const {
    return Characteristics({{0.0, p_.max_tax}}, {0.0});
}

std::vector<Observation> Environment::reset(const Characteristics& theta, std::uint64_t) {
    theta_ = default_characteristics();
    if (p_.tax_enabled) theta_.assign(theta.values());
    positions_.assign(p_.n_traders, StayOut);
    demand_.clear();
    stats_ = RunningStats{};
    tau_sum_ = 0.0;
    return follower_observe();
}

std::vector<Observation> Environment::follower_observe() const {
    const double prev = demand_.empty() ? p_.capacity : demand_.back();
    const double avg = demand_.empty() ? p_.capacity : stats_.mean();
    std::vector<Observation> obs(p_.n_traders);
    for (std::size_t k = 0; k < p_.n_traders; ++k)
        obs[k] = {prev, avg, static_cast<double>(positions_[k]), theta_[0]};
    return obs;
}

Observation Environment::leader_observe() const { return {stats_.sample_std(), theta_[0]}; }

const Characteristics& Environment::leader_apply(const ActionValue& action) {
    if (p_.tax_enabled) theta_.assign(action.vector());
    return theta_;
}

StepResult Environment::follower_step(std::span<const ActionValue> actions) {
    if (actions.size() != p_.n_traders) throw ConfigError("entry: one decision per trader required");
    double d = 0.0;
    for (const auto& a : actions) {
        if (!a.is_discrete() || a.index() > 1) throw ParameterError("entry: actions are enter or stay out");
        d += a.index() == Enter ? 1.0 : 0.0;
    }
    StepResult r;
    r.follower_rewards.resize(p_.n_traders);
    const double tau = theta_[0];
    for (std::size_t k = 0; k < p_.n_traders; ++k) {
        const auto act = static_cast<Position>(actions[k].index());
        const double rs = base_reward(act, d, p_.capacity, p_.beta, p_.upsilon);
        r.follower_rewards[k] = tobin_adjusted_reward(rs, act != positions_[k], tau, p_.max_tax);
        positions_[k] = act;
    }
    demand_.push_back(d);
    stats_.push(d);
    tau_sum_ += tau;
    r.leader_reward = -stats_.sample_std();
    r.observations = follower_observe();
    return r;
}

NamedValues Environment::step_metrics() const {
    return {{"demand", demand_.empty() ? 0.0 : demand_.back()}, {"tax", theta_[0]}};
}

NamedValues Environment::episode_metrics() const {
    NamedValues v{{"demand_std", stats_.sample_std()}, {"mean_demand", stats_.mean()}};
    v.emplace_back("mean_abs_pct_change", demand_.size() >= 2 ? mean_abs_pct_change(demand_) : 0.0);
    v.emplace_back("mean_tax", demand_.empty() ? 0.0 : tau_sum_ / static_cast<double>(demand_.size()));
    return v;
}

}  // namespace bilevel::entry
