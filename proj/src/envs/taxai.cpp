#include "bilevel/envs/taxai.hpp"

#include <cmath>
#include <numeric>

#include "bilevel/errors.hpp"
#include "bilevel/metrics.hpp"

namespace bilevel::taxai {

double hsv_tax(double x, double tau, double xi) {
    if (!(x >= 0.0)) throw ParameterError("hsv_tax: income or assets must be non-negative");
    if (xi >= 1.0) throw ParameterError("hsv_tax: progressivity xi must be below 1");
    if (x == 0.0) return 0.0;
    return x - ((1.0 - tau) / (1.0 - xi)) * std::pow(x, 1.0 - xi);
}

double wage_rate(double capital, double labour, double alpha) {
    if (!(labour > 0.0)) throw DegenerateEconomyError("wage rate undefined: aggregate labour is zero");
    if (capital < 0.0) throw ParameterError("wage_rate: negative capital");
    return (1.0 - alpha) * std::pow(capital / labour, alpha);
}

double household_reward(double c, double h, double zeta) {
    return std::log(c) - std::pow(h, 1.0 + zeta) / (1.0 + zeta);
}

double government_reward(std::span<const double> household_rewards) {
    return std::accumulate(household_rewards.begin(), household_rewards.end(), 0.0);
}

void Params::validate() const {
    if (n_households == 0) throw ConfigError("taxai: n_households must be >= 1");
    if (!(zeta > 0.0)) throw ConfigError("taxai: zeta must be positive");
    if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("taxai: rho must lie in [0, 1)");
    if (!(prod_sigma >= 0.0)) throw ConfigError("taxai: prod_sigma must be non-negative");
    if (horizon == 0) throw ConfigError("taxai: horizon must be >= 1");
    if (!(consumption_floor > 0.0)) throw ConfigError("taxai: consumption_floor must be positive");
    if (!(max_progressivity >= 0.0 && max_progressivity < 1.0))
        throw ConfigError("taxai: max_progressivity must lie in [0, 1)");
}

StepOutcome economy_step(std::vector<Household>& hh, std::span<const std::vector<double>> actions,
                         std::span<const double> theta, const Params& p) {
    if (actions.size() != hh.size()) throw ConfigError("taxai: one action per household required");
    double capital = 0.0, labour = 0.0;
    for (std::size_t k = 0; k < hh.size(); ++k) {
        capital += hh[k].assets;
        labour += actions[k][1] * hh[k].productivity;
    }
    StepOutcome out;
    out.wage = labour > 0.0 ? wage_rate(capital, labour, p.alpha) : 0.0;
    out.rewards.resize(hh.size());
    for (std::size_t k = 0; k < hh.size(); ++k) {
        Household& h = hh[k];
        const double save = actions[k][0];
        h.hours = actions[k][1];
        h.income = out.wage * h.productivity * h.hours;
        const double ti = hsv_tax(h.income, theta[0], theta[1]);
        const double ta = hsv_tax(h.assets, theta[2], theta[3]);
        out.tax_revenue += ti + ta;
        const double disposable = std::max(p.consumption_floor, h.assets + h.income - ti - ta);
        h.assets = save * disposable;
        h.consumption = std::max(p.consumption_floor, (1.0 - save) * disposable);
        out.rewards[k] = household_reward(h.consumption, h.hours, p.zeta);
    }
    return out;
}

Environment::Environment(Params p) : p_(std::move(p)) {
    p_.validate();
    theta_ = default_characteristics();
}

ActionSpace Environment::action_space(Role role) const {
    if (role == Role::Leader) {
        const Characteristics c = default_characteristics();
        auto b = c.bounds();
        return ActionSpace::continuous({b.begin(), b.end()});
    }
    return ActionSpace::continuous({{0.0, 1.0}, {0.0, 1.0}});
}

std::vector<double> Environment::observation_scale(Role role) const {
    if (role == Role::Leader) return {2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
    return {1.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
}

Characteristics Environment::default_characteristics() const {
    return Characteristics({{0.0, 1.0}, {0.0, p_.max_progressivity}, {0.0, 1.0}, {0.0, p_.max_progressivity}},
                           {0.0, 0.0, 0.0, 0.0});
}

std::vector<Observation> Environment::reset(const Characteristics& theta, std::uint64_t seed) {
    rng_ = make_rng(seed);
    theta_ = default_characteristics();
    if (!p_.free_market) theta_.assign(theta.values());
    prev_theta_.assign(theta_.values().begin(), theta_.values().end());
    hh_.assign(p_.n_households, Household{});
    std::normal_distribution<double> asset_draw(0.0, p_.initial_asset_sigma);
    const double stationary_sd = p_.rho < 1.0 ? p_.prod_sigma / std::sqrt(1.0 - p_.rho * p_.rho) : p_.prod_sigma;
    std::normal_distribution<double> prod_draw(0.0, stationary_sd);
    double capital = 0.0, labour = 0.0;
    for (auto& h : hh_) {
        h.assets = std::exp(asset_draw(rng_));
        h.productivity = std::exp(prod_draw(rng_));
        capital += h.assets;
        labour += h.productivity;  // full hours
    }
    wage_ = wage_rate(capital, labour, p_.alpha);
    last_ = StepOutcome{};
    mean_savings_ratio_ = 0.0;
    return follower_observe();
}

std::vector<Observation> Environment::follower_observe() const {
    std::vector<Observation> obs(hh_.size());
    const auto th = theta_.values();
    for (std::size_t k = 0; k < hh_.size(); ++k)
        obs[k] = {wage_, hh_[k].assets, hh_[k].income, hh_[k].productivity, th[0], th[1], th[2], th[3]};
    return obs;
}

Observation Environment::leader_observe() const {
    double a = 0.0, i = 0.0, e = 0.0;
    for (const auto& h : hh_) {
        a += h.assets;
        i += h.income;
        e += h.productivity;
    }
    const double n = static_cast<double>(hh_.size());
    return {a / n, i / n, e / n, prev_theta_[0], prev_theta_[1], prev_theta_[2], prev_theta_[3]};
}

const Characteristics& Environment::leader_apply(const ActionValue& action) {
    prev_theta_.assign(theta_.values().begin(), theta_.values().end());
    if (!p_.free_market) theta_.assign(action.vector());
    return theta_;
}

StepResult Environment::follower_step(std::span<const ActionValue> actions) {
    std::vector<std::vector<double>> acts;
    acts.reserve(actions.size());
    double save = 0.0;
    for (const auto& a : actions) {
        const auto& v = a.vector();
        if (v.size() != 2 || !(v[0] >= 0.0 && v[0] <= 1.0) || !(v[1] >= 0.0 && v[1] <= 1.0))
            throw ParameterError("taxai: savings ratio and hours must lie in [0, 1]");
        acts.push_back(v);
        save += v[0];
    }
    mean_savings_ratio_ = save / static_cast<double>(std::max<std::size_t>(1, actions.size()));
    last_ = economy_step(hh_, acts, theta_.values(), p_);
    wage_ = last_.wage;
    std::normal_distribution<double> shock(0.0, p_.prod_sigma);
    for (auto& h : hh_) h.productivity = std::exp(p_.rho * std::log(h.productivity) + shock(rng_));

    StepResult r;
    r.follower_rewards = last_.rewards;
    r.leader_reward = government_reward(last_.rewards);
    r.observations = follower_observe();
    return r;
}

std::vector<double> Environment::follower_view(std::size_t i) const {
    if (i >= p_.n_households) throw ParameterError("taxai: follower index out of range");
    return {theta_.values().begin(), theta_.values().end()};
}

NamedValues Environment::step_metrics() const {
    double a = 0.0, inc = 0.0, c = 0.0, h = 0.0;
    for (const auto& x : hh_) {
        a += x.assets;
        inc += x.income;
        c += x.consumption;
        h += x.hours;
    }
    const double n = static_cast<double>(hh_.size());
    return {{"welfare", government_reward(last_.rewards)}, {"mean_assets", a / n},       {"mean_income", inc / n},
            {"mean_consumption", c / n},                  {"mean_hours", h / n},        {"wage", wage_},
            {"savings_ratio", mean_savings_ratio_},      {"tax_revenue", last_.tax_revenue}};
}

NamedValues Environment::episode_metrics() const {
    std::vector<double> assets, income;
    for (const auto& x : hh_) {
        assets.push_back(x.assets);
        income.push_back(x.income);
    }
    const auto th = theta_.values();
    return {{"gini_assets", gini(assets)}, {"gini_income", gini(income)}, {"tau_income", th[0]},
            {"xi_income", th[1]},          {"tau_assets", th[2]},          {"xi_assets", th[3]}};
}

}  // namespace bilevel::taxai
