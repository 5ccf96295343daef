#pragma once

// Heterogeneous-household economy with a tax-setting government.
// Households choose a savings ratio p and hours h; the government sets
// HSV income and asset tax parameters theta = {tau_i, xi_i, tau_a, xi_a}.

#include <vector>

#include "bilevel/core.hpp"
#include "bilevel/rng.hpp"

namespace bilevel::taxai {

/// x - ((1 - tau)/(1 - xi)) x^(1 - xi). Negative values are transfers.
double hsv_tax(double x, double tau, double xi);

/// W = (1 - alpha) (K/L)^alpha. Throws DegenerateEconomyError when L == 0.
double wage_rate(double capital, double labour, double alpha = 1.0 / 3.0);

/// log c - h^(1+zeta)/(1+zeta).
double household_reward(double c, double h, double zeta);

double government_reward(std::span<const double> household_rewards);

struct Params {
    std::size_t n_households = 10;
    double zeta = 2.0;
    double rho = 0.9;
    double prod_sigma = 0.1;
    std::size_t horizon = 100;
    double consumption_floor = 1e-3;
    bool free_market = false;
    double alpha = 1.0 / 3.0;
    double max_progressivity = 0.9;  // upper bound of xi_i, xi_a (xi = 1 is singular)
    double initial_asset_sigma = 0.5;  // log-normal sd of starting assets (median 1)

    void validate() const;
};

struct Household {
    double assets = 0.0;
    double income = 0.0;
    double productivity = 1.0;
    double consumption = 0.0;
    double hours = 0.0;
};

/// One transition of the whole economy. actions[k] = {p, h}.
struct StepOutcome {
    std::vector<double> rewards;
    double wage = 0.0;
    double tax_revenue = 0.0;
};

/// Applies the period's production, taxes, consumption and saving. Does not
/// draw productivity shocks.
StepOutcome economy_step(std::vector<Household>& hh, std::span<const std::vector<double>> actions,
                         std::span<const double> theta, const Params& p);

class Environment final : public bilevel::Environment {
public:
    explicit Environment(Params p = {});

    std::string name() const override { return "taxai"; }
    std::size_t num_followers() const override { return p_.n_households; }
    std::size_t observation_dim(Role role) const override { return role == Role::Leader ? 7 : 8; }
    ActionSpace action_space(Role role) const override;
    std::vector<double> observation_scale(Role role) const override;
    Characteristics default_characteristics() const override;
    std::size_t leader_action_period() const override { return p_.horizon; }

    std::vector<Observation> reset(const Characteristics& theta, std::uint64_t seed) override;
    std::vector<Observation> follower_observe() const override;
    Observation leader_observe() const override;
    const Characteristics& leader_apply(const ActionValue& action) override;
    StepResult follower_step(std::span<const ActionValue> actions) override;
    std::vector<double> follower_view(std::size_t i) const override;
    const Characteristics& characteristics() const override { return theta_; }
    NamedValues step_metrics() const override;
    NamedValues episode_metrics() const override;
    std::unique_ptr<bilevel::Environment> clone() const override { return std::make_unique<Environment>(*this); }

    const std::vector<Household>& households() const noexcept { return hh_; }
    double wage() const noexcept { return wage_; }
    const Params& params() const noexcept { return p_; }

private:
    Params p_;
    Rng rng_;
    Characteristics theta_;
    std::vector<double> prev_theta_;
    std::vector<Household> hh_;
    double wage_ = 0.0;
    StepOutcome last_;
    double mean_savings_ratio_ = 0.0;
};

}  // namespace bilevel::taxai
