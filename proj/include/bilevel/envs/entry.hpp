#pragma once

// Market entrance game with a duty on position changes. Traders choose
// enter/stay out each step; the leader sets the duty tau to calm demand.

#include <vector>

#include "bilevel/core.hpp"
#include "bilevel/rng.hpp"

namespace bilevel::entry {

enum Position : std::size_t { StayOut = 0, Enter = 1 };

/// stay out -> beta; enter -> beta + upsilon (C - D).
double base_reward(Position action, double demand, double capacity, double beta = 1.0, double upsilon = 2.0);

/// r* - |tau r*| when the position changed, r* otherwise. tau is clamped to [0, max_tau].
double tobin_adjusted_reward(double r_star, bool position_changed, double tau, double max_tau = 0.1);

/// Minus the sample standard deviation (T - 1 denominator); 0 with fewer than 2 samples.
double scenario_reward(std::span<const double> demand);

/// Mean over t of |D_t - D_{t-1}| / D_{t-1}, skipping zero denominators.
/// `skipped` (optional) receives the number of skipped terms.
double mean_abs_pct_change(std::span<const double> demand, std::size_t* skipped = nullptr);

/// Running mean and sample variance (Welford).
class RunningStats {
public:
    void push(double x);
    std::size_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    double sample_std() const noexcept;

private:
    std::size_t n_ = 0;
    double mean_ = 0.0, m2_ = 0.0;
};

struct Params {
    std::size_t n_traders = 20;
    double capacity = 12.0;
    double beta = 1.0;
    double upsilon = 2.0;
    double max_tax = 0.1;
    bool tax_enabled = true;
    std::size_t horizon = 100;

    void validate() const;
};

class Environment final : public bilevel::Environment {
public:
    explicit Environment(Params p = {});

    std::string name() const override { return "entry"; }
    std::size_t num_followers() const override { return p_.n_traders; }
    std::size_t observation_dim(Role role) const override { return role == Role::Leader ? 2 : 4; }
    ActionSpace action_space(Role role) const override;
    std::vector<double> observation_scale(Role role) const override;
    Characteristics default_characteristics() const override;
    std::size_t leader_action_period() const override { return 1; }

    std::vector<Observation> reset(const Characteristics& theta, std::uint64_t seed) override;
    std::vector<Observation> follower_observe() const override;
    Observation leader_observe() const override;
    const Characteristics& leader_apply(const ActionValue& action) override;
    StepResult follower_step(std::span<const ActionValue> actions) override;
    std::vector<double> follower_view(std::size_t) const override { return {theta_[0]}; }
    const Characteristics& characteristics() const override { return theta_; }
    NamedValues step_metrics() const override;
    NamedValues episode_metrics() const override;
    std::unique_ptr<bilevel::Environment> clone() const override { return std::make_unique<Environment>(*this); }

    const std::vector<double>& demand() const noexcept { return demand_; }
    const Params& params() const noexcept { return p_; }

private:
    Params p_;
    Characteristics theta_;
    std::vector<Position> positions_;
    std::vector<double> demand_;
    RunningStats stats_;
    double tau_sum_ = 0.0;
};

}  // namespace bilevel::entry
