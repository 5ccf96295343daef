#pragma once

// A market maker quotes a symmetric half-spread around an exogenous
// mean-reverting price; zero-intelligence liquidity takers trade one unit
// when their private valuation crosses the quote. The MM's reward mixes PnL
// and market share by its preference omega, which the leader samples.

#include <vector>

#include "bilevel/core.hpp"
#include "bilevel/info.hpp"
#include "bilevel/rng.hpp"

namespace bilevel::mm {

/// max(0, kappa p0 + (1 - kappa) p_prev + shock).
double price_step(double p_prev, double p0, double kappa, double shock);

struct Quotes {
    double bid = 0.0;
    double ask = 0.0;
    double spread() const noexcept { return ask - bid; }
};

Quotes quote_prices(double p, double half_spread);

enum class Side { Buyer, Seller };
enum class Decision { NoAct, Trade };

/// Buyers lift the ask iff v > ask; sellers hit the bid iff v < bid.
Decision lt_decide(Side side, double valuation, double bid, double ask);

/// q_bid (p_prev - bid) + q_ask (ask - p_prev).
double pnl(double q_bid, double q_ask, double p_prev, double bid, double ask);

/// omega PnL/n + (1 - omega) m/n.
double mm_reward(double omega, double pnl_t, double market_share, double n);

struct Params {
    double p0 = 100.0;
    double kappa = 0.01;
    double sigma_shock = 1.0;
    double valuation_std = 5.0;
    std::size_t n_lts = 20;
    double max_half_spread = 10.0;
    std::size_t horizon = 100;
    bool resample_per_step = false;  // omega drawn each step instead of each episode

    void validate() const;
};

class Environment final : public bilevel::Environment {
public:
    explicit Environment(Params p = {});

    std::string name() const override { return "market_maker"; }
    std::size_t num_followers() const override { return 1; }
    std::size_t observation_dim(Role role) const override { return role == Role::Leader ? 1 : 2; }
    ActionSpace action_space(Role role) const override;
    Characteristics default_characteristics() const override;
    std::size_t leader_action_period() const override { return p_.resample_per_step ? 1 : p_.horizon; }

    std::vector<Observation> reset(const Characteristics& theta, std::uint64_t seed) override;
    std::vector<Observation> follower_observe() const override;
    Observation leader_observe() const override { return {price_ / p_.p0}; }
    const Characteristics& leader_apply(const ActionValue& action) override;
    StepResult follower_step(std::span<const ActionValue> actions) override;
    std::vector<double> follower_view(std::size_t) const override { return {theta_[0]}; }
    const Characteristics& characteristics() const override { return theta_; }
    NamedValues step_metrics() const override;
    NamedValues episode_metrics() const override;
    std::unique_ptr<bilevel::Environment> clone() const override { return std::make_unique<Environment>(*this); }

    double price() const noexcept { return price_; }
    const Params& params() const noexcept { return p_; }

private:
    Params p_;
    Rng rng_;
    Characteristics theta_;
    std::vector<Side> sides_;
    double price_ = 0.0;
    double prev_price_ = 0.0;
    double last_half_spread_ = 0.0, last_pnl_ = 0.0, last_trades_ = 0.0, last_reward_ = 0.0;
    double sum_half_spread_ = 0.0, sum_pnl_ = 0.0, sum_trades_ = 0.0, sum_reward_ = 0.0;
    std::size_t steps_ = 0;
};

}  // namespace bilevel::mm
