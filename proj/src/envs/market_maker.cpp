#include "bilevel/envs/market_maker.hpp"

#include <algorithm>
#include <cmath>

#include "bilevel/errors.hpp"

namespace bilevel::mm {

double price_step(double p_prev, double p0, double kappa, double shock) {
    return std::max(0.0, kappa * p0 + (1.0 - kappa) * p_prev + shock);
}

Quotes quote_prices(double p, double half_spread) {
    if (half_spread < 0.0) throw ParameterError("half spread must be non-negative");
    return {p - half_spread, p + half_spread};
}

Decision lt_decide(Side side, double valuation, double bid, double ask) {
    if (side == Side::Buyer) return valuation > ask ? Decision::Trade : Decision::NoAct;
    return valuation < bid ? Decision::Trade : Decision::NoAct;
}

double pnl(double q_bid, double q_ask, double p_prev, double bid, double ask) {
    return q_bid * (p_prev - bid) + q_ask * (ask - p_prev);
}

double mm_reward(double omega, double pnl_t, double market_share, double n) {
    return omega * pnl_t / n + (1.0 - omega) * market_share / n;
}

void Params::validate() const {
    if (!(kappa > 0.0 && kappa <= 1.0)) throw ConfigError("market_maker: kappa must lie in (0, 1]");
    if (!(sigma_shock >= 0.0) || !(valuation_std >= 0.0))
        throw ConfigError("market_maker: sigma_shock and valuation_std must be non-negative");
    if (!(p0 >= 0.0)) throw ConfigError("market_maker: p0 must be non-negative");
    if (n_lts == 0) throw ConfigError("market_maker: n_lts must be >= 1");
    if (!(max_half_spread > 0.0)) throw ConfigError("market_maker: max_half_spread must be positive");
    if (horizon == 0) throw ConfigError("market_maker: horizon must be >= 1");
}

Environment::Environment(Params p) : p_(std::move(p)) {
    p_.validate();
    theta_ = default_characteristics();
}

ActionSpace Environment::action_space(Role role) const {
    if (role == Role::Leader) return ActionSpace::continuous({{0.0, 1.0}});
    return ActionSpace::continuous({{0.0, p_.max_half_spread}});
}

Characteristics Environment::default_characteristics() const { return Characteristics({{0.0, 1.0}}, {0.0}); }

std::vector<Observation> Environment::reset(const Characteristics& theta, std::uint64_t seed) {
    rng_ = make_rng(seed);
    theta_ = default_characteristics();
    theta_.assign(theta.values());
    sides_.resize(p_.n_lts);
    std::bernoulli_distribution coin(0.5);
    for (auto& s : sides_) s = coin(rng_) ? Side::Buyer : Side::Seller;
    price_ = prev_price_ = p_.p0;
    last_half_spread_ = last_pnl_ = last_trades_ = last_reward_ = 0.0;
    sum_half_spread_ = sum_pnl_ = sum_trades_ = sum_reward_ = 0.0;
    steps_ = 0;
    return follower_observe();
}

std::vector<Observation> Environment::follower_observe() const {
    return {Observation{p_.p0 > 0.0 ? price_ / p_.p0 : price_, theta_[0]}};
}

const Characteristics& Environment::leader_apply(const ActionValue& action) {
    theta_.assign(action.vector());
    return theta_;
}

StepResult Environment::follower_step(std::span<const ActionValue> actions) {
    if (actions.size() != 1) throw ConfigError("market_maker: exactly one market maker");
    const double hs = actions[0].vector().at(0);
    if (!(hs >= 0.0 && hs <= p_.max_half_spread)) throw ParameterError("market_maker: half spread out of bounds");
    const Quotes q = quote_prices(price_, hs);
    std::normal_distribution<double> val(p_.p0, p_.valuation_std);
    double q_bid = 0.0, q_ask = 0.0;
    for (Side s : sides_) {
        const double v = p_.valuation_std > 0.0 ? val(rng_) : p_.p0;
        if (lt_decide(s, v, q.bid, q.ask) == Decision::Trade) (s == Side::Buyer ? q_ask : q_bid) += 1.0;
    }
    const double n = static_cast<double>(p_.n_lts);
    const double m = q_bid + q_ask;
    last_pnl_ = pnl(q_bid, q_ask, prev_price_, q.bid, q.ask);
    last_trades_ = m;
    last_half_spread_ = hs;
    last_reward_ = mm_reward(theta_[0], last_pnl_, m, n);
    sum_half_spread_ += hs;
    sum_pnl_ += last_pnl_;
    sum_trades_ += m;
    sum_reward_ += last_reward_;
    ++steps_;

    std::normal_distribution<double> shock(0.0, p_.sigma_shock);
    prev_price_ = price_;
    price_ = price_step(price_, p_.p0, p_.kappa, p_.sigma_shock > 0.0 ? shock(rng_) : 0.0);

    StepResult r;
    r.follower_rewards = {last_reward_};
    r.observations = follower_observe();
    return r;
}

NamedValues Environment::step_metrics() const {
    return {{"half_spread", last_half_spread_}, {"pnl", last_pnl_}, {"trades", last_trades_},
            {"mm_reward", last_reward_},         {"price", prev_price_}, {"omega", theta_[0]}};
}

NamedValues Environment::episode_metrics() const {
    const double k = static_cast<double>(std::max<std::size_t>(1, steps_));
    return {{"omega", theta_[0]},          {"mean_spread", 2.0 * sum_half_spread_ / k}, {"mean_pnl", sum_pnl_ / k},
            {"mean_trades", sum_trades_ / k}, {"mean_reward", sum_reward_ / k}};
}

}  // namespace bilevel::mm
