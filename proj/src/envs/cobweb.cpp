#include "bilevel/envs/cobweb.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bilevel/errors.hpp"
#include "bilevel/info.hpp"

namespace bilevel::cobweb {

double supply(double p_hat, double psi, double offset) { return std::tanh(psi * (p_hat - offset)) + 1.0; }

void Params::validate() const {
    if (!(b > 0.0)) throw ConfigError("cobweb: b must be positive");
    if (!(psi > 0.0)) throw ConfigError("cobweb: psi must be positive");
    if (!(sigma_eps >= 0.0)) throw ConfigError("cobweb: sigma_eps must be non-negative");
    if (price_bins < 2) throw ConfigError("cobweb: price_bins must be >= 2");
    if (horizon == 0) throw ConfigError("cobweb: horizon must be >= 1");
    if (!(lambda_max > 0.0) || !(sigma_max >= 0.0)) throw ConfigError("cobweb: lambda bounds must be positive");
}

double market_price(std::span<const double> predictions, const Params& p, double noise) {
    if (predictions.size() != p.n_producers)
        throw ParameterError("market_price: expected " + std::to_string(p.n_producers) + " predictions");
    double s = 0.0;
    for (double x : predictions) s += supply(x, p.psi, p.offset());
    return (p.a - s) / p.b + noise;
}

double equilibrium_price(const Params& p, double tol) {
    const double n = static_cast<double>(p.n_producers);
    auto g = [&](double x) { return x - (p.a - n * supply(x, p.psi, p.offset())) / p.b; };
    double lo = 0.0, hi = p.a / p.b;
    for (int widen = 0; g(lo) * g(hi) > 0.0; ++widen) {
        if (widen == 20) throw ParameterError("equilibrium_price: no sign change in the bracket");
        const double w = hi - lo;
        lo -= w;
        hi += w;
    }
    if (g(lo) == 0.0) return lo;
    if (g(hi) == 0.0) return hi;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if ((g(mid) > 0.0) == (g(hi) > 0.0))
            hi = mid;
        else
            lo = mid;
    }
    return 0.5 * (lo + hi);
}

double producer_reward(double p, double p_hat) {
    const double e = p - p_hat;
    return std::max(0.0, 1300.0 - 260.0 * e * e);
}

double penalized_producer_objective(double reward, double lambda, std::span<const double> policy) {
    if (lambda < 0.0) throw ParameterError("processing penalty must be non-negative");
    if (lambda == 0.0) return reward;
    return reward - lambda * kl_to_uniform(policy);
}

double calibrator_reward(double p, double phi) { return -std::abs(phi - p); }

ErrorMetrics error_metrics(std::span<const double> errors) {
    ErrorMetrics m;
    if (errors.empty()) return m;
    for (double e : errors) {
        m.mae += std::abs(e);
        m.rmse += e * e;
    }
    const double n = static_cast<double>(errors.size());
    m.mae /= n;
    m.rmse = std::sqrt(m.rmse / n);
    return m;
}

namespace {

double quantile_sorted(const std::vector<double>& s, double q) {
    const double pos = std::clamp(q * static_cast<double>(s.size()) - 0.5, 0.0, static_cast<double>(s.size() - 1));
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= s.size()) return s.back();
    const double f = pos - static_cast<double>(i);
    return s[i] + f * (s[i + 1] - s[i]);
}

}  // namespace

ErrorMetrics quantile_matched_metrics(std::span<const double> simulated, std::span<const double> target) {
    if (simulated.empty() || target.empty()) throw ParameterError("calibration metrics need non-empty samples");
    std::vector<double> a(simulated.begin(), simulated.end()), b(target.begin(), target.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const std::size_t m = std::min(a.size(), b.size());
    std::vector<double> err(m);
    for (std::size_t k = 0; k < m; ++k) {
        const double q = (static_cast<double>(k) + 0.5) / static_cast<double>(m);
        err[k] = quantile_sorted(a, q) - quantile_sorted(b, q);
    }
    return error_metrics(err);
}

ErrorMetrics calibration_metrics(std::span<const double> simulated, std::span<const double> target,
                                 std::size_t resamples, Rng& rng) {
    if (resamples == 0) return quantile_matched_metrics(simulated, target);
    std::uniform_int_distribution<std::size_t> pick(0, target.size() - 1);
    std::vector<double> boot(target.size());
    ErrorMetrics acc;
    for (std::size_t r = 0; r < resamples; ++r) {
        for (double& x : boot) x = target[pick(rng)];
        const auto m = quantile_matched_metrics(simulated, boot);
        acc.mae += m.mae;
        acc.rmse += m.rmse;
    }
    acc.mae /= static_cast<double>(resamples);
    acc.rmse /= static_cast<double>(resamples);
    return acc;
}

double sample_truncated_lambda(double mu, double sigma, Rng& rng) {
    if (!(sigma >= 0.0)) throw ParameterError("lambda sd must be non-negative");
    if (sigma == 0.0) return std::max(mu, 0.0);
    std::normal_distribution<double> d(mu, sigma);
    // Rejection is cheap unless almost all mass is below 0.
    for (int k = 0; k < 10000; ++k) {
        const double x = d(rng);
        if (x >= 0.0) return x;
    }
    return 0.0;
}

std::pair<double, double> truncated_moments(double mu, double sigma) {
    if (sigma == 0.0) return {std::max(mu, 0.0), 0.0};
    const double alpha = -mu / sigma;
    const double phi = std::exp(-0.5 * alpha * alpha) / std::sqrt(2.0 * M_PI);
    const double z = 0.5 * std::erfc(alpha / std::sqrt(2.0));
    const double ratio = phi / z;
    const double mean = mu + sigma * ratio;
    const double var = sigma * sigma * (1.0 + alpha * ratio - ratio * ratio);
    return {mean, std::sqrt(std::max(var, 0.0))};
}

std::vector<double> load_target_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open target file '" + path + "'");
    std::vector<double> v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        double x;
        std::string rest;
        if (!(ss >> x) || (ss >> rest) || !std::isfinite(x))
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected one finite number");
        v.push_back(x);
    }
    if (v.empty()) throw ConfigError("target file '" + path + "' holds no values");
    return v;
}

Environment::Environment(Params p, std::vector<double> target) : p_(std::move(p)), target_(std::move(target)) {
    p_.validate();
    theta_ = default_characteristics();
    lambda_.assign(p_.n_producers, 0.0);
}

ActionSpace Environment::action_space(Role role) const {
    if (role == Role::Leader) {
        const Characteristics c = default_characteristics();
        auto b = c.bounds();
        return ActionSpace::continuous({b.begin(), b.end()});
    }
    if (p_.continuous_predictions) return ActionSpace::continuous({{0.0, p_.a / p_.b}});
    return ActionSpace::discrete(p_.price_bins);
}

std::vector<double> Environment::observation_scale(Role role) const {
    const double ps = p_.a / (2.0 * p_.b);
    if (role == Role::Leader) return std::vector<double>(p_.n_producers + 1, ps);
    return {ps, ps, ps, std::max(1.0, p_.lambda_max / 2.0)};
}

Characteristics Environment::default_characteristics() const {
    if (p_.mode == Params::Mode::Individual)
        return Characteristics(std::vector<Bound>(p_.n_producers, Bound{0.0, p_.lambda_max}));
    return Characteristics({{0.0, p_.lambda_max}, {0.0, p_.sigma_max}}, {0.0, 0.0});
}

double Environment::bin_price(std::size_t k) const {
    return (p_.a / p_.b) * static_cast<double>(k) / static_cast<double>(p_.price_bins - 1);
}

void Environment::draw_lambdas() {
    const auto th = theta_.values();
    lambda_.resize(p_.n_producers);
    if (p_.mode == Params::Mode::Individual) {
        for (std::size_t i = 0; i < p_.n_producers; ++i) lambda_[i] = th[i];
        return;
    }
    for (double& l : lambda_) l = sample_truncated_lambda(th[0], th[1], rng_);
}

std::vector<Observation> Environment::reset(const Characteristics& theta, std::uint64_t seed) {
    rng_ = make_rng(seed);
    theta_ = default_characteristics();
    theta_.assign(theta.values());
    const double prior = p_.a / (2.0 * p_.b);
    last_pred_.assign(p_.n_producers, prior);
    mean_pred_.assign(p_.n_producers, prior);
    prices_.clear();
    price_sum_ = 0.0;
    last_price_ = prior;
    last_reward_ = 0.0;
    draw_lambdas();
    return follower_observe();
}

std::vector<Observation> Environment::follower_observe() const {
    const double mean_price = prices_.empty() ? last_price_ : price_sum_ / static_cast<double>(prices_.size());
    std::vector<Observation> obs(p_.n_producers);
    for (std::size_t i = 0; i < p_.n_producers; ++i) obs[i] = {mean_price, mean_pred_[i], last_price_, lambda_[i]};
    return obs;
}

Observation Environment::leader_observe() const {
    Observation o(last_pred_.begin(), last_pred_.end());
    o.push_back(last_price_);
    return o;
}

const Characteristics& Environment::leader_apply(const ActionValue& action) {
    theta_.assign(action.vector());
    draw_lambdas();
    return theta_;
}

StepResult Environment::follower_step(std::span<const ActionValue> actions) {
    if (actions.size() != p_.n_producers) throw ConfigError("cobweb: one prediction per producer required");
    for (std::size_t i = 0; i < actions.size(); ++i)
        last_pred_[i] = actions[i].is_discrete() ? bin_price(actions[i].index()) : actions[i].vector().at(0);
    std::normal_distribution<double> eps(0.0, p_.sigma_eps);
    const double noise = p_.sigma_eps > 0.0 ? eps(rng_) : 0.0;
    const double price = market_price(last_pred_, p_, noise);

    StepResult r;
    r.follower_rewards.resize(p_.n_producers);
    for (std::size_t i = 0; i < p_.n_producers; ++i) r.follower_rewards[i] = producer_reward(price, last_pred_[i]);
    const std::size_t t = prices_.size();
    if (p_.reward == Params::Reward::Series && !target_.empty())
        r.leader_reward = calibrator_reward(price, target_[t % target_.size()]);
    last_reward_ = r.leader_reward;

    prices_.push_back(price);
    price_sum_ += price;
    last_price_ = price;
    const double n = static_cast<double>(prices_.size());
    for (std::size_t i = 0; i < p_.n_producers; ++i) mean_pred_[i] += (last_pred_[i] - mean_pred_[i]) / n;
    r.observations = follower_observe();
    return r;
}

double Environment::finish_episode() {
    if (p_.reward != Params::Reward::Distribution || target_.empty() || prices_.empty()) return 0.0;
    return -quantile_matched_metrics(prices_, target_).mae;
}

NamedValues Environment::step_metrics() const {
    double pred = 0.0;
    for (double x : last_pred_) pred += x;
    return {{"price", last_price_}, {"mean_prediction", pred / static_cast<double>(last_pred_.size())},
            {"calibrator_reward", last_reward_}};
}

NamedValues Environment::episode_metrics() const {
    double m = 0.0, ss = 0.0;
    for (double x : prices_) m += x;
    m /= std::max<std::size_t>(1, prices_.size());
    for (double x : prices_) ss += (x - m) * (x - m);
    const double sd = prices_.size() > 1 ? std::sqrt(ss / static_cast<double>(prices_.size() - 1)) : 0.0;
    double lm = 0.0;
    for (double l : lambda_) lm += l;
    NamedValues v{{"mean_price", m}, {"price_std", sd}, {"mean_lambda", lm / static_cast<double>(lambda_.size())}};
    const auto th = theta_.values();
    if (p_.mode == Params::Mode::Distributional) {
        v.emplace_back("mu", th[0]);
        v.emplace_back("sigma", th[1]);
    }
    return v;
}

}  // namespace bilevel::cobweb
