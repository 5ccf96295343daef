#pragma once

// Cobweb market: producers forecast the next price, supply follows their
// forecasts and the price clears against linear demand. The calibrator
// tunes the producers' information-processing penalties lambda.

#include <string>
#include <vector>

#include "bilevel/core.hpp"
#include "bilevel/rng.hpp"

namespace bilevel::cobweb {

/// tanh(psi (p_hat - offset)) + 1.
double supply(double p_hat, double psi, double offset);

struct Params {
    double a = 13.8;
    double b = 1.5;
    double psi = 2.0;
    std::size_t n_producers = 6;
    double supply_offset = -1.0;  // < 0 means "use n_producers"
    double sigma_eps = 0.1;
    std::size_t price_bins = 21;
    bool continuous_predictions = false;  // predictions in [0, a/b] instead of the bin grid
    std::size_t horizon = 100;

    enum class Mode { Distributional, Individual };
    Mode mode = Mode::Distributional;
    /// How the calibrator is scored: per-step |target_t - p_t| against the
    /// target series, or once per episode on the quantile-matched price
    /// distribution.
    enum class Reward { Series, Distribution };
    Reward reward = Reward::Distribution;

    double lambda_max = 30.0;  // upper bound of mu and of individual lambdas
    double sigma_max = 10.0;   // upper bound of sigma

    double offset() const noexcept { return supply_offset < 0.0 ? static_cast<double>(n_producers) : supply_offset; }
    void validate() const;
};

/// (a - sum_j S(p_hat_j))/b + noise.
double market_price(std::span<const double> predictions, const Params& p, double noise);

/// Fixed point p = (a - n S(p))/b by bisection on [0, a/b] (widened if needed).
double equilibrium_price(const Params& p, double tol = 1e-10);

/// max(0, 1300 - 260 (p - p_hat)^2).
double producer_reward(double p, double p_hat);

/// r - lambda * KL(pi || uniform).
double penalized_producer_objective(double reward, double lambda, std::span<const double> policy);

/// -|phi - p|.
double calibrator_reward(double p, double phi);

struct ErrorMetrics {
    double mae = 0.0;
    double rmse = 0.0;
};

/// MAE and RMSE of paired errors.
ErrorMetrics error_metrics(std::span<const double> errors);

/// Compares the two samples as distributions: both are reduced to m common
/// quantile levels (m = the smaller size) and paired in sorted order.
ErrorMetrics quantile_matched_metrics(std::span<const double> simulated, std::span<const double> target);

/// Mean quantile-matched metrics over bootstrap resamples of the target.
ErrorMetrics calibration_metrics(std::span<const double> simulated, std::span<const double> target,
                                 std::size_t resamples, Rng& rng);

/// lambda ~ Normal(mu, sigma) truncated to [0, inf) by rejection.
double sample_truncated_lambda(double mu, double sigma, Rng& rng);

/// Mean and sd of Normal(mu, sigma) truncated at 0.
std::pair<double, double> truncated_moments(double mu, double sigma);

/// Reads newline-delimited floats; throws ConfigError on bad content.
std::vector<double> load_target_file(const std::string& path);

class Environment final : public bilevel::Environment {
public:
    explicit Environment(Params p = {}, std::vector<double> target = {});

    std::string name() const override { return "cobweb"; }
    std::size_t num_followers() const override { return p_.n_producers; }
    std::size_t observation_dim(Role role) const override { return role == Role::Leader ? p_.n_producers + 1 : 4; }
    ActionSpace action_space(Role role) const override;
    std::vector<double> observation_scale(Role role) const override;
    Characteristics default_characteristics() const override;
    std::size_t leader_action_period() const override { return p_.horizon; }

    std::vector<Observation> reset(const Characteristics& theta, std::uint64_t seed) override;
    std::vector<Observation> follower_observe() const override;
    Observation leader_observe() const override;
    const Characteristics& leader_apply(const ActionValue& action) override;
    StepResult follower_step(std::span<const ActionValue> actions) override;
    std::vector<double> follower_view(std::size_t i) const override { return {lambda_.at(i)}; }
    const Characteristics& characteristics() const override { return theta_; }
    double information_cost_weight(std::size_t i) const override { return lambda_.at(i); }
    double finish_episode() override;
    NamedValues step_metrics() const override;
    NamedValues episode_metrics() const override;
    std::unique_ptr<bilevel::Environment> clone() const override { return std::make_unique<Environment>(*this); }

    double bin_price(std::size_t k) const;
    const Params& params() const noexcept { return p_; }
    const std::vector<double>& prices() const noexcept { return prices_; }
    const std::vector<double>& lambdas() const noexcept { return lambda_; }
    void set_target(std::vector<double> target) { target_ = std::move(target); }
    const std::vector<double>& target() const noexcept { return target_; }

private:
    void draw_lambdas();

    Params p_;
    std::vector<double> target_;
    Rng rng_;
    Characteristics theta_;
    std::vector<double> lambda_;
    std::vector<double> last_pred_;
    std::vector<double> mean_pred_;
    std::vector<double> prices_;
    double price_sum_ = 0.0;
    double last_price_ = 0.0;
    double last_reward_ = 0.0;
};

}  // namespace bilevel::cobweb
