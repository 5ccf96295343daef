#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "bilevel/core.hpp"
#include "bilevel/rng.hpp"

namespace bilevel {

/// Observed (candidate, outer return) pairs for surrogate optimization.
class SurrogateState {
public:
    /// Throws ParameterError on a dimension change or a non-finite return.
    void add(std::vector<double> x, double y);
    std::size_t size() const noexcept { return ys_.size(); }
    const std::vector<std::vector<double>>& xs() const noexcept { return xs_; }
    const std::vector<double>& ys() const noexcept { return ys_; }
    /// Index of the best (largest) observed return.
    std::size_t best_index() const;

private:
    std::vector<std::vector<double>> xs_;
    std::vector<double> ys_;
};

/// Zero-mean GP with a squared-exponential kernel of unit signal variance on
/// standardized targets. Length scale and noise are picked from a small grid
/// by marginal likelihood.
class GaussianProcess {
public:
    void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);  // x: dim x n
    /// Posterior mean and standard deviation, in the original y units.
    std::pair<double, double> predict(const Eigen::VectorXd& x) const;
    double length_scale() const noexcept { return ell_; }
    double noise() const noexcept { return noise_; }

private:
    double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;

    Eigen::MatrixXd x_;
    Eigen::VectorXd alpha_;
    Eigen::MatrixXd chol_l_;
    double ell_ = 0.2, noise_ = 1e-6, y_mean_ = 0.0, y_std_ = 1.0;
};

struct BayesConfig {
    std::size_t n_init = 5;
    std::size_t restarts = 16;
    double xi = 0.01;  // exploration margin, in standardized return units
};

/// EI(mu, sigma; best) for maximization.
double expected_improvement(double mu, double sigma, double best, double xi);

/// Next candidate within bounds: a randomized Halton point while fewer than
/// n_init observations exist, else the maximizer of expected improvement
/// under the fitted GP (multi-start compass search).
std::vector<double> bayes_suggest(const SurrogateState& state, std::span<const Bound> bounds, Rng& rng,
                                  const BayesConfig& cfg = {});

}  // namespace bilevel
