#pragma once

#include <vector>

#include "bilevel/actor.hpp"
#include "bilevel/core.hpp"
#include "bilevel/nn.hpp"

namespace bilevel {

enum class HeadKind { Categorical, DiagonalGaussian };

/// Parameters of a batch of action distributions. For categorical heads
/// `params` holds logits (k x B); for Gaussian heads it holds means (d x B) in
/// the normalized [-1, 1] action space and `log_std` is shared by all samples.
struct DistBatch {
    HeadKind kind = HeadKind::Categorical;
    nn::Matrix params;
    nn::Vector log_std;

    Eigen::Index batch() const noexcept { return params.cols(); }
    std::vector<double> probabilities(Eigen::Index col) const;
    double log_prob(Eigen::Index col, std::span<const double> raw) const;
    double entropy(Eigen::Index col) const;
    /// KL(this[col] || other[other_col]).
    double kl(Eigen::Index col, const DistBatch& other, Eigen::Index other_col) const;
    double kl_to_uniform(Eigen::Index col) const;
};

inline constexpr double kMinLogStd = -9.210340371976184;  // ln 1e-4
inline constexpr double kMaxLogStd = 2.302585092994046;   // ln 10

/// Stochastic policy: tanh MLP trunk plus a categorical or diagonal-Gaussian
/// head. Bounded continuous actions are sampled in [-1, 1] space, clamped,
/// then mapped affinely onto the action bounds.
class Policy {
public:
    Policy() = default;
    Policy(std::size_t obs_dim, ActionSpace space, const std::vector<int>& hidden,
           std::vector<double> input_scale, Rng& rng, double initial_log_std = -0.6931471805599453);

    HeadKind head() const noexcept { return head_; }
    const ActionSpace& action_space() const noexcept { return space_; }
    std::size_t obs_dim() const noexcept { return obs_dim_; }

    /// Flat parameters: network weights followed by log-std (Gaussian only).
    nn::Vector parameters() const;
    void set_parameters(const nn::Vector& p);
    std::size_t num_parameters() const noexcept;

    nn::Matrix scale_inputs(const nn::Matrix& obs) const;
    DistBatch distribution(const nn::Matrix& obs) const;
    DistBatch distribution(const nn::Matrix& obs, nn::Mlp::Cache& cache) const;

    /// Backpropagates dLoss/d(dist params) and dLoss/d(log_std) into a flat gradient.
    void backward(const nn::Mlp::Cache& cache, const nn::Matrix& grad_params, const nn::Vector& grad_log_std,
                  nn::Vector& grad) const;

    ActionSample sample(const DistBatch& dist, Eigen::Index col, Rng& rng) const;
    ActionValue to_action(std::span<const double> raw) const;
    /// The action a deterministic evaluation would take (mode of the distribution).
    ActionSample mode(const DistBatch& dist, Eigen::Index col) const;

    void clamp_log_std();

private:
    std::size_t obs_dim_ = 0;
    ActionSpace space_;
    HeadKind head_ = HeadKind::Categorical;
    std::vector<double> input_scale_;
    nn::Mlp net_;
    nn::Vector log_std_;
};

/// Scalar value network with an adaptive output normalization: the network
/// predicts standardized returns and the output layer is rescaled whenever
/// the target statistics move, so predictions are preserved.
class ValueFunction {
public:
    ValueFunction() = default;
    ValueFunction(std::size_t obs_dim, const std::vector<int>& hidden, std::vector<double> input_scale, Rng& rng);

    nn::Vector predict(const nn::Matrix& obs) const;
    /// Updates target statistics then fits the network to the given returns.
    double fit(const nn::Matrix& obs, const nn::Vector& returns, std::size_t epochs, std::size_t minibatch,
               Rng& rng);

    nn::Adam& optimizer() noexcept { return adam_; }
    void set_learning_rate(double lr) { adam_.set_learning_rate(lr); }

private:
    void update_normalization(const nn::Vector& returns);

    std::vector<double> input_scale_;
    nn::Mlp net_;
    nn::Adam adam_;
    double mean_ = 0.0;
    double std_ = 1.0;
    bool initialized_ = false;
};

}  // namespace bilevel
