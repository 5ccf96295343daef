#pragma once

// Proximal policy optimisation with generalized advantage estimation.
// Objective per sample (minimised):
//   -min(rho*A, clip(rho, 1-eps, 1+eps)*A) + beta*KL(old||new)
//   + w*KL(new||uniform) - c_H*H(new)
// where w is the information-cost weight the environment attached to the
// sample. The KL(old||new) coefficient beta adapts toward kl_target.

#include <span>
#include <vector>

#include "bilevel/learner.hpp"
#include "bilevel/nn.hpp"
#include "bilevel/policy.hpp"

namespace bilevel {

struct PpoConfig {
    double learning_rate = 5e-5;
    double kl_coeff = 0.2;
    double kl_target = 0.01;
    double gamma = 0.99;
    double gae_lambda = 1.0;
    double clip_ratio = 0.2;
    std::size_t epochs_per_update = 8;
    std::size_t minibatch_size = 128;
    double entropy_coeff = 0.0;
    bool adapt_kl = true;
    bool normalize_advantages = true;
    bool train_value = true;
    double value_learning_rate = 1e-3;
    std::size_t value_epochs = 8;
    std::vector<int> hidden{256, 256};
    int jobs = 1;  // threads for the gradient kernel

    void validate() const;
};

/// A_t = sum_l (gamma*lambda)^l delta_{t+l}, delta_t = r_t + gamma v_{t+1} - v_t.
/// `values` carries one extra bootstrap entry.
std::vector<double> gae_advantages(std::span<const double> rewards, std::span<const double> values, double gamma,
                                   double lambda);

/// Flattened samples of one update.
struct PpoBatch {
    nn::Matrix obs;         // obs_dim x N
    nn::Matrix raw_action;  // action_dim x N
    nn::Vector old_log_prob;
    nn::Vector advantage;
    nn::Vector returns;
    nn::Vector info_weight;
    DistBatch old_dist;  // distribution of the behaviour policy at update start

    Eigen::Index size() const noexcept { return obs.cols(); }
};

struct SurrogateTerms {
    double loss = 0.0;
    double clip_fraction = 0.0;
    double kl = 0.0;  // mean KL(old||new)
};

/// Builds a batch from trajectories: GAE advantages, lambda-returns, old
/// distributions. Advantages are standardised when requested and the
/// information weights divided by the same scale so both terms keep their
/// relative weight.
PpoBatch make_ppo_batch(const Policy& policy, std::span<const Trajectory* const> trajectories, const PpoConfig& cfg);

/// Mean surrogate loss over `idx` (used by gradient checks).
double surrogate_loss(const Policy& policy, const PpoBatch& batch, std::span<const Eigen::Index> idx, double kl_coeff,
                      const PpoConfig& cfg);

/// Gradient of surrogate_loss, computed over fixed-size sample chunks in
/// parallel and reduced in chunk order, so the result is independent of the
/// thread count.
SurrogateTerms surrogate_gradient(const Policy& policy, const PpoBatch& batch, std::span<const Eigen::Index> idx,
                                  double kl_coeff, const PpoConfig& cfg, nn::Vector& grad, int jobs);

/// Reference implementation: one sample at a time, no threading.
SurrogateTerms surrogate_gradient_serial(const Policy& policy, const PpoBatch& batch, std::span<const Eigen::Index> idx,
                                         double kl_coeff, const PpoConfig& cfg, nn::Vector& grad);

/// Mean KL(old||new) over the whole batch for the policy's current parameters.
double mean_kl(const Policy& policy, const PpoBatch& batch);

struct PpoState {
    nn::Adam adam;
    double kl_coeff = 0.2;
    Rng rng;
};

/// One PPO update in place. Stops early once the batch KL exceeds twice the
/// target and backtracks the last epoch's step whenever it exceeds four
/// times the target (adaptive mode only).
UpdateStats ppo_update(Policy& policy, ValueFunction* value_fn, std::span<const Trajectory* const> trajectories,
                       const PpoConfig& cfg, PpoState& state);

class PpoLearner final : public Learner {
public:
    PpoLearner(std::string name, std::size_t obs_dim, const ActionSpace& space, std::vector<double> input_scale,
               PpoConfig cfg, std::uint64_t seed);

    std::string name() const override { return name_; }
    const Actor& actor() const override { return sampler_; }
    const Actor& eval_actor() const override { return greedy_; }
    UpdateStats update(std::span<const Trajectory* const> batch) override;

    Policy& policy() noexcept { return policy_; }
    const Policy& policy() const noexcept { return policy_; }
    const ValueFunction& value_function() const noexcept { return value_; }
    const PpoConfig& config() const noexcept { return cfg_; }
    double kl_coeff() const noexcept { return state_.kl_coeff; }

private:
    class PolicyActor final : public Actor {
    public:
        PolicyActor(const PpoLearner& owner, bool greedy) : owner_(owner), greedy_(greedy) {}
        std::vector<ActionSample> act(const nn::Matrix& obs, std::span<Rng* const> rngs) const override;
        nn::Vector values(const nn::Matrix& obs) const override;

    private:
        const PpoLearner& owner_;
        bool greedy_;
    };

    std::string name_;
    PpoConfig cfg_;
    Policy policy_;
    ValueFunction value_;
    PpoState state_;
    PolicyActor sampler_{*this, false};
    PolicyActor greedy_{*this, true};
};

}  // namespace bilevel
