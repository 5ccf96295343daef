#pragma once

#include <span>
#include <vector>

#include "bilevel/core.hpp"
#include "bilevel/nn.hpp"
#include "bilevel/rng.hpp"

namespace bilevel {

struct ActionSample {
    ActionValue action;
    std::vector<double> raw;
    double log_prob = 0.0;
    double value = 0.0;
    double info_cost = 0.0;  // KL(pi(.|o) || uniform) for categorical heads, else 0
};

/// Anything that can choose actions for a batch of observations: a learned
/// policy, an analytic sampler, a fixed rule. Must be safe to call
/// concurrently from several threads.
class Actor {
public:
    virtual ~Actor() = default;
    /// obs holds one observation per column; rngs has one stream per column.
    virtual std::vector<ActionSample> act(const nn::Matrix& obs, std::span<Rng* const> rngs) const = 0;
    /// State-value estimates, one per column. Defaults to zeros.
    virtual nn::Vector values(const nn::Matrix& obs) const { return nn::Vector::Zero(obs.cols()); }
};

/// Packs observations as columns.
nn::Matrix stack_columns(std::span<const Observation> obs, std::size_t dim);

}  // namespace bilevel
