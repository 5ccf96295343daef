#pragma once

#include <span>
#include <vector>

#include "bilevel/rng.hpp"

namespace bilevel {

/// KL(dist || prior) in nats over a shared finite support. Terms with
/// dist[a] == 0 contribute 0; dist[a] > 0 with prior[a] == 0 is an error.
double kl_information_cost(std::span<const double> dist, std::span<const double> prior);

/// KL(dist || uniform) = ln k + sum p ln p.
double kl_to_uniform(std::span<const double> dist);

/// Shannon entropy in nats with 0 ln 0 := 0.
double entropy(std::span<const double> probs);

/// Finite, distinct, ascending preferences in [0, 1].
class PreferenceGrid {
public:
    PreferenceGrid() : PreferenceGrid({0.0, 0.25, 0.5, 0.75, 1.0}) {}
    explicit PreferenceGrid(std::vector<double> values);

    std::span<const double> values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    /// Index of v in the grid, or size() if absent.
    std::size_t index_of(double v) const noexcept;

private:
    std::vector<double> values_;
};

/// Draws from the maximum-entropy distribution over the grid (uniform).
double max_entropy_sample(const PreferenceGrid& grid, Rng& rng);

/// Entropy of the empirical distribution of preference draws over the grid.
double preference_entropy(std::span<const double> frequencies);

}  // namespace bilevel
