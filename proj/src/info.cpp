#include "bilevel/info.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bilevel/errors.hpp"

namespace bilevel {

namespace {

void check_distribution(std::span<const double> p, const char* what) {
    if (p.empty()) throw ParameterError(std::string(what) + ": empty distribution");
    double total = 0.0;
    for (double x : p) {
        if (!(x >= 0.0) || !std::isfinite(x)) throw ParameterError(std::string(what) + ": invalid probability");
        total += x;
    }
    if (std::abs(total - 1.0) > 1e-6) throw ParameterError(std::string(what) + ": probabilities do not sum to 1");
}

}  // namespace

double kl_information_cost(std::span<const double> dist, std::span<const double> prior) {
    if (dist.size() != prior.size()) throw ParameterError("kl: support sizes differ");
    check_distribution(dist, "kl dist");
    check_distribution(prior, "kl prior");
    double kl = 0.0;
    for (std::size_t a = 0; a < dist.size(); ++a) {
        if (dist[a] == 0.0) continue;
        if (prior[a] == 0.0) throw ParameterError("kl: dist has mass outside the prior's support");
        kl += dist[a] * std::log(dist[a] / prior[a]);
    }
    return std::max(kl, 0.0);
}

double kl_to_uniform(std::span<const double> dist) {
    double s = std::log(static_cast<double>(dist.size()));
    for (double p : dist)
        if (p > 0.0) s += p * std::log(p);
    return std::max(s, 0.0);
}

double entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

PreferenceGrid::PreferenceGrid(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw ParameterError("preference grid is empty");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!(values_[i] >= 0.0 && values_[i] <= 1.0)) throw ParameterError("preference outside [0, 1]");
        if (i > 0 && !(values_[i] > values_[i - 1]))
            throw ParameterError("preference grid must be strictly ascending");
    }
}

std::size_t PreferenceGrid::index_of(double v) const noexcept {
    auto it = std::find(values_.begin(), values_.end(), v);
    return static_cast<std::size_t>(it - values_.begin());
}

double max_entropy_sample(const PreferenceGrid& grid, Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, grid.size() - 1);
    return grid.values()[pick(rng)];
}

double preference_entropy(std::span<const double> frequencies) {
    double total = std::accumulate(frequencies.begin(), frequencies.end(), 0.0);
    if (total <= 0.0) return 0.0;
    double h = 0.0;
    for (double f : frequencies) {
        if (f < 0.0) throw ParameterError("negative frequency");
        if (f > 0.0) {
            double p = f / total;
            h -= p * std::log(p);
        }
    }
    return h;
}

}  // namespace bilevel
