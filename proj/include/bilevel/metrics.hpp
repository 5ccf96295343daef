#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bilevel {

/// Named scalar series indexed by strictly increasing integer steps.
class MetricSeries {
public:
    MetricSeries() = default;
    explicit MetricSeries(std::string name) : name_(std::move(name)) {}

    const std::string& name() const noexcept { return name_; }
    /// Throws ParameterError on a non-increasing step or non-finite value.
    void add(long step, double value);
    std::size_t size() const noexcept { return points_.size(); }
    bool empty() const noexcept { return points_.empty(); }
    const std::vector<std::pair<long, double>>& points() const noexcept { return points_; }
    std::vector<double> values() const;

private:
    std::string name_;
    std::vector<std::pair<long, double>> points_;
};

/// sum_i sum_j |x_i - x_j| / (2 n^2 mu). O(n^2) reference.
double gini(std::span<const double> values);
/// Same quantity from the sorted form sum_i (2i - n - 1) x_(i) / (n^2 mu).
double gini_sorted(std::span<const double> values);

struct RolloutSummary {
    std::vector<double> mean, min, max;
    bool truncated = false;  // inputs had unequal lengths
};

/// Pointwise statistics across rollouts, truncated to the shortest series.
RolloutSummary summarize_rollouts(std::span<const std::vector<double>> series);

/// Per-iteration leader return estimate: the discounted return of each
/// evaluation rollout, averaged. rewards[iteration][rollout][step].
MetricSeries welfare_curve(const std::vector<std::vector<std::vector<double>>>& rewards, double gamma,
                           std::string name = "social_welfare");

double mean(std::span<const double> v);
/// Sample standard deviation (n - 1 denominator); 0 with fewer than 2 values.
double sample_std(std::span<const double> v);

struct TTest {
    double t = 0.0;
    double df = 0.0;
    double p_greater = 1.0;  // one-sided p-value for mean(a) > mean(b)
};

/// Welch's unequal-variance two-sample t test.
TTest welch_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace bilevel
