#include "bilevel/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "bilevel/core.hpp"
#include "bilevel/errors.hpp"

namespace bilevel {

void MetricSeries::add(long step, double value) {
    if (!points_.empty() && step <= points_.back().first)
        throw ParameterError("metric '" + name_ + "': steps must be strictly increasing");
    if (!std::isfinite(value)) throw ParameterError("metric '" + name_ + "': non-finite value");
    points_.emplace_back(step, value);
}

std::vector<double> MetricSeries::values() const {
    std::vector<double> v;
    v.reserve(points_.size());
    for (const auto& p : points_) v.push_back(p.second);
    return v;
}

namespace {

double checked_total(std::span<const double> values) {
    if (values.empty()) throw ParameterError("gini of an empty sample");
    double total = 0.0;
    for (double x : values) {
        if (x < 0.0 || std::isnan(x)) throw ParameterError("gini needs non-negative values");
        total += x;
    }
    return total;
}

}  // namespace

double gini(std::span<const double> values) {
    const double total = checked_total(values);
    if (total == 0.0) return 0.0;
    double s = 0.0;
    for (double a : values)
        for (double b : values) s += std::abs(a - b);
    const double n = static_cast<double>(values.size());
    return s / (2.0 * n * total);
}

double gini_sorted(std::span<const double> values) {
    const double total = checked_total(values);
    if (total == 0.0) return 0.0;
    std::vector<double> x(values.begin(), values.end());
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (2.0 * static_cast<double>(i + 1) - n - 1.0) * x[i];
    return s / (n * total);
}

RolloutSummary summarize_rollouts(std::span<const std::vector<double>> series) {
    RolloutSummary out;
    if (series.empty()) return out;
    std::size_t len = series[0].size();
    for (const auto& s : series) {
        if (s.size() != len) out.truncated = true;
        len = std::min(len, s.size());
    }
    out.mean.assign(len, 0.0);
    out.min.assign(len, std::numeric_limits<double>::infinity());
    out.max.assign(len, -std::numeric_limits<double>::infinity());
    for (const auto& s : series)
        for (std::size_t t = 0; t < len; ++t) {
            out.mean[t] += s[t];
            out.min[t] = std::min(out.min[t], s[t]);
            out.max[t] = std::max(out.max[t], s[t]);
        }
    for (std::size_t t = 0; t < len; ++t) {
        out.mean[t] /= static_cast<double>(series.size());
        // Rounding can push the mean a hair outside the range.
        out.mean[t] = std::clamp(out.mean[t], out.min[t], out.max[t]);
    }
    return out;
}

MetricSeries welfare_curve(const std::vector<std::vector<std::vector<double>>>& rewards, double gamma,
                           std::string name) {
    MetricSeries m(std::move(name));
    for (std::size_t it = 0; it < rewards.size(); ++it) {
        const auto& rollouts = rewards[it];
        if (rollouts.empty()) continue;
        double s = 0.0;
        for (const auto& r : rollouts) s += discounted_return(r, gamma);
        m.add(static_cast<long>(it), s / static_cast<double>(rollouts.size()));
    }
    return m;
}

double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

TTest welch_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw ParameterError("t test needs at least two samples per group");
    const double va = std::pow(sample_std(a), 2) / static_cast<double>(a.size());
    const double vb = std::pow(sample_std(b), 2) / static_cast<double>(b.size());
    const double diff = mean(a) - mean(b);
    TTest r;
    if (va + vb == 0.0) {
        r.t = diff > 0 ? std::numeric_limits<double>::infinity() : (diff < 0 ? -std::numeric_limits<double>::infinity() : 0.0);
        r.df = static_cast<double>(a.size() + b.size() - 2);
        r.p_greater = diff > 0 ? 0.0 : (diff < 0 ? 1.0 : 0.5);
        return r;
    }
    r.t = diff / std::sqrt(va + vb);
    r.df = (va + vb) * (va + vb) /
           (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
    boost::math::students_t dist(r.df);
    r.p_greater = boost::math::cdf(boost::math::complement(dist, r.t));
    return r;
}

}  // namespace bilevel
