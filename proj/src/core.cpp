#include "bilevel/core.hpp"

#include <cmath>

namespace bilevel {

std::string to_string(AgentId id) {
    return id.role() == Role::Leader ? std::string("leader") : "follower-" + std::to_string(id.index);
}

Characteristics::Characteristics(std::vector<Bound> bounds, std::vector<double> values)
    : bounds_(std::move(bounds)), values_(bounds_.size(), 0.0) {
    if (values.size() != bounds_.size())
        throw ConfigError("characteristics: " + std::to_string(values.size()) + " values for " +
                          std::to_string(bounds_.size()) + " bounds");
    for (const auto& b : bounds_)
        if (!(b.lo <= b.hi)) throw ConfigError("characteristics: empty bound interval");
    assign(values);
}

Characteristics::Characteristics(std::vector<Bound> bounds) : bounds_(std::move(bounds)) {
    values_.reserve(bounds_.size());
    for (const auto& b : bounds_) values_.push_back(b.lo);
}

void Characteristics::set(std::size_t i, double v) {
    if (i >= values_.size()) throw ParameterError("characteristics index out of range");
    if (std::isnan(v)) throw ParameterError("characteristics: NaN write");
    values_[i] = bounds_[i].clamp(v);
}

void Characteristics::assign(std::span<const double> v) {
    if (v.size() != values_.size())
        throw ParameterError("characteristics: dimension is fixed at " + std::to_string(values_.size()));
    for (std::size_t i = 0; i < v.size(); ++i) set(i, v[i]);
}

void ActionValue::validate(const ActionSpace& space) const {
    if (space.kind == ActionSpace::Kind::Discrete) {
        if (!is_discrete() || index() >= space.arity)
            throw ParameterError("discrete action outside [0, " + std::to_string(space.arity) + ")");
        return;
    }
    if (is_discrete() || vector().size() != space.bounds.size())
        throw ParameterError("continuous action has wrong dimension");
    for (std::size_t i = 0; i < space.bounds.size(); ++i)
        if (!space.bounds[i].contains(vector()[i]))
            throw ParameterError("continuous action component " + std::to_string(i) + " = " +
                                 std::to_string(vector()[i]) + " outside [" + std::to_string(space.bounds[i].lo) +
                                 ", " + std::to_string(space.bounds[i].hi) + "]");
}

std::vector<double> Trajectory::rewards() const {
    std::vector<double> r;
    r.reserve(steps.size());
    for (const auto& s : steps) r.push_back(s.reward);
    return r;
}

std::vector<double> Environment::observation_scale(Role role) const {
    return std::vector<double>(observation_dim(role), 1.0);
}

void TimescaleSchedule::validate() const {
    if (inner_updates_per_outer < 1) throw ConfigError("schedule: inner_updates_per_outer must be >= 1");
    if (leader_action_period < 1) throw ConfigError("schedule: leader_action_period must be >= 1");
}

double discounted_return(std::span<const double> rewards, double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ParameterError("discount must lie in [0, 1]");
    // Horner form from the back: r0 + g(r1 + g(r2 + ...)).
    double acc = 0.0;
    for (auto it = rewards.rbegin(); it != rewards.rend(); ++it) acc = *it + gamma * acc;
    return acc;
}

}  // namespace bilevel
