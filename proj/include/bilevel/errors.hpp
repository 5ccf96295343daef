#pragma once

#include <stdexcept>
#include <string>

namespace bilevel {

/// Invalid argument to a numerical routine (out-of-domain input).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Inconsistent wiring: dimension mismatches, bad groupings, bad schedules.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a reward, observation, loss or gradient stops being finite.
class NonFiniteError : public std::runtime_error {
public:
    NonFiniteError(std::string agent, long iteration, const std::string& what)
        : std::runtime_error(describe(agent, iteration, what)), agent_(std::move(agent)), iteration_(iteration) {}

    const std::string& agent() const noexcept { return agent_; }
    long iteration() const noexcept { return iteration_; }

    NonFiniteError at_iteration(long it) const {
        return NonFiniteError(agent_, it, detail_of(*this));
    }

private:
    static std::string describe(const std::string& agent, long it, const std::string& what) {
        std::string s = "non-finite value: " + what + " (agent " + agent;
        if (it >= 0) s += ", iteration " + std::to_string(it);
        return s + ")";
    }
    static std::string detail_of(const NonFiniteError& e) {
        std::string w = e.what();
        auto open = w.find(": ");
        auto close = w.rfind(" (agent ");
        return (open == std::string::npos || close == std::string::npos) ? w : w.substr(open + 2, close - open - 2);
    }

    std::string agent_;
    long iteration_;
};

/// No labour supplied: the wage is undefined.
class DegenerateEconomyError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

}  // namespace bilevel
