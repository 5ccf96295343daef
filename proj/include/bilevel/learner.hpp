#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "bilevel/actor.hpp"
#include "bilevel/core.hpp"

namespace bilevel {

struct UpdateStats {
    double mean_kl = 0.0;
    double clip_fraction = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    std::size_t epochs = 0;
};

/// An optimizer that owns a behaviour policy and improves it from
/// experience. Learners are updated one at a time; their actors may be used
/// concurrently for rollouts between updates.
class Learner {
public:
    virtual ~Learner() = default;

    virtual std::string name() const = 0;
    virtual const Actor& actor() const = 0;
    /// Actor used for evaluation rollouts (e.g. the distribution mode).
    virtual const Actor& eval_actor() const { return actor(); }
    virtual UpdateStats update(std::span<const Trajectory* const> batch) = 0;
    /// False for learners whose update ignores experience (fixed or analytic rules).
    virtual bool needs_experience() const { return true; }
    std::size_t update_count() const noexcept { return updates_; }

protected:
    void count_update() noexcept { ++updates_; }

private:
    std::size_t updates_ = 0;
};

}  // namespace bilevel
