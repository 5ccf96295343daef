#include "bilevel/harness/config.hpp"

#include "bilevel/info.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

namespace bilevel::harness {

using nlohmann::json;

std::string to_string(Task t) {
    switch (t) {
        case Task::PolicyDesign: return "policy-design";
        case Task::Calibrate: return "calibrate";
        case Task::Scenario: return "scenario";
        case Task::MetaMm: return "meta-mm";
    }
    return "?";
}

std::optional<Task> task_from_string(const std::string& s) {
    for (Task t : {Task::PolicyDesign, Task::Calibrate, Task::Scenario, Task::MetaMm})
        if (to_string(t) == s) return t;
    return std::nullopt;
}

std::vector<std::string> task_names() { return {"policy-design", "calibrate", "scenario", "meta-mm"}; }

namespace {

// Reads keys out of one JSON object, remembering which were consumed so
// leftovers can be reported as unknown.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw SchemaError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const { return j_.contains(key); }

    const json* take(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void operator()(const std::string& key, double& out) {
        if (auto* v = take(key)) {
            if (!v->is_number()) throw SchemaError(at(key), "expected a number");
            out = v->get<double>();
            if (!std::isfinite(out)) throw SchemaError(at(key), "expected a finite number");
        }
    }
    void operator()(const std::string& key, std::size_t& out) {
        if (auto* v = take(key)) {
            if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0))
                throw SchemaError(at(key), "expected a non-negative integer");
            out = v->get<std::size_t>();
        }
    }
    void operator()(const std::string& key, std::uint64_t& out, int) {
        if (auto* v = take(key)) {
            if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<long long>() < 0))
                throw SchemaError(at(key), "expected an unsigned integer");
            out = v->get<std::uint64_t>();
        }
    }
    void operator()(const std::string& key, int& out) {
        if (auto* v = take(key)) {
            if (!v->is_number_integer()) throw SchemaError(at(key), "expected an integer");
            out = v->get<int>();
        }
    }
    void operator()(const std::string& key, bool& out) {
        if (auto* v = take(key)) {
            if (!v->is_boolean()) throw SchemaError(at(key), "expected true or false");
            out = v->get<bool>();
        }
    }
    void operator()(const std::string& key, std::string& out) {
        if (auto* v = take(key)) {
            if (!v->is_string()) throw SchemaError(at(key), "expected a string");
            out = v->get<std::string>();
        }
    }
    void operator()(const std::string& key, std::vector<int>& out) {
        if (auto* v = take(key)) {
            if (!v->is_array()) throw SchemaError(at(key), "expected an array of integers");
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                if (!(*v)[i].is_number_integer())
                    throw SchemaError(at(key) + "[" + std::to_string(i) + "]", "expected an integer");
                out.push_back((*v)[i].get<int>());
            }
        }
    }
    void operator()(const std::string& key, std::vector<double>& out) {
        if (auto* v = take(key)) {
            if (!v->is_array()) throw SchemaError(at(key), "expected an array of numbers");
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                if (!(*v)[i].is_number())
                    throw SchemaError(at(key) + "[" + std::to_string(i) + "]", "expected a number");
                out.push_back((*v)[i].get<double>());
            }
        }
    }
    template <class T>
    void operator()(const std::string& key, std::optional<T>& out) {
        if (has(key)) {
            T v{};
            (*this)(key, v);
            out = v;
        } else {
            seen_.insert(key);
        }
    }
    template <class E>
    void choice(const std::string& key, E& out, std::initializer_list<std::pair<const char*, E>> options) {
        if (auto* v = take(key)) {
            std::string names;
            if (v->is_string())
                for (const auto& [name, e] : options)
                    if (v->get<std::string>() == name) {
                        out = e;
                        return;
                    }
            for (const auto& [name, e] : options) names += std::string(names.empty() ? "" : ", ") + name;
            throw SchemaError(at(key), "expected one of: " + names);
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (seen_.count(it.key()) == 0) throw SchemaError(at(it.key()), "unknown key");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

// Writes the same keys back out.
class Writer {
public:
    json j = json::object();

    template <class T>
    void operator()(const std::string& key, T& v) { j[key] = v; }
    void operator()(const std::string& key, std::uint64_t& v, int) { j[key] = v; }
    template <class T>
    void operator()(const std::string& key, std::optional<T>& v) {
        if (v) j[key] = *v;
    }
    template <class E>
    void choice(const std::string& key, E& out, std::initializer_list<std::pair<const char*, E>> options) {
        for (const auto& [name, e] : options)
            if (e == out) j[key] = name;
    }
};

template <class V>
void visit_ppo(V& v, PpoConfig& c, bool with_gamma) {
    v("learning_rate", c.learning_rate);
    v("kl_coeff", c.kl_coeff);
    v("kl_target", c.kl_target);
    if (with_gamma) v("gamma", c.gamma);
    v("gae_lambda", c.gae_lambda);
    v("clip_ratio", c.clip_ratio);
    v("epochs_per_update", c.epochs_per_update);
    v("minibatch_size", c.minibatch_size);
    v("entropy_coeff", c.entropy_coeff);
    v("adapt_kl", c.adapt_kl);
    v("normalize_advantages", c.normalize_advantages);
    v("value_learning_rate", c.value_learning_rate);
    v("value_epochs", c.value_epochs);
    v("layer_sizes", c.hidden);
}

template <class V>
void visit_taxai(V& v, taxai::Params& p) {
    v("n_households", p.n_households);
    v("zeta", p.zeta);
    v("rho", p.rho);
    v("prod_sigma", p.prod_sigma);
    v("horizon", p.horizon);
    v("consumption_floor", p.consumption_floor);
    v("free_market", p.free_market);
    v("max_progressivity", p.max_progressivity);
    v("initial_asset_sigma", p.initial_asset_sigma);
}

template <class V>
void visit_calibrate(V& v, CalibrateConfig& c) {
    auto& p = c.env;
    v.choice("mode", p.mode, {{"distributional", cobweb::Params::Mode::Distributional},
                              {"individual", cobweb::Params::Mode::Individual}});
    v.choice("outer", c.outer, {{"rl", CalibrateConfig::Outer::Rl}, {"bayes", CalibrateConfig::Outer::Bayes}});
    v.choice("reward", p.reward, {{"distribution", cobweb::Params::Reward::Distribution},
                                  {"series", cobweb::Params::Reward::Series}});
    v("target_file", c.target_file);
    v("target_mu", c.target_mu);
    v("target_sigma", c.target_sigma);
    v("target_rollouts", c.target_rollouts);
    v("target_training_iterations", c.target_training_iterations);
    v("bootstrap_resamples", c.bootstrap_resamples);
    v("run_baselines", c.run_baselines);
    v("sigma_eps", p.sigma_eps);
    v("n_producers", p.n_producers);
    v("price_bins", p.price_bins);
    v("supply_offset", p.supply_offset);
    v("horizon", p.horizon);
    v("a", p.a);
    v("b", p.b);
    v("psi", p.psi);
    v("lambda_max", p.lambda_max);
    v("sigma_max", p.sigma_max);
    v("continuous_predictions", p.continuous_predictions);
}

template <class V>
void visit_scenario(V& v, entry::Params& p) {
    v("n_traders", p.n_traders);
    v("capacity", p.capacity);
    v("tax_enabled", p.tax_enabled);
    v("horizon", p.horizon);
    v("beta", p.beta);
    v("upsilon", p.upsilon);
    v("max_tax", p.max_tax);
}

template <class V>
void visit_meta_mm(V& v, MetaMmConfig& c) {
    auto& p = c.env;
    v("omega_grid", c.omega_grid);
    v("sigma_shock", p.sigma_shock);
    v("valuation_std", p.valuation_std);
    v("n_lts", p.n_lts);
    v("p0", p.p0);
    v("kappa", p.kappa);
    v("max_half_spread", p.max_half_spread);
    v("horizon", p.horizon);
    v.choice("omega_resample", p.resample_per_step, {{"episode", false}, {"step", true}});
    v("baseline_omegas", c.baseline_omegas);
}

template <class Fn>
void wrap(const std::string& path, Fn&& fn) {
    try {
        fn();
    } catch (const SchemaError&) {
        throw;
    } catch (const ConfigError& e) {
        throw SchemaError(path, e.what());
    }
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
    ExperimentConfig cfg;
    cfg.source = doc;
    Reader top(doc, "");
    std::string task;
    top("task", task);
    if (!top.has("task")) throw SchemaError("task", "missing; expected one of policy-design, calibrate, scenario, meta-mm");
    auto t = task_from_string(task);
    if (!t) throw SchemaError("task", "unknown task '" + task + "'; expected one of policy-design, calibrate, scenario, meta-mm");
    cfg.task = *t;
    cfg.name = task;
    top("name", cfg.name);
    top("seed", cfg.seed, 0);
    top("rollouts", cfg.rollouts);
    top("training_iterations", cfg.training_iterations);
    top("output_dir", cfg.output_dir);
    top("jobs", cfg.jobs);
    if (cfg.rollouts == 0) throw SchemaError("rollouts", "must be >= 1");
    if (cfg.jobs < 1) throw SchemaError("jobs", "must be >= 1");

    if (const json* s = top.take("schedule")) {
        Reader r(*s, "schedule");
        r("inner_updates_per_outer", cfg.schedule.inner_updates_per_outer);
        cfg.leader_period_set = r.has("leader_action_period");
        r("leader_action_period", cfg.schedule.leader_action_period);
        r.finish();
        wrap("schedule", [&] { cfg.schedule.validate(); });
    }
    cfg.schedule.total_outer_iterations = cfg.training_iterations;

    if (const json* l = top.take("learner")) {
        Reader r(*l, "learner");
        visit_ppo(r, cfg.learner.follower, true);
        r("episodes_per_follower_update", cfg.learner.episodes_per_follower_update);
        r("episodes_per_leader_update", cfg.learner.episodes_per_leader_update);
        cfg.learner.leader = cfg.learner.follower;
        if (const json* ls = r.take("leader")) {
            Reader lr(*ls, "learner.leader");
            visit_ppo(lr, cfg.learner.leader, false);
            lr.finish();
        }
        r.finish();
    } else {
        cfg.learner.leader = cfg.learner.follower;
    }
    cfg.learner.leader.gamma = cfg.learner.follower.gamma;
    wrap("learner", [&] { cfg.learner.follower.validate(); });
    wrap("learner.leader", [&] { cfg.learner.leader.validate(); });
    if (cfg.learner.episodes_per_follower_update == 0 || cfg.learner.episodes_per_leader_update == 0)
        throw SchemaError("learner", "episodes per update must be >= 1");

    const json empty = json::object();
    const json* e = top.take("env");
    Reader r(e ? *e : empty, "env");
    switch (cfg.task) {
        case Task::PolicyDesign:
            visit_taxai(r, cfg.taxai);
            r.finish();
            wrap("env", [&] { cfg.taxai.validate(); });
            break;
        case Task::Calibrate:
            visit_calibrate(r, cfg.calibrate);
            r.finish();
            wrap("env", [&] { cfg.calibrate.env.validate(); });
            if (cfg.calibrate.target_rollouts == 0) throw SchemaError("env.target_rollouts", "must be >= 1");
            if (cfg.calibrate.target_sigma < 0.0) throw SchemaError("env.target_sigma", "must be non-negative");
            break;
        case Task::Scenario: {
            std::optional<double> frac;
            r("capacity_fraction", frac);
            visit_scenario(r, cfg.scenario);
            r.finish();
            if (frac) {
                if (r.has("capacity")) throw SchemaError("env.capacity_fraction", "give capacity or capacity_fraction, not both");
                if (*frac < 0.0 || *frac > 1.0) throw SchemaError("env.capacity_fraction", "must lie in [0, 1]");
                cfg.scenario.capacity = *frac * static_cast<double>(cfg.scenario.n_traders);
            }
            wrap("env", [&] { cfg.scenario.validate(); });
            break;
        }
        case Task::MetaMm:
            visit_meta_mm(r, cfg.meta_mm);
            r.finish();
            wrap("env", [&] { cfg.meta_mm.env.validate(); });
            wrap("env.omega_grid", [&] {
                try {
                    PreferenceGrid g(cfg.meta_mm.omega_grid);
                } catch (const std::exception& ex) {
                    throw ConfigError(ex.what());
                }
            });
            for (double w : cfg.meta_mm.baseline_omegas)
                if (!(w >= 0.0 && w <= 1.0)) throw SchemaError("env.baseline_omegas", "values must lie in [0, 1]");
            break;
    }
    top.finish();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError(path, "cannot open config file");
    json doc;
    try {
        doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw SchemaError(path, std::string("invalid JSON: ") + e.what());
    }
    return parse_config(doc);
}

json resolved_json(const ExperimentConfig& c) {
    ExperimentConfig cfg = c;
    json j;
    j["task"] = to_string(cfg.task);
    j["name"] = cfg.name;
    j["seed"] = cfg.seed;
    j["rollouts"] = cfg.rollouts;
    j["training_iterations"] = cfg.training_iterations;
    j["output_dir"] = cfg.output_dir;
    j["jobs"] = cfg.jobs;
    j["schedule"] = {{"inner_updates_per_outer", cfg.schedule.inner_updates_per_outer},
                     {"leader_action_period", cfg.schedule.leader_action_period}};
    Writer lw;
    visit_ppo(lw, cfg.learner.follower, true);
    lw.j["episodes_per_follower_update"] = cfg.learner.episodes_per_follower_update;
    lw.j["episodes_per_leader_update"] = cfg.learner.episodes_per_leader_update;
    Writer ll;
    visit_ppo(ll, cfg.learner.leader, false);
    lw.j["leader"] = ll.j;
    j["learner"] = lw.j;
    Writer ew;
    switch (cfg.task) {
        case Task::PolicyDesign: visit_taxai(ew, cfg.taxai); break;
        case Task::Calibrate: visit_calibrate(ew, cfg.calibrate); break;
        case Task::Scenario: visit_scenario(ew, cfg.scenario); break;
        case Task::MetaMm: visit_meta_mm(ew, cfg.meta_mm); break;
    }
    j["env"] = ew.j;
    return j;
}

}  // namespace bilevel::harness
