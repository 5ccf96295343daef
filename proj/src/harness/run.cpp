#include "bilevel/harness/run.hpp"

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include "bilevel/errors.hpp"
#include "bilevel/info.hpp"
#include "bilevel/metrics.hpp"
#include "bilevel/ppo.hpp"
#include "bilevel/training.hpp"

#ifndef BILEVEL_BUILD_ID
#define BILEVEL_BUILD_ID "unknown"
#endif

namespace bilevel::harness {

namespace fs = std::filesystem;
using nlohmann::json;

std::string build_id() { return BILEVEL_BUILD_ID; }

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_label(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

// Everything one training-plus-evaluation pass needs.
struct Players {
    std::unique_ptr<Learner> leader;
    std::vector<std::unique_ptr<Learner>> followers;
    PolicyBinding binding;

    std::vector<Learner*> follower_ptrs() const {
        std::vector<Learner*> v;
        for (const auto& f : followers) v.push_back(f.get());
        return v;
    }
};

PpoConfig with_jobs(PpoConfig c, int jobs) {
    c.jobs = jobs;
    return c;
}

std::unique_ptr<Learner> make_ppo(const std::string& name, const Environment& env, Role role, const PpoConfig& cfg,
                                  int jobs, std::uint64_t seed) {
    return std::make_unique<PpoLearner>(name, env.observation_dim(role), env.action_space(role),
                                        env.observation_scale(role), with_jobs(cfg, jobs), seed);
}

// Followers share one policy; each sees its own private view in its observation.
Players shared_followers(const Environment& env, const ExperimentConfig& cfg, std::unique_ptr<Learner> leader,
                         std::uint64_t salt) {
    Players p;
    p.leader = std::move(leader);
    p.binding = PolicyBinding::shared(env.num_followers());
    p.followers.push_back(make_ppo("followers", env, Role::Follower, cfg.learner.follower, cfg.jobs,
                                   derive_seed(cfg.seed, {10, salt})));
    return p;
}

std::unique_ptr<Learner> ppo_leader(const Environment& env, const ExperimentConfig& cfg, std::uint64_t salt) {
    return make_ppo("leader", env, Role::Leader, cfg.learner.leader, cfg.jobs, derive_seed(cfg.seed, {11, salt}));
}

std::unique_ptr<Learner> fixed_leader(std::vector<double> theta) {
    return std::make_unique<FixedLeader>(ActionValue::continuous(std::move(theta)));
}

class Recorder {
public:
    explicit Recorder(std::vector<MetricRow>& rows) : rows_(rows) {}
    void add(const std::string& exp, const std::string& metric, long step, long rollout, double v) {
        if (!std::isfinite(v)) throw NonFiniteError(exp, step, "metric " + metric);
        rows_.push_back({exp, metric, step, rollout, v});
    }

private:
    std::vector<MetricRow>& rows_;
};

struct Pass {
    TrainingReport report;
    std::vector<Episode> episodes;
};

std::size_t leader_period(const ExperimentConfig& cfg, const Environment& env) {
    return cfg.leader_period_set ? cfg.schedule.leader_action_period : env.leader_action_period();
}

// Trains (if training_iterations > 0) then evaluates. `salt` keeps the
// training streams of different passes in one run apart; all passes share
// the evaluation seeds so their rollouts are paired.
Pass train_and_evaluate(const Environment& env, Players& pl, const ExperimentConfig& cfg, std::size_t horizon,
                        std::size_t iterations, std::uint64_t salt, const std::string& label, std::ostream* log) {
    TrainingConfig tc;
    tc.schedule = cfg.schedule;
    tc.schedule.leader_action_period = leader_period(cfg, env);
    tc.schedule.total_outer_iterations = iterations;
    tc.horizon = horizon;
    tc.gamma = cfg.learner.follower.gamma;
    tc.follower_episodes = cfg.learner.episodes_per_follower_update;
    tc.leader_episodes = cfg.learner.episodes_per_leader_update;
    tc.jobs = cfg.jobs;
    tc.seed = derive_seed(cfg.seed, {2, salt});
    if (log) {
        const std::size_t every = std::max<std::size_t>(1, iterations / 10);
        tc.on_iteration = [log, label, every, iterations](std::size_t it, double lr, double fr) {
            if ((it + 1) % every == 0 || it + 1 == iterations)
                *log << "[" << label << "] iteration " << it + 1 << "/" << iterations << " leader " << lr
                     << " followers " << fr << "\n";
        };
    }
    Pass p;
    auto fptrs = pl.follower_ptrs();
    if (iterations > 0) p.report = alternating_train(env, *pl.leader, fptrs, pl.binding, tc);
    RolloutOptions opt;
    opt.horizon = horizon;
    opt.leader_period = tc.schedule.leader_action_period;
    opt.gamma = tc.gamma;
    opt.log_steps = true;
    p.episodes = evaluate(env, *pl.leader, fptrs, pl.binding, opt, derive_seed(cfg.seed, {3}), cfg.rollouts, cfg.jobs);
    return p;
}

void record_training(Recorder& rec, const std::string& exp, const TrainingReport& r) {
    for (const auto& [s, v] : r.leader_return.points()) rec.add(exp, "train_leader_return", s, 0, v);
    for (const auto& [s, v] : r.follower_return.points()) rec.add(exp, "train_follower_return", s, 0, v);
    for (std::size_t it = 0; it < r.theta.size(); ++it)
        for (std::size_t d = 0; d < r.theta[it].size(); ++d)
            rec.add(exp, "train_theta_" + std::to_string(d), static_cast<long>(it), 0, r.theta[it][d]);
}

void record_episodes(Recorder& rec, const std::string& exp, long step, const std::vector<Episode>& eps, double gamma) {
    for (std::size_t r = 0; r < eps.size(); ++r) {
        const auto& e = eps[r];
        const long ro = static_cast<long>(r);
        double total = 0.0;
        for (double x : e.leader_step_rewards) total += x;
        rec.add(exp, "leader_return", step, ro, e.leader_return(gamma));
        rec.add(exp, "leader_reward_sum", step, ro, total);
        rec.add(exp, "follower_return", step, ro, e.follower_mean_return(gamma));
        for (const auto& [k, v] : e.episode_log) rec.add(exp, k, step, ro, v);
    }
}

std::vector<double> concat_log(const std::vector<Episode>& eps, const std::string& key) {
    std::vector<double> v;
    for (const auto& e : eps) {
        auto it = e.step_log.find(key);
        if (it != e.step_log.end()) v.insert(v.end(), it->second.begin(), it->second.end());
    }
    return v;
}

// ---------------------------------------------------------------- tasks

void run_policy_design(const ExperimentConfig& cfg, Recorder& rec, std::ostream* log) {
    taxai::Environment env(cfg.taxai);
    const long step = static_cast<long>(cfg.training_iterations);
    auto leader = cfg.taxai.free_market ? fixed_leader(std::vector<double>(env.default_characteristics().size(), 0.0))
                                        : ppo_leader(env, cfg, 0);
    Players pl = shared_followers(env, cfg, std::move(leader), 0);
    Pass p = train_and_evaluate(env, pl, cfg, cfg.taxai.horizon, cfg.training_iterations, 0, cfg.name, log);
    record_training(rec, cfg.name, p.report);
    record_episodes(rec, cfg.name, step, p.episodes, cfg.learner.follower.gamma);
    for (std::size_t r = 0; r < p.episodes.size(); ++r) {
        const auto& e = p.episodes[r];
        double w = 0.0;
        for (double x : e.leader_step_rewards) w += x;
        rec.add(cfg.name, "social_welfare", step, static_cast<long>(r), w);
        rec.add(cfg.name, "social_welfare_discounted", step, static_cast<long>(r),
                e.leader_return(cfg.learner.follower.gamma));
    }
}

void record_calibration(Recorder& rec, const std::string& exp, long step, const std::vector<double>& sim,
                        const std::vector<double>& target, std::size_t resamples, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    const auto boot = cobweb::calibration_metrics(sim, target, resamples, rng);
    const auto direct = cobweb::quantile_matched_metrics(sim, target);
    rec.add(exp, "mae", step, 0, direct.mae);
    rec.add(exp, "rmse", step, 0, direct.rmse);
    rec.add(exp, "bootstrap_mae", step, 0, boot.mae);
    rec.add(exp, "bootstrap_rmse", step, 0, boot.rmse);
}

void run_calibrate(const ExperimentConfig& cfg, Recorder& rec, std::ostream* log) {
    const auto& cc = cfg.calibrate;
    const long step = static_cast<long>(cfg.training_iterations);
    const double gamma = cfg.learner.follower.gamma;

    std::vector<double> target;
    if (!cc.target_file.empty()) {
        target = cobweb::load_target_file(cc.target_file);
    } else {
        // Synthetic ground truth: producers trained under known (mu, sigma).
        cobweb::Params tp = cc.env;
        tp.mode = cobweb::Params::Mode::Distributional;
        cobweb::Environment tenv(tp);
        Players pl = shared_followers(tenv, cfg, fixed_leader({cc.target_mu, cc.target_sigma}), 1);
        ExperimentConfig tcfg = cfg;
        tcfg.rollouts = cc.target_rollouts;
        tcfg.seed = derive_seed(cfg.seed, {4});
        Pass p = train_and_evaluate(tenv, pl, tcfg, tp.horizon,
                                    cc.target_training_iterations.value_or(cfg.training_iterations), 1,
                                    cfg.name + ":target", log);
        target = concat_log(p.episodes, "price");
        record_episodes(rec, cfg.name + ":target", step, p.episodes, gamma);
    }
    if (target.empty()) throw ConfigError("calibrate: empty target series");
    {
        const double m = mean(target), s = sample_std(target);
        rec.add(cfg.name + ":target", "target_mean", step, 0, m);
        rec.add(cfg.name + ":target", "target_std", step, 0, s);
    }

    cobweb::Environment env(cc.env, target);
    const std::size_t dim = env.default_characteristics().size();
    std::unique_ptr<Learner> leader;
    if (cc.outer == CalibrateConfig::Outer::Bayes) {
        const Characteristics c = env.default_characteristics();
        auto b = c.bounds();
        leader = std::make_unique<BayesLeader>(std::vector<Bound>(b.begin(), b.end()), derive_seed(cfg.seed, {12}));
    } else {
        leader = ppo_leader(env, cfg, 2);
    }
    Players pl = shared_followers(env, cfg, std::move(leader), 2);
    Pass p = train_and_evaluate(env, pl, cfg, cc.env.horizon, cfg.training_iterations, 2, cfg.name, log);
    record_training(rec, cfg.name, p.report);
    record_episodes(rec, cfg.name, step, p.episodes, gamma);
    for (std::size_t d = 0; d < dim; ++d) {
        double th = 0.0;
        for (const auto& e : p.episodes) th += e.final_theta.at(d);
        rec.add(cfg.name, "theta_" + std::to_string(d), step, 0, th / static_cast<double>(p.episodes.size()));
    }
    record_calibration(rec, cfg.name, step, concat_log(p.episodes, "price"), target, cc.bootstrap_resamples,
                       derive_seed(cfg.seed, {5}));

    if (cc.run_baselines) {
        // Rational producers: no information cost.
        Players rp = shared_followers(env, cfg, fixed_leader(std::vector<double>(dim, 0.0)), 3);
        Pass rpass = train_and_evaluate(env, rp, cfg, cc.env.horizon, cfg.training_iterations, 3,
                                        cfg.name + ":rational", log);
        record_training(rec, cfg.name + ":rational", rpass.report);
        record_episodes(rec, cfg.name + ":rational", step, rpass.episodes, gamma);
        record_calibration(rec, cfg.name + ":rational", step, concat_log(rpass.episodes, "price"), target,
                           cc.bootstrap_resamples, derive_seed(cfg.seed, {5}));

        // The analytic equilibrium price held every step.
        const double pstar = cobweb::equilibrium_price(cc.env);
        std::vector<double> flat(target.size(), pstar);
        rec.add(cfg.name + ":equilibrium", "equilibrium_price", step, 0, pstar);
        record_calibration(rec, cfg.name + ":equilibrium", step, flat, target, cc.bootstrap_resamples,
                           derive_seed(cfg.seed, {5}));
    }
}

void run_scenario(const ExperimentConfig& cfg, Recorder& rec, std::ostream* log) {
    entry::Environment env(cfg.scenario);
    const long step = static_cast<long>(cfg.training_iterations);
    auto leader = cfg.scenario.tax_enabled ? ppo_leader(env, cfg, 0) : fixed_leader({0.0});
    Players pl = shared_followers(env, cfg, std::move(leader), 0);
    Pass p = train_and_evaluate(env, pl, cfg, cfg.scenario.horizon, cfg.training_iterations, 0, cfg.name, log);
    record_training(rec, cfg.name, p.report);
    record_episodes(rec, cfg.name, step, p.episodes, cfg.learner.follower.gamma);
    rec.add(cfg.name, "capacity", step, 0, cfg.scenario.capacity);
}

void record_mm_sweep(Recorder& rec, const std::string& exp, long step, const mm::Environment& env, Learner& follower,
                     const std::vector<double>& omegas, const ExperimentConfig& cfg, std::size_t period) {
    RolloutOptions opt;
    opt.horizon = cfg.meta_mm.env.horizon;
    opt.leader_period = period;
    opt.gamma = cfg.learner.follower.gamma;
    PolicyBinding binding = PolicyBinding::shared(1);
    Learner* fl[] = {&follower};
    for (double w : omegas) {
        FixedLeader fixed(ActionValue::continuous({w}));
        auto eps = evaluate(env, fixed, fl, binding, opt, derive_seed(cfg.seed, {3}), cfg.rollouts, cfg.jobs);
        record_episodes(rec, exp + ":omega=" + fmt_label(w), step, eps, opt.gamma);
    }
}

void run_meta_mm(const ExperimentConfig& cfg, Recorder& rec, std::ostream* log) {
    const auto& mc = cfg.meta_mm;
    mm::Environment env(mc.env);
    const long step = static_cast<long>(cfg.training_iterations);
    PreferenceGrid grid(mc.omega_grid);
    const std::size_t period = leader_period(cfg, env);

    Players pl = shared_followers(env, cfg, std::make_unique<MaxEntropyLeader>(grid), 0);
    Pass p = train_and_evaluate(env, pl, cfg, mc.env.horizon, cfg.training_iterations, 0, cfg.name, log);
    record_training(rec, cfg.name, p.report);
    record_episodes(rec, cfg.name, step, p.episodes, cfg.learner.follower.gamma);

    // Entropy of the preferences the leader actually drew during evaluation.
    std::vector<double> freq(grid.size(), 0.0);
    double draws = 0.0;
    for (const auto& e : p.episodes) {
        auto it = e.step_log.find("omega");
        if (it == e.step_log.end()) continue;
        for (double w : it->second) {
            const std::size_t k = grid.index_of(w);
            if (k < grid.size()) freq[k] += 1.0, draws += 1.0;
        }
    }
    if (draws > 0.0) {
        for (double& f : freq) f /= draws;
        rec.add(cfg.name, "preference_entropy", step, 0, preference_entropy(freq));
    }
    rec.add(cfg.name, "max_preference_entropy", step, 0, std::log(static_cast<double>(grid.size())));

    std::vector<double> omegas(grid.values().begin(), grid.values().end());
    record_mm_sweep(rec, cfg.name, step, env, *pl.followers[0], omegas, cfg, period);

    // One separately trained fixed-preference policy per baseline omega.
    for (std::size_t k = 0; k < mc.baseline_omegas.size(); ++k) {
        const double w = mc.baseline_omegas[k];
        Players bp = shared_followers(env, cfg, fixed_leader({w}), 1 + k);
        const std::string exp = cfg.name + ":fixed";
        Pass b = train_and_evaluate(env, bp, cfg, mc.env.horizon, cfg.training_iterations, 1 + k, exp, log);
        record_training(rec, exp + ":omega=" + fmt_label(w), b.report);
        record_mm_sweep(rec, exp, step, env, *bp.followers[0], {w}, cfg, period);
    }
}

}  // namespace

std::vector<MetricRow> run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
    std::vector<MetricRow> rows;
    Recorder rec(rows);
    switch (cfg.task) {
        case Task::PolicyDesign: run_policy_design(cfg, rec, log); break;
        case Task::Calibrate: run_calibrate(cfg, rec, log); break;
        case Task::Scenario: run_scenario(cfg, rec, log); break;
        case Task::MetaMm: run_meta_mm(cfg, rec, log); break;
    }
    return rows;
}

// ---------------------------------------------------------------- artifacts

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string o = "\"";
    for (char c : s) o += c == '"' ? std::string("\"\"") : std::string(1, c);
    return o + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') cur += '"', ++i;
            else if (c == '"') quoted = false;
            else cur += c;
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

void write_csv(const fs::path& path, const std::vector<MetricRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "experiment,metric,step,rollout,value\n";
    for (const auto& r : rows)
        out << csv_field(r.experiment) << ',' << csv_field(r.metric) << ',' << r.step << ',' << r.rollout << ','
            << fmt(r.value) << '\n';
}

std::vector<MetricRow> read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "experiment,metric,step,rollout,value") throw std::runtime_error(path.string() + ": unexpected header");
    std::vector<MetricRow> rows;
    std::size_t n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 5) throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": expected 5 fields");
        rows.push_back({f[0], f[1], std::stol(f[2]), std::stol(f[3]), std::stod(f[4])});
    }
    return rows;
}

std::map<SummaryKey, MetricStats> summarize(const std::vector<MetricRow>& rows) {
    std::map<SummaryKey, std::vector<const MetricRow*>> groups;
    for (const auto& r : rows) groups[{r.experiment, r.metric}].push_back(&r);
    std::map<SummaryKey, MetricStats> out;
    for (const auto& [key, rs] : groups) {
        MetricStats s;
        s.count = rs.size();
        s.min = s.max = rs.front()->value;
        long last = rs.front()->step;
        double sum = 0.0;
        for (const auto* r : rs) {
            sum += r->value;
            s.min = std::min(s.min, r->value);
            s.max = std::max(s.max, r->value);
            last = std::max(last, r->step);
        }
        s.mean = sum / static_cast<double>(rs.size());
        double fs_ = 0.0;
        std::size_t fn = 0;
        for (const auto* r : rs)
            if (r->step == last) fs_ += r->value, ++fn;
        s.final = fs_ / static_cast<double>(fn);
        out[key] = s;
    }
    return out;
}

json summary_json(const std::map<SummaryKey, MetricStats>& s) {
    json j = json::object();
    for (const auto& [key, st] : s)
        j[key.first][key.second] = {{"count", st.count}, {"mean", st.mean}, {"min", st.min}, {"max", st.max},
                                    {"final", st.final}};
    return j;
}

std::vector<double> select(const std::vector<MetricRow>& rows, const std::string& experiment,
                           const std::string& metric) {
    std::vector<double> v;
    for (const auto& r : rows)
        if (r.experiment == experiment && r.metric == metric) v.push_back(r.value);
    return v;
}

fs::path run_to_directory(const ExperimentConfig& cfg, const fs::path& out_dir, std::ostream* log) {
    const auto wall_start = std::chrono::system_clock::now();
    const auto t0 = std::chrono::steady_clock::now();
    auto rows = run_experiment(cfg, log);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(out_dir);
    write_csv(out_dir / "metrics.csv", rows);
    {
        std::ofstream s(out_dir / "summary.json");
        s << summary_json(summarize(rows)).dump(2) << '\n';
    }
    const std::time_t started = std::chrono::system_clock::to_time_t(wall_start);
    std::ostringstream ts;
    ts << std::put_time(std::gmtime(&started), "%Y-%m-%dT%H:%M:%SZ");
    json manifest = {
        {"config", resolved_json(cfg)},
        {"config_as_written", cfg.source},
        {"build", build_id()},
        {"started_utc", ts.str()},
        {"wall_clock_seconds", seconds},
        {"seed", cfg.seed},
        {"files", {{"metrics", "metrics.csv"}, {"summary", "summary.json"}, {"manifest", "manifest.json"}}},
    };
    std::ofstream m(out_dir / "manifest.json");
    m << manifest.dump(2) << '\n';
    return out_dir;
}

MissingMetricError::MissingMetricError(const std::string& metric, std::vector<std::string> available)
    : std::runtime_error("metric '" + metric + "' not found"), available_(std::move(available)) {}

std::vector<ComparisonLine> compare_runs(const fs::path& a, const fs::path& b, const std::string& metric) {
    const auto sa = summarize(read_csv(a / "metrics.csv"));
    const auto sb = summarize(read_csv(b / "metrics.csv"));
    std::set<std::string> experiments, available;
    for (const auto* s : {&sa, &sb})
        for (const auto& [key, st] : *s) {
            available.insert(key.second);
            if (key.second == metric) experiments.insert(key.first);
        }
    if (experiments.empty()) throw MissingMetricError(metric, {available.begin(), available.end()});
    std::vector<ComparisonLine> out;
    for (const auto& e : experiments) {
        ComparisonLine l;
        l.experiment = e;
        auto ia = sa.find({e, metric});
        auto ib = sb.find({e, metric});
        if (ia == sa.end() || ib == sb.end()) continue;
        l.a = ia->second;
        l.b = ib->second;
        l.delta_mean = l.b.mean - l.a.mean;
        l.delta_min = l.b.min - l.a.min;
        l.delta_max = l.b.max - l.a.max;
        l.sign = (l.delta_mean > 0) - (l.delta_mean < 0);
        out.push_back(l);
    }
    // Runs of different experiments (e.g. tax vs no-tax with their own
    // names) share metrics but not labels: pair them positionally.
    if (out.empty()) {
        std::vector<SummaryKey> ka, kb;
        for (const auto& [k, st] : sa)
            if (k.second == metric) ka.push_back(k);
        for (const auto& [k, st] : sb)
            if (k.second == metric) kb.push_back(k);
        for (std::size_t i = 0; i < std::min(ka.size(), kb.size()); ++i) {
            ComparisonLine l;
            l.experiment = ka[i].first == kb[i].first ? ka[i].first : ka[i].first + " vs " + kb[i].first;
            l.a = sa.at(ka[i]);
            l.b = sb.at(kb[i]);
            l.delta_mean = l.b.mean - l.a.mean;
            l.delta_min = l.b.min - l.a.min;
            l.delta_max = l.b.max - l.a.max;
            l.sign = (l.delta_mean > 0) - (l.delta_mean < 0);
            out.push_back(l);
        }
    }
    if (out.empty()) throw MissingMetricError(metric, {available.begin(), available.end()});
    return out;
}

void print_comparison(std::ostream& os, const std::string& metric, const std::vector<ComparisonLine>& lines) {
    os << "metric: " << metric << "\n";
    os << std::left << std::setw(36) << "experiment" << std::right << std::setw(14) << "mean A" << std::setw(14)
       << "mean B" << std::setw(14) << "delta mean" << std::setw(14) << "delta min" << std::setw(14) << "delta max"
       << std::setw(6) << "sign" << "\n";
    for (const auto& l : lines)
        os << std::left << std::setw(36) << l.experiment << std::right << std::setprecision(6) << std::setw(14)
           << l.a.mean << std::setw(14) << l.b.mean << std::setw(14) << l.delta_mean << std::setw(14) << l.delta_min
           << std::setw(14) << l.delta_max << std::setw(6) << (l.sign > 0 ? "+" : l.sign < 0 ? "-" : "0") << "\n";
}

void write_comparison_csv(const fs::path& path, const std::vector<ComparisonLine>& lines) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "experiment,mean_a,mean_b,delta_mean,delta_min,delta_max,sign\n";
    for (const auto& l : lines)
        out << csv_field(l.experiment) << ',' << fmt(l.a.mean) << ',' << fmt(l.b.mean) << ',' << fmt(l.delta_mean)
            << ',' << fmt(l.delta_min) << ',' << fmt(l.delta_max) << ',' << l.sign << '\n';
}

}  // namespace bilevel::harness
