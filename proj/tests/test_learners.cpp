#include <doctest.h>

#include <cmath>
#include <numeric>

#include "bilevel/bayes.hpp"
#include "bilevel/info.hpp"
#include "bilevel/ppo.hpp"
#include "bilevel/training.hpp"

using namespace bilevel;

namespace {

// Single-step episodes from `policy` on a fixed observation with rewards r(action).
template <class RewardFn>
std::vector<Trajectory> bandit_batch(const Policy& policy, const Observation& o, std::size_t n, Rng& rng,
                                     RewardFn reward) {
    nn::Matrix m(static_cast<Eigen::Index>(o.size()), 1);
    for (std::size_t i = 0; i < o.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = o[i];
    const auto dist = policy.distribution(m);
    std::vector<Trajectory> out(n);
    for (auto& tr : out) {
        auto s = policy.sample(dist, 0, rng);
        Transition t;
        t.observation = o;
        t.action = s.action;
        t.raw_action = s.raw;
        t.log_prob = s.log_prob;
        t.reward = reward(s.action);
        tr.steps.push_back(std::move(t));
        tr.gamma = 1.0;
    }
    return out;
}

std::vector<const Trajectory*> ptrs(const std::vector<Trajectory>& v) {
    std::vector<const Trajectory*> p;
    for (const auto& t : v) p.push_back(&t);
    return p;
}

// Random multi-step trajectories with random rewards for gradient checks.
std::vector<Trajectory> random_batch(const Policy& policy, std::size_t episodes, std::size_t len, Rng& rng,
                                     double info_weight = 0.0) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<Trajectory> out(episodes);
    for (auto& tr : out) {
        tr.gamma = 0.9;
        for (std::size_t t = 0; t < len; ++t) {
            Observation o(policy.obs_dim());
            for (double& x : o) x = n(rng);
            nn::Matrix m(static_cast<Eigen::Index>(o.size()), 1);
            for (std::size_t i = 0; i < o.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = o[i];
            auto s = policy.sample(policy.distribution(m), 0, rng);
            Transition tt;
            tt.observation = o;
            tt.action = s.action;
            tt.raw_action = s.raw;
            tt.log_prob = s.log_prob;
            tt.reward = n(rng);
            tt.value_estimate = 0.1 * n(rng);
            tt.info_cost_weight = info_weight;
            tr.steps.push_back(std::move(tt));
        }
    }
    return out;
}

double max_abs(const nn::Vector& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace

// ------------------------------------------------------------------ GAE

TEST_CASE("gae examples") {
    const std::vector<double> r1{1.0}, v1{0.0, 0.0};
    auto a = gae_advantages(r1, v1, 1.0, 1.0);
    REQUIRE(a.size() == 1);
    CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-12));

    const std::vector<double> r2{1.0, 1.0}, v2{0.5, 0.5, 0.0};
    auto b = gae_advantages(r2, v2, 1.0, 0.0);
    CHECK(b[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b[1] == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(gae_advantages(r2, r2, 1.0, 1.0), ParameterError);
}

TEST_CASE("gae with lambda 1 and zero values equals discounted returns-to-go") {
    Rng rng = make_rng(7);
    std::normal_distribution<double> n(0.0, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> r(1 + trial % 20);
        for (double& x : r) x = n(rng);
        const double g = 0.5 + 0.005 * trial;
        std::vector<double> v(r.size() + 1, 0.0);
        auto adv = gae_advantages(r, v, g, 1.0);
        for (std::size_t t = 0; t < r.size(); ++t) {
            const double togo = discounted_return(std::span<const double>(r).subspan(t), g);
            CHECK(std::abs(adv[t] - togo) < 1e-9);
        }
    }
}

// ------------------------------------------------------------------ information cost

TEST_CASE("kl information cost examples") {
    const std::vector<double> u4(4, 0.25), det{0, 0, 1, 0}, p{0.75, 0.25}, u2{0.5, 0.5};
    CHECK(kl_information_cost(u4, u4) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(kl_information_cost(det, u4) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(std::abs(kl_information_cost(p, u2) - (0.75 * std::log(1.5) + 0.25 * std::log(0.5))) < 1e-9);
    CHECK(std::abs(kl_information_cost(p, u2) - 0.1308) < 1e-4);
    const std::vector<double> narrow{0.5, 0.5, 0.0}, wide{1.0 / 3, 1.0 / 3, 1.0 / 3}, hole{0.5, 0.0, 0.5};
    CHECK_THROWS_AS(kl_information_cost(wide, hole), ParameterError);
    CHECK_NOTHROW(kl_information_cost(narrow, wide));
}

TEST_CASE("kl information cost is non-negative, zero only at equality") {
    Rng rng = make_rng(11);
    std::gamma_distribution<double> g(1.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t k = 2 + trial % 7;
        std::vector<double> p(k), q(k);
        double sp = 0, sq = 0;
        for (std::size_t i = 0; i < k; ++i) sp += p[i] = g(rng), sq += q[i] = g(rng) + 1e-3;
        for (std::size_t i = 0; i < k; ++i) p[i] /= sp, q[i] /= sq;
        CHECK(kl_information_cost(p, q) >= 0.0);
        CHECK(std::abs(kl_information_cost(p, p)) <= 1e-12);
    }
}

// ------------------------------------------------------------------ preference sampling

TEST_CASE("max entropy sampler") {
    PreferenceGrid single({0.5});
    Rng rng = make_rng(1);
    for (int i = 0; i < 10; ++i) CHECK(max_entropy_sample(single, rng) == 0.5);

    PreferenceGrid grid;
    std::vector<double> freq(grid.size(), 0.0);
    const int N = 100000;
    for (int i = 0; i < N; ++i) freq[grid.index_of(max_entropy_sample(grid, rng))] += 1.0;
    for (double& f : freq) {
        f /= N;
        CHECK(f >= 0.19);
        CHECK(f <= 0.21);
    }
    CHECK(preference_entropy(freq) >= std::log(5.0) - 0.01);

    CHECK_THROWS_AS(PreferenceGrid({0.5, 0.25}), ParameterError);
    CHECK_THROWS_AS(PreferenceGrid({1.5}), ParameterError);
    CHECK_THROWS_AS(PreferenceGrid(std::vector<double>{}), ParameterError);
}

TEST_CASE("preference entropy examples and bound") {
    const std::vector<double> uni(5, 0.2), degenerate{0, 0, 1, 0, 0};
    CHECK(std::abs(preference_entropy(uni) - std::log(5.0)) < 1e-9);
    CHECK(std::abs(preference_entropy(uni) - 1.6094) < 1e-4);
    CHECK(preference_entropy(degenerate) == 0.0);
    Rng rng = make_rng(4);
    std::gamma_distribution<double> g(0.5, 1.0);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> p(5);
        double s = 0;
        for (double& x : p) s += x = g(rng);
        for (double& x : p) x /= s;
        CHECK(preference_entropy(p) <= std::log(5.0) + 1e-12);
    }
}

// ------------------------------------------------------------------ Bayesian optimization

TEST_CASE("bayes_suggest without observations stays in bounds") {
    SurrogateState st;
    Rng rng = make_rng(2);
    const std::vector<Bound> b{{0, 1}, {0, 1}};
    for (int i = 0; i < 20; ++i) {
        auto x = bayes_suggest(st, b, rng);
        REQUIRE(x.size() == 2);
        CHECK(b[0].contains(x[0]));
        CHECK(b[1].contains(x[1]));
    }
}

TEST_CASE("bayes_suggest finds the optimum of a quadratic") {
    auto f = [](double x) { return -(x - 0.3) * (x - 0.3); };
    // Oracle: grid search.
    double arg = 0.0, best = -1e9;
    for (int k = 0; k <= 10000; ++k)
        if (f(k / 10000.0) > best) best = f(k / 10000.0), arg = k / 10000.0;

    SurrogateState st;
    Rng rng = make_rng(9);
    const std::vector<Bound> b{{0, 1}};
    for (int round = 0; round < 20; ++round) {
        auto x = bayes_suggest(st, b, rng);
        CHECK(b[0].contains(x[0]));
        st.add(x, f(x[0]));
    }
    CHECK(std::abs(st.xs()[st.best_index()][0] - arg) <= 0.05);
}

TEST_CASE("gp fit survives duplicate observations") {
    SurrogateState st;
    for (int i = 0; i < 6; ++i) st.add({0.4}, 1.0);
    st.add({0.7}, 0.5);
    Rng rng = make_rng(3);
    const std::vector<Bound> b{{0, 1}};
    std::vector<double> x;
    CHECK_NOTHROW(x = bayes_suggest(st, b, rng));
    CHECK(b[0].contains(x[0]));

    GaussianProcess gp;
    Eigen::MatrixXd X(1, 2);
    X << 0.5, 0.5;
    Eigen::VectorXd y(2);
    y << 1.0, 1.0;
    CHECK_NOTHROW(gp.fit(X, y));
    auto [mu, sd] = gp.predict(Eigen::VectorXd::Constant(1, 0.5));
    CHECK(std::isfinite(mu));
    CHECK(sd >= 0.0);
}

TEST_CASE("bayes_suggest with degenerate bounds returns the point") {
    SurrogateState st;
    Rng rng = make_rng(1);
    const std::vector<Bound> b{{0.2, 0.2}, {3.0, 3.0}};
    auto x = bayes_suggest(st, b, rng);
    CHECK(x == std::vector<double>{0.2, 3.0});
}

TEST_CASE("surrogate state rejects inconsistent data") {
    SurrogateState st;
    st.add({0.1, 0.2}, 1.0);
    CHECK_THROWS_AS(st.add({0.1}, 1.0), ParameterError);
    CHECK_THROWS_AS(st.add({0.1, 0.3}, std::nan("")), ParameterError);
}

TEST_CASE("expected improvement") {
    CHECK(expected_improvement(1.0, 0.0, 0.5, 0.0) == doctest::Approx(0.5));
    CHECK(expected_improvement(0.0, 0.0, 0.5, 0.0) == 0.0);
    // sigma > 0, mu = best: EI = sigma * phi(0).
    CHECK(expected_improvement(0.0, 2.0, 0.0, 0.0) == doctest::Approx(2.0 / std::sqrt(2.0 * M_PI)).epsilon(1e-12));
}

// ------------------------------------------------------------------ PPO

TEST_CASE("ppo config validation") {
    PpoConfig c;
    CHECK_NOTHROW(c.validate());
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = PpoConfig{};
    c.gamma = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = PpoConfig{};
    c.gae_lambda = -0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("ppo: zero advantages leave the policy unchanged") {
    Rng init = make_rng(5);
    Policy policy(3, ActionSpace::discrete(3), {8}, {}, init);
    PpoConfig cfg;
    cfg.train_value = false;
    cfg.entropy_coeff = 0.0;
    PpoState st{nn::Adam(policy.num_parameters(), 1e-2), 0.2, make_rng(1)};
    Rng rng = make_rng(6);
    auto batch = bandit_batch(policy, {0.1, 0.2, 0.3}, 64, rng, [](const ActionValue&) { return 0.0; });
    const nn::Vector before = policy.parameters();
    ppo_update(policy, nullptr, ptrs(batch), cfg, st);
    CHECK(max_abs(policy.parameters() - before) < 1e-8);
}

TEST_CASE("ppo solves a two-armed bandit") {
    // Linear softmax over one constant input; the analytic optimum is arm 1.
    Rng init = make_rng(3);
    Policy policy(1, ActionSpace::discrete(2), {}, {}, init);
    PpoConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.train_value = false;
    cfg.minibatch_size = 32;
    cfg.epochs_per_update = 4;
    PpoState st{nn::Adam(policy.num_parameters(), cfg.learning_rate), cfg.kl_coeff, make_rng(2)};
    Rng rng = make_rng(4);
    nn::Matrix o(1, 1);
    o(0, 0) = 1.0;
    int reached = -1;
    for (int u = 0; u < 200; ++u) {
        auto batch = bandit_batch(policy, {1.0}, 32, rng, [](const ActionValue& a) { return a.index() == 1 ? 1.0 : 0.0; });
        ppo_update(policy, nullptr, ptrs(batch), cfg, st);
        if (policy.distribution(o).probabilities(0)[1] > 0.9) {
            reached = u;
            break;
        }
    }
    CHECK(reached >= 0);
    CHECK(policy.distribution(o).probabilities(0)[1] > 0.9);
}

TEST_CASE("surrogate gradient matches central finite differences") {
    auto check = [](Policy policy, double info_weight, std::uint64_t seed) {
        Rng rng = make_rng(seed);
        PpoConfig cfg;
        cfg.entropy_coeff = 0.01;
        auto trajs = random_batch(policy, 4, 8, rng, info_weight);
        auto batch = make_ppo_batch(policy, ptrs(trajs), cfg);
        // Move away from the old policy so ratio and KL terms are active but unclipped.
        nn::Vector p = policy.parameters();
        std::normal_distribution<double> n(0.0, 0.02);
        for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += n(rng);
        policy.set_parameters(p);
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(batch.size()));
        std::iota(idx.begin(), idx.end(), 0);
        nn::Vector g;
        surrogate_gradient(policy, batch, idx, 0.5, cfg, g, 1);
        const double h = 1e-6;
        double worst = 0.0;
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            nn::Vector q = p;
            q[i] = p[i] + h;
            policy.set_parameters(q);
            const double up = surrogate_loss(policy, batch, idx, 0.5, cfg);
            q[i] = p[i] - h;
            policy.set_parameters(q);
            const double down = surrogate_loss(policy, batch, idx, 0.5, cfg);
            const double fd = (up - down) / (2 * h);
            worst = std::max(worst, std::abs(fd - g[i]) / std::max(1.0, std::abs(fd)));
        }
        policy.set_parameters(p);
        return worst;
    };
    Rng init = make_rng(8);
    SUBCASE("five-parameter gaussian") {
        Policy pol(3, ActionSpace::continuous({{-2.0, 3.0}}), {}, {}, init);
        REQUIRE(pol.num_parameters() == 5);
        CHECK(check(pol, 0.0, 1) < 1e-4);
    }
    SUBCASE("categorical with information cost") {
        Policy pol(3, ActionSpace::discrete(4), {6}, {}, init);
        CHECK(check(pol, 0.7, 2) < 1e-4);
    }
    SUBCASE("two-dimensional gaussian with hidden layer") {
        Policy pol(2, ActionSpace::continuous({{0.0, 1.0}, {-1.0, 1.0}}), {5}, {}, init);
        CHECK(check(pol, 0.0, 3) < 1e-4);
    }
}

TEST_CASE("parallel surrogate gradient equals the serial reference") {
    Rng init = make_rng(12);
    Policy policy(4, ActionSpace::discrete(3), {16, 16}, {}, init);
    Rng rng = make_rng(13);
    PpoConfig cfg;
    auto trajs = random_batch(policy, 10, 50, rng, 0.3);
    auto batch = make_ppo_batch(policy, ptrs(trajs), cfg);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(batch.size()));
    std::iota(idx.begin(), idx.end(), 0);
    nn::Vector serial, par1, par4;
    const auto ts = surrogate_gradient_serial(policy, batch, idx, 0.2, cfg, serial);
    surrogate_gradient(policy, batch, idx, 0.2, cfg, par1, 1);
    const auto t4 = surrogate_gradient(policy, batch, idx, 0.2, cfg, par4, 4);
    CHECK(max_abs(par1 - par4) == 0.0);
    CHECK(max_abs(serial - par1) < 1e-12);
    CHECK(std::abs(ts.loss - t4.loss) < 1e-12);
}

TEST_CASE("ppo update keeps KL within four times the target") {
    Rng rng = make_rng(21);
    for (int trial = 0; trial < 12; ++trial) {
        Rng init = make_rng(100 + trial);
        const bool discrete = trial % 2 == 0;
        Policy policy(3, discrete ? ActionSpace::discrete(3) : ActionSpace::continuous({{0.0, 1.0}}), {8}, {}, init);
        PpoConfig cfg;
        cfg.learning_rate = 0.05;  // aggressive on purpose
        cfg.epochs_per_update = 10;
        cfg.train_value = false;
        PpoState st{nn::Adam(policy.num_parameters(), cfg.learning_rate), cfg.kl_coeff, make_rng(trial)};
        auto trajs = random_batch(policy, 8, 16, rng);
        auto batch = make_ppo_batch(policy, ptrs(trajs), cfg);
        ppo_update(policy, nullptr, ptrs(trajs), cfg, st);
        CHECK(mean_kl(policy, batch) <= 4.0 * cfg.kl_target + 1e-12);
    }
}

TEST_CASE("policy distributions stay valid after updates") {
    Rng rng = make_rng(31);
    Rng init = make_rng(32);
    Policy cat(2, ActionSpace::discrete(5), {8}, {}, init);
    Policy gau(2, ActionSpace::continuous({{0.0, 10.0}}), {8}, {}, init);
    PpoConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.train_value = false;
    for (Policy* p : {&cat, &gau}) {
        PpoState st{nn::Adam(p->num_parameters(), cfg.learning_rate), cfg.kl_coeff, make_rng(1)};
        for (int u = 0; u < 20; ++u) {
            auto trajs = random_batch(*p, 4, 16, rng);
            ppo_update(*p, nullptr, ptrs(trajs), cfg, st);
            nn::Matrix o = nn::Matrix::Random(2, 7);
            auto d = p->distribution(o);
            for (Eigen::Index c = 0; c < d.batch(); ++c) {
                if (d.kind == HeadKind::Categorical) {
                    auto pr = d.probabilities(c);
                    CHECK(std::abs(std::accumulate(pr.begin(), pr.end(), 0.0) - 1.0) <= 1e-9);
                } else {
                    for (Eigen::Index k = 0; k < d.log_std.size(); ++k) {
                        const double s = std::exp(d.log_std[k]);
                        CHECK(s >= 1e-4 * (1 - 1e-12));
                        CHECK(s <= 10.0 * (1 + 1e-12));
                    }
                }
            }
            // Sampled actions are always inside the bounds.
            for (int k = 0; k < 20; ++k) {
                auto s = p->sample(d, k % d.batch(), rng);
                CHECK_NOTHROW(s.action.validate(p->action_space()));
            }
        }
    }
}

TEST_CASE("analytic leaders") {
    FixedLeader f(ActionValue::continuous({0.3}));
    CHECK_FALSE(f.needs_experience());
    MaxEntropyLeader m(PreferenceGrid{});
    Rng r = make_rng(1);
    Rng* rs[] = {&r};
    nn::Matrix o = nn::Matrix::Zero(1, 1);
    for (int i = 0; i < 50; ++i) {
        auto s = m.actor().act(o, rs);
        const double w = s[0].action.vector()[0];
        CHECK(m.grid().index_of(w) < m.grid().size());
        CHECK(s[0].log_prob == doctest::Approx(-std::log(5.0)));
    }
}
