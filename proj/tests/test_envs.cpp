#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bilevel/envs/cobweb.hpp"
#include "bilevel/envs/entry.hpp"
#include "bilevel/envs/market_maker.hpp"
#include "bilevel/envs/taxai.hpp"
#include "bilevel/info.hpp"
#include "bilevel/metrics.hpp"

using namespace bilevel;

namespace {

std::vector<ActionValue> uniform_actions(std::size_t n, std::vector<double> v) {
    return std::vector<ActionValue>(n, ActionValue::continuous(std::move(v)));
}

}  // namespace

// ================================================================== taxai

TEST_CASE("hsv tax examples") {
    using taxai::hsv_tax;
    for (double x : {0.0, 0.3, 1.0, 7.5}) CHECK(hsv_tax(x, 0.0, 0.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(hsv_tax(10.0, 0.5, 0.0) - 5.0) < 1e-9);
    CHECK(std::abs(hsv_tax(2.0, 0.3, 0.5) - (2.0 - 1.4 * std::sqrt(2.0))) < 1e-9);
    CHECK(std::abs(hsv_tax(2.0, 0.3, 0.5) - 0.0201) < 1e-4);
    CHECK_THROWS_AS(hsv_tax(1.0, 0.2, 1.0), ParameterError);
    CHECK_THROWS_AS(hsv_tax(-1.0, 0.2, 0.1), ParameterError);
}

TEST_CASE("hsv tax properties") {
    Rng rng = make_rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0), big(0.0, 50.0);
    for (int i = 0; i < 1000; ++i) {
        const double x = big(rng), tau = u(rng);
        // Flat-tax reduction.
        CHECK(std::abs(taxai::hsv_tax(x, tau, 0.0) - tau * x) < 1e-9 * std::max(1.0, x));
        // Non-decreasing in tau.
        const double xi = 0.99 * u(rng), t2 = std::min(1.0, tau + 0.1 * u(rng));
        if (x > 0) CHECK(taxai::hsv_tax(x, t2, xi) >= taxai::hsv_tax(x, tau, xi) - 1e-12);
    }
}

TEST_CASE("wage rate") {
    CHECK(taxai::wage_rate(3.0, 3.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(std::abs(taxai::wage_rate(8.0, 1.0) - 4.0 / 3.0) < 1e-9);
    CHECK_THROWS_AS(taxai::wage_rate(1.0, 0.0), DegenerateEconomyError);
    Rng rng = make_rng(2);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int i = 0; i < 200; ++i) {
        double k1 = u(rng), k2 = u(rng), l = 0.1 + u(rng);
        if (k1 > k2) std::swap(k1, k2);
        if (k1 < k2) CHECK(taxai::wage_rate(k1, l) < taxai::wage_rate(k2, l));
    }
}

TEST_CASE("household and government rewards") {
    CHECK(taxai::household_reward(1.0, 0.0, 2.0) == 0.0);
    CHECK(taxai::household_reward(1.0, 1.0, 1.0) == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(taxai::household_reward(std::exp(1.0), 0.0, 2.0) == doctest::Approx(1.0).epsilon(1e-12));
    const std::vector<double> z(4, 0.0), r{-0.5, 1.0, 0.25}, rp{0.25, -0.5, 1.0};
    CHECK(taxai::government_reward(z) == 0.0);
    CHECK(taxai::government_reward(r) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(taxai::government_reward(r) == doctest::Approx(taxai::government_reward(rp)).epsilon(1e-15));
}

TEST_CASE("taxai step: free market with no saving consumes everything") {
    taxai::Params p;
    std::vector<taxai::Household> hh(3);
    for (std::size_t k = 0; k < hh.size(); ++k) hh[k].assets = 1.0 + k, hh[k].productivity = 1.0;
    const auto before = hh;
    std::vector<std::vector<double>> acts(3, {0.0, 0.5});
    const std::vector<double> theta(4, 0.0);
    auto out = taxai::economy_step(hh, acts, theta, p);
    for (std::size_t k = 0; k < hh.size(); ++k) {
        CHECK(hh[k].assets == 0.0);
        CHECK(hh[k].consumption == doctest::Approx(before[k].assets + hh[k].income).epsilon(1e-12));
    }
    CHECK(out.wage > 0.0);
}

TEST_CASE("taxai step: zero capital gives zero wage and the consumption floor") {
    taxai::Params p;
    std::vector<taxai::Household> hh(4);
    for (auto& h : hh) h.assets = 0.0, h.productivity = 1.0;
    std::vector<std::vector<double>> acts(4, {0.5, 1.0});
    const std::vector<double> theta(4, 0.0);
    auto out = taxai::economy_step(hh, acts, theta, p);
    CHECK(out.wage == 0.0);
    for (const auto& h : hh) {
        CHECK(h.income == 0.0);
        CHECK(h.consumption == doctest::Approx(p.consumption_floor));
    }
}

TEST_CASE("taxai step: richer household pays more asset tax above one") {
    const double tau = 0.3, xi = 0.4;
    Rng rng = make_rng(3);
    std::uniform_real_distribution<double> u(1.0, 20.0);
    for (int i = 0; i < 500; ++i) {
        double a1 = u(rng), a2 = u(rng);
        if (a1 > a2) std::swap(a1, a2);
        if (a2 - a1 < 1e-6) continue;
        CHECK(taxai::hsv_tax(a2, tau, xi) > taxai::hsv_tax(a1, tau, xi));
    }
}

TEST_CASE("taxai environment invariants") {
    taxai::Params p;
    p.n_households = 5;
    taxai::Environment env(p);
    CHECK(env.observation_dim(Role::Follower) == 8);
    CHECK(env.observation_dim(Role::Leader) == 7);
    Characteristics th = env.default_characteristics();
    th.assign(std::vector<double>{0.2, 0.3, 0.1, 0.2});
    auto obs = env.reset(th, 4);
    CHECK(obs.size() == 5);
    CHECK(obs[0].size() == 8);
    CHECK(env.leader_observe().size() == 7);
    Rng rng = make_rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<ActionValue> acts;
        for (int k = 0; k < 5; ++k) acts.push_back(ActionValue::continuous({u(rng), u(rng)}));
        auto r = env.follower_step(acts);
        CHECK(r.leader_reward == doctest::Approx(std::accumulate(r.follower_rewards.begin(), r.follower_rewards.end(), 0.0)));
        for (std::size_t k = 0; k < 5; ++k) {
            const auto& h = env.households()[k];
            CHECK(h.assets >= 0.0);
            CHECK(h.income >= 0.0);
            CHECK(h.consumption >= 0.0);
            // Households see the full characteristics.
            const auto view = env.follower_view(k);
            for (std::size_t d = 0; d < 4; ++d) {
                CHECK(view[d] == env.characteristics()[d]);
                CHECK(r.observations[k][4 + d] == env.characteristics()[d]);
            }
        }
    }
}

TEST_CASE("taxai budget identity in the free market") {
    taxai::Params p;
    std::vector<taxai::Household> hh(6);
    Rng rng = make_rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& h : hh) h.assets = 0.5 + 3 * u(rng), h.productivity = 0.5 + u(rng);
    for (int t = 0; t < 50; ++t) {
        std::vector<std::vector<double>> acts;
        for (std::size_t k = 0; k < hh.size(); ++k) acts.push_back({0.1 + 0.8 * u(rng), 0.1 + 0.9 * u(rng)});
        double before = 0.0;
        for (const auto& h : hh) before += h.assets;
        const std::vector<double> theta(4, 0.0);
        taxai::economy_step(hh, acts, theta, p);
        double inc = 0.0, c = 0.0, s = 0.0;
        for (const auto& h : hh) inc += h.income, c += h.consumption, s += h.assets;
        CHECK(std::abs((c + s) - (before + inc)) < 1e-9);
    }
}

TEST_CASE("taxai free market forces zero taxes") {
    taxai::Params p;
    p.free_market = true;
    taxai::Environment env(p);
    Characteristics th = env.default_characteristics();
    th.assign(std::vector<double>{0.5, 0.5, 0.5, 0.5});
    env.reset(th, 1);
    for (double v : env.characteristics().values()) CHECK(v == 0.0);
    env.leader_apply(ActionValue::continuous({0.5, 0.5, 0.5, 0.5}));
    for (double v : env.characteristics().values()) CHECK(v == 0.0);
}

// ================================================================== cobweb

TEST_CASE("cobweb supply and price") {
    using namespace cobweb;
    CHECK(supply(6.0, 2.0, 6.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(supply(1e6, 2.0, 6.0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(supply(-1e6, 2.0, 6.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(supply(6.5, 2.0, 6.0) - (std::tanh(1.0) + 1.0)) < 1e-9);
    CHECK(std::abs(supply(6.5, 2.0, 6.0) - 1.7616) < 1e-4);

    Params p;
    const std::vector<double> at_offset(6, 6.0), far_low(6, -1e6);
    CHECK(std::abs(market_price(at_offset, p, 0.0) - 5.2) < 1e-9);
    CHECK(std::abs(market_price(far_low, p, 0.0) - 9.2) < 1e-9);
    Rng rng = make_rng(1);
    std::uniform_real_distribution<double> u(0.0, 9.2);
    for (int t = 0; t < 300; ++t) {
        std::vector<double> pr(6);
        for (double& x : pr) x = u(rng);
        auto higher = pr;
        higher[t % 6] += 0.05;
        CHECK(market_price(higher, p, 0.0) < market_price(pr, p, 0.0));
    }
}

TEST_CASE("cobweb equilibrium price") {
    using namespace cobweb;
    Params p;
    const double ps = equilibrium_price(p);
    // Oracle: independent fixed-point residual.
    const double resid = ps - (p.a - 6.0 * (std::tanh(p.psi * (ps - 6.0)) + 1.0)) / p.b;
    CHECK(std::abs(resid) < 1e-8);
    CHECK(std::abs(ps - 5.91) < 0.005);
    Params none = p;
    none.n_producers = 0;
    none.supply_offset = 6.0;
    CHECK(std::abs(equilibrium_price(none) - 9.2) < 1e-8);
}

TEST_CASE("cobweb producer and calibrator rewards") {
    using namespace cobweb;
    CHECK(producer_reward(4.0, 4.0) == 1300.0);
    CHECK(producer_reward(5.0, 4.0) == doctest::Approx(1040.0).epsilon(1e-12));
    CHECK(producer_reward(4.0 + std::sqrt(5.0), 4.0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(producer_reward(10.0, 4.0) == 0.0);
    Rng rng = make_rng(2);
    std::normal_distribution<double> n(0.0, 3.0);
    for (int i = 0; i < 500; ++i) {
        const double r = producer_reward(n(rng), n(rng));
        CHECK(r >= 0.0);
        CHECK(r <= 1300.0);
    }
    CHECK(calibrator_reward(3.0, 3.0) == 0.0);
    CHECK(std::abs(calibrator_reward(5.0, 5.2) + 0.2) < 1e-9);
    CHECK(calibrator_reward(4.0, 5.0) == calibrator_reward(6.0, 5.0));
}

TEST_CASE("cobweb penalized objective") {
    using namespace cobweb;
    const std::vector<double> uni(21, 1.0 / 21);
    std::vector<double> det(21, 0.0);
    det[4] = 1.0;
    CHECK(penalized_producer_objective(500.0, 0.0, det) == 500.0);
    CHECK(penalized_producer_objective(500.0, 7.0, uni) == doctest::Approx(500.0).epsilon(1e-12));
    CHECK(std::abs((500.0 - penalized_producer_objective(500.0, 10.0, det)) - 10.0 * std::log(21.0)) < 1e-9);
    CHECK(std::abs(10.0 * std::log(21.0) - 30.45) < 0.01);
}

TEST_CASE("cobweb calibration metrics") {
    using namespace cobweb;
    const std::vector<double> s{1.0, 2.0, 3.0};
    auto same = quantile_matched_metrics(s, s);
    CHECK(same.mae == 0.0);
    CHECK(same.rmse == 0.0);
    const std::vector<double> e1{0.1, -0.1}, e2{0.0, 0.2};
    CHECK(std::abs(error_metrics(e1).mae - 0.1) < 1e-9);
    CHECK(std::abs(error_metrics(e1).rmse - 0.1) < 1e-9);
    CHECK(std::abs(error_metrics(e2).mae - 0.1) < 1e-9);
    CHECK(std::abs(error_metrics(e2).rmse - std::sqrt(0.02)) < 1e-9);
    Rng rng = make_rng(3);
    auto boot = calibration_metrics(s, s, 100, rng);
    CHECK(boot.mae >= 0.0);
    // A shift of every sample by c gives MAE = RMSE = c.
    const std::vector<double> shifted{1.5, 2.5, 3.5};
    auto m = quantile_matched_metrics(shifted, s);
    CHECK(std::abs(m.mae - 0.5) < 1e-12);
    CHECK(std::abs(m.rmse - 0.5) < 1e-12);
}

TEST_CASE("cobweb observations and containment") {
    cobweb::Params p;
    p.mode = cobweb::Params::Mode::Individual;
    cobweb::Environment env(p);
    Characteristics th = env.default_characteristics();
    th.assign(std::vector<double>{1, 2, 3, 4, 5, 6});
    auto obs = env.reset(th, 1);
    CHECK(env.leader_observe().size() == p.n_producers + 1);
    REQUIRE(obs.size() == p.n_producers);
    for (std::size_t i = 0; i < p.n_producers; ++i) {
        CHECK(obs[i].size() == 4);
        CHECK(obs[i][3] == static_cast<double>(i + 1));
        CHECK(env.follower_view(i) == std::vector<double>{static_cast<double>(i + 1)});
        // No other producer's penalty appears in i's observation.
        for (std::size_t j = 0; j < p.n_producers; ++j)
            if (j != i) CHECK(std::find(obs[i].begin() + 3, obs[i].end(), static_cast<double>(j + 1)) == obs[i].end());
    }
}

TEST_CASE("truncated lambda draws match truncated moments") {
    Rng rng = make_rng(4);
    for (auto [mu, sigma] : {std::pair{10.0, 3.0}, std::pair{2.0, 3.0}, std::pair{5.0, 1.0}}) {
        std::vector<double> d(10000);
        for (double& x : d) {
            x = cobweb::sample_truncated_lambda(mu, sigma, rng);
            CHECK(x >= 0.0);
        }
        const auto [tm, ts] = cobweb::truncated_moments(mu, sigma);
        CHECK(std::abs(mean(d) - tm) <= 0.02 * tm);
        CHECK(std::abs(sample_std(d) - ts) <= 0.02 * ts);
        if (mu / sigma > 3) CHECK(std::abs(tm - mu) < 0.02 * mu);
    }
    CHECK(cobweb::sample_truncated_lambda(3.0, 0.0, rng) == 3.0);
}

TEST_CASE("cobweb rational producers predicting equilibrium") {
    cobweb::Params p;
    p.continuous_predictions = true;
    cobweb::Environment env(p);
    env.reset(env.default_characteristics(), 5);
    const double ps = cobweb::equilibrium_price(p);
    const auto acts = uniform_actions(p.n_producers, {ps});
    const std::size_t T = 10000;
    for (std::size_t t = 0; t < T; ++t) env.follower_step(acts);
    CHECK(std::abs(mean(env.prices()) - ps) < 3.0 * p.sigma_eps / std::sqrt(static_cast<double>(T)));
}

// ================================================================== entry

TEST_CASE("entry rewards") {
    using namespace entry;
    CHECK(base_reward(StayOut, 17, 12) == 1.0);
    CHECK(base_reward(Enter, 12, 12) == 1.0);
    CHECK(base_reward(Enter, 10, 12) == 5.0);
    CHECK(tobin_adjusted_reward(5.0, true, 0.0) == 5.0);
    CHECK(std::abs(tobin_adjusted_reward(5.0, true, 0.1) - 4.5) < 1e-12);
    CHECK(std::abs(tobin_adjusted_reward(-3.0, true, 0.1) + 3.3) < 1e-12);
    CHECK(tobin_adjusted_reward(5.0, false, 0.1) == 5.0);
    CHECK(tobin_adjusted_reward(5.0, true, 0.5) == tobin_adjusted_reward(5.0, true, 0.1));
}

TEST_CASE("entry demand statistics") {
    using namespace entry;
    const std::vector<double> c(5, 7.0), d{10, 12}, d3{10, 12, 9};
    CHECK(scenario_reward(c) == 0.0);
    CHECK(std::abs(scenario_reward(d) + std::sqrt(2.0)) < 1e-9);
    CHECK(std::abs(scenario_reward(d) + 1.4142) < 1e-4);
    const std::vector<double> one{4.0};
    CHECK(scenario_reward(one) == 0.0);
    CHECK(mean_abs_pct_change(c) == 0.0);
    CHECK(std::abs(mean_abs_pct_change(d3) - 0.225) < 1e-9);
    const std::vector<double> scaled{30, 36, 27};
    CHECK(std::abs(mean_abs_pct_change(scaled) - 0.225) < 1e-12);
    std::size_t skipped = 0;
    const std::vector<double> zeros{0, 3, 0, 2};
    mean_abs_pct_change(zeros, &skipped);
    CHECK(skipped == 2);

    Rng rng = make_rng(7);
    std::uniform_int_distribution<int> u(0, 20);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> h(2 + t % 30);
        for (double& x : h) x = u(rng);
        auto p = h;
        std::shuffle(p.begin(), p.end(), rng);
        CHECK(std::abs(scenario_reward(h) - scenario_reward(p)) < 1e-9);
    }
}

TEST_CASE("entry environment") {
    entry::Params p;
    entry::Environment env(p);
    CHECK(env.observation_dim(Role::Follower) == 4);
    CHECK(env.observation_dim(Role::Leader) == 2);
    auto obs = env.reset(env.default_characteristics(), 1);
    CHECK(obs[0][0] == p.capacity);
    CHECK(obs[0][1] == p.capacity);
    CHECK(obs[0][2] == static_cast<double>(entry::StayOut));
    CHECK(env.characteristics()[0] == 0.0);
    Rng rng = make_rng(2);
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<double> tax(0.0, 0.1);
    for (int t = 0; t < 200; ++t) {
        env.leader_apply(ActionValue::continuous({tax(rng)}));
        std::vector<ActionValue> acts;
        for (std::size_t k = 0; k < p.n_traders; ++k) acts.push_back(ActionValue::discrete(coin(rng) ? 1 : 0));
        auto r = env.follower_step(acts);
        const double d = env.demand().back();
        CHECK(d >= 0.0);
        CHECK(d <= static_cast<double>(p.n_traders));
        CHECK(r.leader_reward <= 0.0);
        for (std::size_t k = 1; k < p.n_traders; ++k) CHECK(r.observations[k][3] == r.observations[0][3]);
    }

    // No tax: the duty has no effect on rewards.
    entry::Params off = p;
    off.tax_enabled = false;
    entry::Environment e2(off);
    e2.reset(e2.default_characteristics(), 1);
    e2.leader_apply(ActionValue::continuous({0.1}));
    CHECK(e2.characteristics()[0] == 0.0);
    std::vector<ActionValue> all_in(p.n_traders, ActionValue::discrete(1));
    auto r = e2.follower_step(all_in);
    for (double x : r.follower_rewards)
        CHECK(x == entry::base_reward(entry::Enter, static_cast<double>(p.n_traders), p.capacity));

    // Constant demand: leader reward exactly 0.
    entry::Environment e3(p);
    e3.reset(e3.default_characteristics(), 1);
    for (int t = 0; t < 5; ++t) CHECK(e3.follower_step(all_in).leader_reward == 0.0);
}

TEST_CASE("entry: traders in the same situation get the same reward") {
    entry::Params p;
    entry::Environment env(p);
    auto obs = env.reset(env.default_characteristics(), 3);
    Rng rng = make_rng(9);
    std::bernoulli_distribution coin(0.5);
    std::uniform_real_distribution<double> tax(0.0, 0.1);
    for (int t = 0; t < 500; ++t) {
        env.leader_apply(ActionValue::continuous({tax(rng)}));
        std::vector<ActionValue> acts;
        for (std::size_t k = 0; k < p.n_traders; ++k) acts.push_back(ActionValue::discrete(coin(rng)));
        auto r = env.follower_step(acts);
        for (std::size_t i = 0; i < p.n_traders; ++i)
            for (std::size_t j = i + 1; j < p.n_traders; ++j)
                if (obs[i] == obs[j] && acts[i].index() == acts[j].index())
                    CHECK(r.follower_rewards[i] == r.follower_rewards[j]);
        obs = r.observations;
    }
}

// ================================================================== market maker

TEST_CASE("mm price process") {
    CHECK(mm::price_step(100, 100, 0.01, 0.0) == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(std::abs(mm::price_step(200, 100, 0.01, 0.0) - 199.0) < 1e-9);
    CHECK(mm::price_step(1.0, 100, 0.01, -500.0) == 0.0);
    Rng rng = make_rng(1);
    std::normal_distribution<double> shock(0.0, 20.0);
    double p = 100.0;
    for (int t = 0; t < 1000000; ++t) {
        p = mm::price_step(p, 100, 0.01, shock(rng));
        if (p < 0.0) {
            FAIL("negative price");
            break;
        }
    }
}

TEST_CASE("mm quotes, decisions and pnl") {
    auto q = mm::quote_prices(100, 0.0);
    CHECK(q.bid == 100.0);
    CHECK(q.ask == 100.0);
    q = mm::quote_prices(100, 1.5);
    CHECK(q.bid == 98.5);
    CHECK(q.ask == 101.5);
    CHECK(q.spread() == 3.0);
    CHECK_THROWS_AS(mm::quote_prices(100, -1.0), ParameterError);

    CHECK(mm::lt_decide(mm::Side::Buyer, 101.5, 98.5, 101.5) == mm::Decision::NoAct);
    CHECK(mm::lt_decide(mm::Side::Buyer, 102.5, 98.5, 101.5) == mm::Decision::Trade);
    CHECK(mm::lt_decide(mm::Side::Seller, 98.0, 98.5, 101.5) == mm::Decision::Trade);
    CHECK(mm::lt_decide(mm::Side::Seller, 98.5, 98.5, 101.5) == mm::Decision::NoAct);

    CHECK(mm::pnl(0, 0, 100, 99, 101) == 0.0);
    CHECK(std::abs(mm::pnl(2, 1, 100, 99, 101) - 3.0) < 1e-12);
    for (double hs : {0.5, 1.0, 2.5})
        CHECK(std::abs(mm::pnl(3, 3, 100, 100 - hs, 100 + hs) - 6 * hs) < 1e-12);

    CHECK(mm::mm_reward(1.0, 3.0, 7.0, 20.0) == doctest::Approx(3.0 / 20));
    CHECK(mm::mm_reward(0.0, 3.0, 7.0, 20.0) == doctest::Approx(7.0 / 20));
    CHECK(std::abs(mm::mm_reward(0.5, 3.0, 3.0, 20.0) - 0.15) < 1e-12);
}

TEST_CASE("mm decisions are pure") {
    Rng rng = make_rng(3);
    std::normal_distribution<double> v(100, 5);
    for (int i = 0; i < 1000; ++i) {
        const double x = v(rng);
        const auto side = i % 2 ? mm::Side::Buyer : mm::Side::Seller;
        CHECK(mm::lt_decide(side, x, 99, 101) == mm::lt_decide(side, x, 99, 101));
    }
}

TEST_CASE("mm environment") {
    mm::Params p;
    mm::Environment env(p);
    Characteristics th = env.default_characteristics();
    th.assign(std::vector<double>{0.75});
    auto obs = env.reset(th, 2);
    REQUIRE(obs.size() == 1);
    CHECK(obs[0].size() == 2);
    CHECK(obs[0][0] == 1.0);
    CHECK(obs[0][1] == 0.75);
    Rng rng = make_rng(4);
    std::uniform_real_distribution<double> hs(0.0, 10.0);
    for (int t = 0; t < 100; ++t) {
        auto r = env.follower_step(std::vector<ActionValue>{ActionValue::continuous({hs(rng)})});
        CHECK(r.observations[0][1] == 0.75);
        double trades = 0.0;
        for (const auto& [k, v] : env.step_metrics())
            if (k == "trades") trades = v;
        CHECK(trades <= static_cast<double>(p.n_lts));
    }

    // No valuation spread and a positive half-spread at the fixed point: nobody trades.
    mm::Params flat = p;
    flat.valuation_std = 0.0;
    flat.sigma_shock = 0.0;
    mm::Environment e2(flat);
    e2.reset(e2.default_characteristics(), 1);
    for (int t = 0; t < 20; ++t) {
        auto r = e2.follower_step(std::vector<ActionValue>{ActionValue::continuous({0.5})});
        CHECK(r.follower_rewards[0] == 0.0);
    }
}

// ================================================================== metrics

TEST_CASE("gini examples and properties") {
    const std::vector<double> eq(5, 3.0), two{0.0, 1.0}, one{0, 0, 0, 1}, zero(3, 0.0);
    CHECK(gini(eq) == 0.0);
    CHECK(std::abs(gini(two) - 0.5) < 1e-12);
    CHECK(std::abs(gini(one) - 0.75) < 1e-12);
    CHECK(gini(zero) == 0.0);
    const std::vector<double> neg{1.0, -1.0};
    CHECK_THROWS_AS(gini(neg), ParameterError);

    Rng rng = make_rng(5);
    std::exponential_distribution<double> e(1.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> x(1 + (t * 37) % 1000);
        for (double& v : x) v = e(rng);
        const double g = gini(x);
        const double n = static_cast<double>(x.size());
        CHECK(g >= 0.0);
        CHECK(g <= (n - 1) / n + 1e-12);
        CHECK(std::abs(g - gini_sorted(x)) < 1e-12);
        auto scaled = x;
        for (double& v : scaled) v *= 3.7;
        CHECK(std::abs(gini(scaled) - g) < 1e-12);
        auto perm = x;
        std::shuffle(perm.begin(), perm.end(), rng);
        CHECK(std::abs(gini(perm) - g) < 1e-12);
    }
}

TEST_CASE("rollout summaries") {
    const std::vector<std::vector<double>> single{{1, 2, 3}};
    auto s = summarize_rollouts(single);
    CHECK(s.mean == single[0]);
    CHECK(s.min == single[0]);
    CHECK(s.max == single[0]);
    const std::vector<std::vector<double>> two{{1, 1, 1}, {3, 3, 3}};
    s = summarize_rollouts(two);
    CHECK(s.mean == std::vector<double>{2, 2, 2});
    CHECK(s.min == std::vector<double>{1, 1, 1});
    CHECK(s.max == std::vector<double>{3, 3, 3});
    const std::vector<std::vector<double>> ragged{{1, 2, 3}, {4, 5}};
    s = summarize_rollouts(ragged);
    CHECK(s.truncated);
    CHECK(s.mean.size() == 2);

    Rng rng = make_rng(6);
    std::normal_distribution<double> n(0, 1);
    std::vector<std::vector<double>> many(7, std::vector<double>(20));
    for (auto& r : many)
        for (double& v : r) v = n(rng);
    s = summarize_rollouts(many);
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(s.min[i] <= s.mean[i]);
        CHECK(s.mean[i] <= s.max[i]);
    }
}

TEST_CASE("welfare curve") {
    std::vector<std::vector<std::vector<double>>> zeros(4, std::vector<std::vector<double>>(3, std::vector<double>(5, 0.0)));
    auto z = welfare_curve(zeros, 0.9);
    CHECK(z.size() == 4);
    for (double v : z.values()) CHECK(v == 0.0);

    std::vector<std::vector<std::vector<double>>> one{{{1, 2, 3}}, {{0.5, 0.5}}};
    auto c = welfare_curve(one, 0.5);
    CHECK(c.values()[0] == doctest::Approx(discounted_return(std::vector<double>{1, 2, 3}, 0.5)).epsilon(1e-15));
    CHECK(c.values()[1] == doctest::Approx(0.75).epsilon(1e-15));
    for (double v : c.values()) CHECK(std::isfinite(v));
}

TEST_CASE("metric series invariants") {
    MetricSeries s("x");
    s.add(0, 1.0);
    s.add(3, 2.0);
    CHECK_THROWS_AS(s.add(3, 1.0), ParameterError);
    CHECK_THROWS_AS(s.add(5, std::numeric_limits<double>::infinity()), ParameterError);
    CHECK(s.size() == 2);
}

TEST_CASE("welch t test") {
    const std::vector<double> a{5.1, 4.9, 5.3, 5.0, 5.2}, b{4.0, 4.2, 3.9, 4.1, 4.3};
    auto t = welch_t_test(a, b);
    // Oracle: hand-computed statistic.
    const double va = 0.025, vb = 0.025;
    const double expect_t = (5.1 - 4.1) / std::sqrt(va / 5 + vb / 5);
    CHECK(std::abs(t.t - expect_t) < 1e-9);
    CHECK(std::abs(t.df - 8.0) < 1e-9);
    CHECK(t.p_greater < 1e-4);
    auto rev = welch_t_test(b, a);
    CHECK(rev.p_greater > 0.999);
}
