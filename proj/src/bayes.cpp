#include "bilevel/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include <Eigen/Cholesky>

#include "bilevel/errors.hpp"

namespace bilevel {

void SurrogateState::add(std::vector<double> x, double y) {
    if (!std::isfinite(y)) throw ParameterError("surrogate: non-finite return");
    if (!xs_.empty() && x.size() != xs_.front().size()) throw ParameterError("surrogate: candidate dimension changed");
    xs_.push_back(std::move(x));
    ys_.push_back(y);
}

std::size_t SurrogateState::best_index() const {
    if (ys_.empty()) throw ParameterError("surrogate: no observations");
    return static_cast<std::size_t>(std::max_element(ys_.begin(), ys_.end()) - ys_.begin());
}

double GaussianProcess::kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    return std::exp(-0.5 * (a - b).squaredNorm() / (ell_ * ell_));
}

void GaussianProcess::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    const Eigen::Index n = x.cols();
    if (n == 0) throw ParameterError("gp: no data");
    x_ = x;
    y_mean_ = y.mean();
    const double var = n > 1 ? (y.array() - y_mean_).square().sum() / static_cast<double>(n) : 0.0;
    y_std_ = var > 1e-24 ? std::sqrt(var) : 1.0;
    const Eigen::VectorXd ys = ((y.array() - y_mean_) / y_std_).matrix();

    static constexpr double kScales[] = {0.05, 0.1, 0.2, 0.3, 0.5, 1.0, 2.0};
    static constexpr double kNoise[] = {1e-6, 1e-4, 1e-2, 1e-1};
    double best = -std::numeric_limits<double>::infinity();
    double best_ell = 0.2, best_noise = 1e-2;
    for (double ell : kScales)
        for (double nz : kNoise) {
            ell_ = ell;
            Eigen::MatrixXd k(n, n);
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 0; j <= i; ++j) k(i, j) = k(j, i) = kernel(x.col(i), x.col(j));
            k.diagonal().array() += nz;
            Eigen::LLT<Eigen::MatrixXd> llt(k);
            if (llt.info() != Eigen::Success) continue;
            const Eigen::VectorXd a = llt.solve(ys);
            const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
            const double lml = -0.5 * ys.dot(a) - 0.5 * logdet;
            if (lml > best) {
                best = lml;
                best_ell = ell;
                best_noise = nz;
            }
        }
    ell_ = best_ell;
    noise_ = best_noise;
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) k(i, j) = k(j, i) = kernel(x.col(i), x.col(j));
    // Escalate jitter until the factorization succeeds.
    for (double jitter = noise_;; jitter *= 10.0) {
        Eigen::MatrixXd kj = k;
        kj.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(kj);
        if (llt.info() == Eigen::Success) {
            noise_ = jitter;
            chol_l_ = llt.matrixL();
            alpha_ = llt.solve(ys);
            return;
        }
        if (jitter > 1.0) throw ParameterError("gp: kernel matrix is not positive definite");
    }
}

std::pair<double, double> GaussianProcess::predict(const Eigen::VectorXd& x) const {
    const Eigen::Index n = x_.cols();
    Eigen::VectorXd ks(n);
    for (Eigen::Index i = 0; i < n; ++i) ks[i] = kernel(x, x_.col(i));
    const double mu = ks.dot(alpha_);
    const Eigen::VectorXd v = chol_l_.triangularView<Eigen::Lower>().solve(ks);
    const double var = std::max(1.0 - v.squaredNorm(), 1e-12);
    return {mu * y_std_ + y_mean_, std::sqrt(var) * y_std_};
}

double expected_improvement(double mu, double sigma, double best, double xi) {
    if (sigma <= 0.0) return std::max(mu - best - xi, 0.0);
    const double imp = mu - best - xi;
    const double z = imp / sigma;
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    return imp * cdf + sigma * pdf;
}

namespace {

double radical_inverse(std::uint64_t i, unsigned base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= base;
        r += f * static_cast<double>(i % base);
        i /= base;
    }
    return r;
}

constexpr unsigned kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

std::vector<double> to_bounds(const Eigen::VectorXd& u, std::span<const Bound> bounds) {
    std::vector<double> x(bounds.size());
    for (std::size_t d = 0; d < bounds.size(); ++d)
        x[d] = bounds[d].clamp(bounds[d].lo + std::clamp(u[static_cast<Eigen::Index>(d)], 0.0, 1.0) * bounds[d].width());
    return x;
}

}  // namespace

std::vector<double> bayes_suggest(const SurrogateState& state, std::span<const Bound> bounds, Rng& rng,
                                  const BayesConfig& cfg) {
    const std::size_t dim = bounds.size();
    for (const auto& b : bounds)
        if (!std::isfinite(b.lo) || !std::isfinite(b.hi) || b.lo > b.hi)
            throw ParameterError("bayes_suggest: bounds must be finite and ordered");
    if (state.size() > 0 && state.xs().front().size() != dim)
        throw ParameterError("bayes_suggest: observations do not match the bounds' dimension");
    if (std::all_of(bounds.begin(), bounds.end(), [](const Bound& b) { return b.lo == b.hi; })) {
        std::clog << "warning: bayes_suggest called with degenerate bounds; returning the single point\n";
        std::vector<double> x;
        for (const auto& b : bounds) x.push_back(b.lo);
        return x;
    }

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    if (state.size() < cfg.n_init) {
        // Halton point rotated by a random shift.
        Eigen::VectorXd u(static_cast<Eigen::Index>(dim));
        for (std::size_t d = 0; d < dim; ++d) {
            const double shift = unif(rng);
            const double h = radical_inverse(state.size() + 1, kPrimes[d % std::size(kPrimes)]);
            u[static_cast<Eigen::Index>(d)] = std::fmod(h + shift, 1.0);
        }
        return to_bounds(u, bounds);
    }

    const auto n = static_cast<Eigen::Index>(state.size());
    Eigen::MatrixXd x(static_cast<Eigen::Index>(dim), n);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < dim; ++d) {
            const Bound& b = bounds[d];
            const double v = state.xs()[static_cast<std::size_t>(i)][d];
            x(static_cast<Eigen::Index>(d), i) = b.width() > 0.0 ? (v - b.lo) / b.width() : 0.0;
        }
        y[i] = state.ys()[static_cast<std::size_t>(i)];
    }
    GaussianProcess gp;
    gp.fit(x, y);
    const double best = y.maxCoeff();
    const double ystd = std::max(1e-12, std::sqrt((y.array() - y.mean()).square().mean()));
    auto score = [&](const Eigen::VectorXd& u) {
        auto [mu, sd] = gp.predict(u);
        return expected_improvement(mu, sd, best, cfg.xi * ystd);
    };

    Eigen::VectorXd best_u = x.col(static_cast<Eigen::Index>(state.best_index()));
    double best_score = score(best_u);
    for (std::size_t r = 0; r < cfg.restarts; ++r) {
        Eigen::VectorXd u(static_cast<Eigen::Index>(dim));
        for (std::size_t d = 0; d < dim; ++d)
            u[static_cast<Eigen::Index>(d)] = bounds[d].width() > 0.0 ? unif(rng) : 0.0;
        double s = score(u);
        // Compass search on the unit cube.
        for (double step = 0.1; step > 1e-4;) {
            bool moved = false;
            for (std::size_t d = 0; d < dim && !moved; ++d) {
                if (bounds[d].width() == 0.0) continue;
                for (double sign : {1.0, -1.0}) {
                    Eigen::VectorXd c = u;
                    c[static_cast<Eigen::Index>(d)] = std::clamp(c[static_cast<Eigen::Index>(d)] + sign * step, 0.0, 1.0);
                    const double cs = score(c);
                    if (cs > s) {
                        u = c;
                        s = cs;
                        moved = true;
                        break;
                    }
                }
            }
            if (!moved) step *= 0.5;
        }
        if (s > best_score) {
            best_score = s;
            best_u = u;
        }
    }
    return to_bounds(best_u, bounds);
}

}  // namespace bilevel
