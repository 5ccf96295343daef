#include "bilevel/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "bilevel/errors.hpp"

namespace bilevel {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;

std::vector<double> softmax_col(const nn::Matrix& logits, Eigen::Index col) {
    const Eigen::Index k = logits.rows();
    double mx = logits.col(col).maxCoeff();
    std::vector<double> p(static_cast<std::size_t>(k));
    double z = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) z += (p[static_cast<std::size_t>(i)] = std::exp(logits(i, col) - mx));
    for (double& x : p) x /= z;
    return p;
}

double log_softmax_at(const nn::Matrix& logits, Eigen::Index col, Eigen::Index a) {
    double mx = logits.col(col).maxCoeff();
    double z = (logits.col(col).array() - mx).exp().sum();
    return logits(a, col) - mx - std::log(z);
}

}  // namespace

nn::Matrix stack_columns(std::span<const Observation> obs, std::size_t dim) {
    nn::Matrix m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(obs.size()));
    for (std::size_t c = 0; c < obs.size(); ++c) {
        if (obs[c].size() != dim)
            throw ConfigError("observation has " + std::to_string(obs[c].size()) + " slots, expected " +
                              std::to_string(dim));
        for (std::size_t r = 0; r < dim; ++r) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = obs[c][r];
    }
    return m;
}

// ---------------------------------------------------------------- DistBatch

std::vector<double> DistBatch::probabilities(Eigen::Index col) const {
    if (kind != HeadKind::Categorical) throw ParameterError("probabilities() needs a categorical head");
    return softmax_col(params, col);
}

double DistBatch::log_prob(Eigen::Index col, std::span<const double> raw) const {
    if (kind == HeadKind::Categorical) return log_softmax_at(params, col, static_cast<Eigen::Index>(raw[0]));
    double lp = 0.0;
    for (Eigen::Index d = 0; d < params.rows(); ++d) {
        double s = std::exp(log_std[d]);
        double z = (raw[static_cast<std::size_t>(d)] - params(d, col)) / s;
        lp += -0.5 * z * z - log_std[d] - kHalfLog2Pi;
    }
    return lp;
}

double DistBatch::entropy(Eigen::Index col) const {
    if (kind == HeadKind::Categorical) {
        auto p = probabilities(col);
        double h = 0.0;
        for (double x : p)
            if (x > 0.0) h -= x * std::log(x);
        return h;
    }
    return (log_std.array() + 0.5 + kHalfLog2Pi).sum();
}

double DistBatch::kl(Eigen::Index col, const DistBatch& other, Eigen::Index other_col) const {
    if (kind == HeadKind::Categorical) {
        double mx_p = params.col(col).maxCoeff();
        double lz_p = std::log((params.col(col).array() - mx_p).exp().sum()) + mx_p;
        double mx_q = other.params.col(other_col).maxCoeff();
        double lz_q = std::log((other.params.col(other_col).array() - mx_q).exp().sum()) + mx_q;
        double kl = 0.0;
        for (Eigen::Index i = 0; i < params.rows(); ++i) {
            double lp = params(i, col) - lz_p;
            double lq = other.params(i, other_col) - lz_q;
            kl += std::exp(lp) * (lp - lq);
        }
        return std::max(kl, 0.0);
    }
    double kl = 0.0;
    for (Eigen::Index d = 0; d < params.rows(); ++d) {
        double vp = std::exp(2.0 * log_std[d]);
        double vq = std::exp(2.0 * other.log_std[d]);
        double dm = params(d, col) - other.params(d, other_col);
        kl += other.log_std[d] - log_std[d] + (vp + dm * dm) / (2.0 * vq) - 0.5;
    }
    return std::max(kl, 0.0);
}

double DistBatch::kl_to_uniform(Eigen::Index col) const {
    if (kind != HeadKind::Categorical) return 0.0;
    auto p = probabilities(col);
    double s = std::log(static_cast<double>(p.size()));
    for (double x : p)
        if (x > 0.0) s += x * std::log(x);
    return std::max(s, 0.0);
}

// ------------------------------------------------------------------- Policy

Policy::Policy(std::size_t obs_dim, ActionSpace space, const std::vector<int>& hidden, std::vector<double> input_scale,
               Rng& rng, double initial_log_std)
    : obs_dim_(obs_dim), space_(std::move(space)), input_scale_(std::move(input_scale)) {
    head_ = space_.kind == ActionSpace::Kind::Discrete ? HeadKind::Categorical : HeadKind::DiagonalGaussian;
    if (input_scale_.empty()) input_scale_.assign(obs_dim_, 1.0);
    if (input_scale_.size() != obs_dim_) throw ConfigError("policy: input scale size differs from observation size");
    for (double s : input_scale_)
        if (!(s > 0.0)) throw ConfigError("policy: input scales must be positive");
    const int out = head_ == HeadKind::Categorical ? static_cast<int>(space_.arity) : static_cast<int>(space_.bounds.size());
    if (out <= 0) throw ConfigError("policy: empty action space");
    std::vector<int> sizes{static_cast<int>(obs_dim_)};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    net_ = nn::Mlp(sizes, rng, 0.01);
    if (head_ == HeadKind::DiagonalGaussian) {
        log_std_ = nn::Vector::Constant(out, initial_log_std);
        clamp_log_std();
    }
}

std::size_t Policy::num_parameters() const noexcept {
    return net_.num_params() + static_cast<std::size_t>(log_std_.size());
}

nn::Vector Policy::parameters() const {
    nn::Vector p(static_cast<Eigen::Index>(num_parameters()));
    p.head(net_.params().size()) = net_.params();
    if (log_std_.size() > 0) p.tail(log_std_.size()) = log_std_;
    return p;
}

void Policy::set_parameters(const nn::Vector& p) {
    if (static_cast<std::size_t>(p.size()) != num_parameters()) throw ParameterError("policy: parameter size mismatch");
    net_.params() = p.head(net_.params().size());
    if (log_std_.size() > 0) {
        log_std_ = p.tail(log_std_.size());
        clamp_log_std();
    }
}

void Policy::clamp_log_std() {
    for (Eigen::Index i = 0; i < log_std_.size(); ++i) log_std_[i] = std::clamp(log_std_[i], kMinLogStd, kMaxLogStd);
}

nn::Matrix Policy::scale_inputs(const nn::Matrix& obs) const {
    if (static_cast<std::size_t>(obs.rows()) != obs_dim_)
        throw ConfigError("policy expects " + std::to_string(obs_dim_) + " observation slots, got " +
                          std::to_string(obs.rows()));
    nn::Matrix x = obs;
    for (std::size_t r = 0; r < obs_dim_; ++r) x.row(static_cast<Eigen::Index>(r)) /= input_scale_[r];
    return x;
}

DistBatch Policy::distribution(const nn::Matrix& obs) const {
    return DistBatch{head_, net_.forward(scale_inputs(obs)), log_std_};
}

DistBatch Policy::distribution(const nn::Matrix& obs, nn::Mlp::Cache& cache) const {
    return DistBatch{head_, net_.forward(scale_inputs(obs), cache), log_std_};
}

void Policy::backward(const nn::Mlp::Cache& cache, const nn::Matrix& grad_params, const nn::Vector& grad_log_std,
                      nn::Vector& grad) const {
    net_.backward(cache, grad_params, grad.head(net_.params().size()));
    if (log_std_.size() > 0) grad.tail(log_std_.size()) += grad_log_std;
}

ActionValue Policy::to_action(std::span<const double> raw) const {
    if (head_ == HeadKind::Categorical) return ActionValue::discrete(static_cast<std::size_t>(raw[0]));
    std::vector<double> v(space_.bounds.size());
    for (std::size_t d = 0; d < v.size(); ++d) {
        const Bound& b = space_.bounds[d];
        double u = (std::clamp(raw[d], -1.0, 1.0) + 1.0) * 0.5;
        v[d] = b.clamp(b.lo + u * b.width());
    }
    return ActionValue::continuous(std::move(v));
}

ActionSample Policy::sample(const DistBatch& dist, Eigen::Index col, Rng& rng) const {
    ActionSample s;
    if (head_ == HeadKind::Categorical) {
        auto p = dist.probabilities(col);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double r = u(rng), acc = 0.0;
        std::size_t a = p.size() - 1;
        for (std::size_t i = 0; i < p.size(); ++i) {
            acc += p[i];
            if (r < acc) {
                a = i;
                break;
            }
        }
        s.raw = {static_cast<double>(a)};
        s.info_cost = dist.kl_to_uniform(col);
    } else {
        std::normal_distribution<double> n01(0.0, 1.0);
        s.raw.resize(static_cast<std::size_t>(dist.params.rows()));
        for (Eigen::Index d = 0; d < dist.params.rows(); ++d)
            s.raw[static_cast<std::size_t>(d)] = dist.params(d, col) + std::exp(dist.log_std[d]) * n01(rng);
    }
    s.log_prob = dist.log_prob(col, s.raw);
    s.action = to_action(s.raw);
    return s;
}

ActionSample Policy::mode(const DistBatch& dist, Eigen::Index col) const {
    ActionSample s;
    if (head_ == HeadKind::Categorical) {
        Eigen::Index a = 0;
        dist.params.col(col).maxCoeff(&a);
        s.raw = {static_cast<double>(a)};
        s.info_cost = dist.kl_to_uniform(col);
    } else {
        s.raw.assign(dist.params.col(col).data(), dist.params.col(col).data() + dist.params.rows());
    }
    s.log_prob = dist.log_prob(col, s.raw);
    s.action = to_action(s.raw);
    return s;
}

// ------------------------------------------------------------ ValueFunction

ValueFunction::ValueFunction(std::size_t obs_dim, const std::vector<int>& hidden, std::vector<double> input_scale,
                             Rng& rng)
    : input_scale_(std::move(input_scale)) {
    if (input_scale_.empty()) input_scale_.assign(obs_dim, 1.0);
    std::vector<int> sizes{static_cast<int>(obs_dim)};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    net_ = nn::Mlp(sizes, rng, 1.0);
    adam_ = nn::Adam(net_.num_params(), 1e-3);
}

nn::Vector ValueFunction::predict(const nn::Matrix& obs) const {
    nn::Matrix x = obs;
    for (std::size_t r = 0; r < input_scale_.size(); ++r) x.row(static_cast<Eigen::Index>(r)) /= input_scale_[r];
    nn::Vector y = net_.forward(x).row(0).transpose();
    return (y.array() * std_ + mean_).matrix();
}

void ValueFunction::update_normalization(const nn::Vector& returns) {
    const double n = static_cast<double>(returns.size());
    if (n < 1) return;
    double m = returns.mean();
    double sd = n > 1 ? std::sqrt((returns.array() - m).square().sum() / n) : 0.0;
    sd = std::max(sd, 1e-6);
    double new_mean, new_std;
    if (!initialized_) {
        new_mean = m;
        new_std = std::max(sd, 1e-3 * std::max(1.0, std::abs(m)));
        initialized_ = true;
    } else {
        constexpr double beta = 0.3;
        new_mean = (1.0 - beta) * mean_ + beta * m;
        new_std = std::max((1.0 - beta) * std_ + beta * sd, 1e-6);
    }
    // Preserve outputs: std*y + mean == new_std*y' + new_mean.
    net_.affine_output(std_ / new_std, (mean_ - new_mean) / new_std);
    mean_ = new_mean;
    std_ = new_std;
}

double ValueFunction::fit(const nn::Matrix& obs, const nn::Vector& returns, std::size_t epochs, std::size_t minibatch,
                          Rng& rng) {
    update_normalization(returns);
    nn::Matrix x = obs;
    for (std::size_t r = 0; r < input_scale_.size(); ++r) x.row(static_cast<Eigen::Index>(r)) /= input_scale_[r];
    const nn::Vector target = ((returns.array() - mean_) / std_).matrix();
    const Eigen::Index n = x.cols();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const Eigen::Index mb = std::max<Eigen::Index>(1, std::min<Eigen::Index>(n, static_cast<Eigen::Index>(minibatch)));
    double last_loss = 0.0;
    nn::Mlp::Cache cache;
    nn::Vector grad(static_cast<Eigen::Index>(net_.num_params()));
    for (std::size_t e = 0; e < epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (Eigen::Index start = 0; start < n; start += mb) {
            const Eigen::Index len = std::min(mb, n - start);
            nn::Matrix xb(x.rows(), len);
            nn::Vector tb(len);
            for (Eigen::Index j = 0; j < len; ++j) {
                xb.col(j) = x.col(order[static_cast<std::size_t>(start + j)]);
                tb[j] = target[order[static_cast<std::size_t>(start + j)]];
            }
            nn::Matrix pred = net_.forward(xb, cache);
            nn::Matrix diff = pred.row(0) - tb.transpose();
            loss_sum += diff.squaredNorm();
            grad.setZero();
            net_.backward(cache, diff / static_cast<double>(len), grad);
            adam_.step(net_.params(), grad);
        }
        last_loss = loss_sum / static_cast<double>(n);
    }
    return last_loss;
}

}  // namespace bilevel
