#include "bilevel/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bilevel/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bilevel {

void PpoConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("ppo: learning_rate must be positive");
    if (!(kl_coeff >= 0.0)) throw ConfigError("ppo: kl_coeff must be non-negative");
    if (!(kl_target > 0.0)) throw ConfigError("ppo: kl_target must be positive");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("ppo: gamma must lie in [0, 1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("ppo: gae_lambda must lie in [0, 1]");
    if (!(clip_ratio > 0.0)) throw ConfigError("ppo: clip_ratio must be positive");
    if (epochs_per_update == 0 || minibatch_size == 0) throw ConfigError("ppo: epochs and minibatch size must be >= 1");
    if (!(value_learning_rate > 0.0)) throw ConfigError("ppo: value_learning_rate must be positive");
    for (int h : hidden)
        if (h <= 0) throw ConfigError("ppo: layer sizes must be positive");
}

std::vector<double> gae_advantages(std::span<const double> rewards, std::span<const double> values, double gamma,
                                   double lambda) {
    if (values.size() != rewards.size() + 1)
        throw ParameterError("gae: values must have exactly one more entry than rewards");
    if (!(gamma >= 0.0 && gamma <= 1.0) || !(lambda >= 0.0 && lambda <= 1.0))
        throw ParameterError("gae: gamma and lambda must lie in [0, 1]");
    std::vector<double> adv(rewards.size());
    double acc = 0.0;
    for (std::size_t t = rewards.size(); t-- > 0;) {
        const double delta = rewards[t] + gamma * values[t + 1] - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    return adv;
}

PpoBatch make_ppo_batch(const Policy& policy, std::span<const Trajectory* const> trajectories, const PpoConfig& cfg) {
    std::size_t n = 0;
    for (const auto* tr : trajectories) n += tr->size();
    const auto dim = static_cast<Eigen::Index>(policy.obs_dim());
    const auto adim = static_cast<Eigen::Index>(policy.action_space().dim());
    PpoBatch b;
    b.obs.resize(dim, static_cast<Eigen::Index>(n));
    b.raw_action.resize(adim, static_cast<Eigen::Index>(n));
    b.old_log_prob.resize(static_cast<Eigen::Index>(n));
    b.advantage.resize(static_cast<Eigen::Index>(n));
    b.returns.resize(static_cast<Eigen::Index>(n));
    b.info_weight.resize(static_cast<Eigen::Index>(n));

    Eigen::Index col = 0;
    for (const auto* tr : trajectories) {
        const std::size_t len = tr->size();
        std::vector<double> rewards(len), values(len + 1);
        for (std::size_t t = 0; t < len; ++t) {
            rewards[t] = tr->steps[t].reward;
            values[t] = tr->steps[t].value_estimate;
        }
        values[len] = tr->bootstrap_value;
        const auto adv = gae_advantages(rewards, values, cfg.gamma, cfg.gae_lambda);
        for (std::size_t t = 0; t < len; ++t, ++col) {
            const auto& st = tr->steps[t];
            if (st.observation.size() != static_cast<std::size_t>(dim))
                throw ConfigError("ppo batch: observation size mismatch");
            for (Eigen::Index r = 0; r < dim; ++r) b.obs(r, col) = st.observation[static_cast<std::size_t>(r)];
            if (st.raw_action.size() != static_cast<std::size_t>(adim))
                throw ConfigError("ppo batch: action size mismatch");
            for (Eigen::Index r = 0; r < adim; ++r) b.raw_action(r, col) = st.raw_action[static_cast<std::size_t>(r)];
            b.old_log_prob[col] = st.log_prob;
            b.advantage[col] = adv[t];
            b.returns[col] = adv[t] + values[t];
            b.info_weight[col] = st.info_cost_weight;
        }
    }
    if (cfg.normalize_advantages && n > 1) {
        const double mean = b.advantage.mean();
        const double sd = std::sqrt((b.advantage.array() - mean).square().sum() / static_cast<double>(n));
        const double scale = sd > 1e-8 ? sd : 1.0;
        b.advantage = ((b.advantage.array() - mean) / scale).matrix();
        b.info_weight /= scale;
    }
    b.old_dist = policy.distribution(b.obs);
    return b;
}

namespace {

struct SampleTerms {
    double loss = 0.0;
    double kl = 0.0;
    bool clipped = false;
};

// Loss of one sample and its gradient with respect to the distribution
// parameters (column `gp`) and the shared log-std (accumulated into glog).
SampleTerms head_terms(const DistBatch& nd, Eigen::Index col, const DistBatch& od, Eigen::Index ocol,
                       const double* raw, double adv, double old_lp, double w, double beta, const PpoConfig& cfg,
                       double* gp, nn::Vector* glog, double scale) {
    SampleTerms out;
    const Eigen::Index k = nd.params.rows();
    const double eps = cfg.clip_ratio;
    if (nd.kind == HeadKind::Categorical) {
        const double mx = nd.params.col(col).maxCoeff();
        std::vector<double> p(static_cast<std::size_t>(k)), lp(static_cast<std::size_t>(k));
        double z = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) z += std::exp(nd.params(i, col) - mx);
        const double lz = std::log(z) + mx;
        double plogp = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) {
            lp[static_cast<std::size_t>(i)] = nd.params(i, col) - lz;
            p[static_cast<std::size_t>(i)] = std::exp(lp[static_cast<std::size_t>(i)]);
            plogp += p[static_cast<std::size_t>(i)] * lp[static_cast<std::size_t>(i)];
        }
        const double omx = od.params.col(ocol).maxCoeff();
        double oz = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) oz += std::exp(od.params(i, ocol) - omx);
        const double olz = std::log(oz) + omx;

        const auto a = static_cast<std::size_t>(raw[0]);
        const double ratio = std::exp(lp[a] - old_lp);
        const double clipped_ratio = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
        const double surr = std::min(ratio * adv, clipped_ratio * adv);
        const bool active = adv >= 0.0 ? ratio <= 1.0 + eps : ratio >= 1.0 - eps;
        out.clipped = std::abs(ratio - 1.0) > eps;

        double kl = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) {
            const double lq = od.params(i, ocol) - olz;
            kl += std::exp(lq) * (lq - lp[static_cast<std::size_t>(i)]);
        }
        out.kl = std::max(kl, 0.0);
        const double kl_u = std::log(static_cast<double>(k)) + plogp;
        const double ent = -plogp;
        out.loss = -surr + beta * kl + w * kl_u - cfg.entropy_coeff * ent;

        if (gp != nullptr) {
            for (Eigen::Index i = 0; i < k; ++i) {
                const auto ii = static_cast<std::size_t>(i);
                const double onehot = ii == a ? 1.0 : 0.0;
                const double q = std::exp(od.params(i, ocol) - olz);
                double g = 0.0;
                if (active) g -= ratio * adv * (onehot - p[ii]);
                g += beta * (p[ii] - q);
                g += (w + cfg.entropy_coeff) * p[ii] * (lp[ii] - plogp);
                gp[i] += scale * g;
            }
        }
        return out;
    }

    // Diagonal Gaussian.
    double lp_new = 0.0;
    for (Eigen::Index d = 0; d < k; ++d) {
        const double s = nd.log_std[d];
        const double zz = (raw[d] - nd.params(d, col)) * std::exp(-s);
        lp_new += -0.5 * zz * zz - s - 0.9189385332046727;
    }
    const double ratio = std::exp(lp_new - old_lp);
    const double clipped_ratio = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
    const double surr = std::min(ratio * adv, clipped_ratio * adv);
    const bool active = adv >= 0.0 ? ratio <= 1.0 + eps : ratio >= 1.0 - eps;
    out.clipped = std::abs(ratio - 1.0) > eps;
    double kl = 0.0, ent = 0.0;
    for (Eigen::Index d = 0; d < k; ++d) {
        const double vn = std::exp(2.0 * nd.log_std[d]);
        const double vo = std::exp(2.0 * od.log_std[d]);
        const double dm = od.params(d, ocol) - nd.params(d, col);
        kl += nd.log_std[d] - od.log_std[d] + (vo + dm * dm) / (2.0 * vn) - 0.5;
        ent += nd.log_std[d] + 0.5 + 0.9189385332046727;
    }
    out.kl = std::max(kl, 0.0);
    out.loss = -surr + beta * kl - cfg.entropy_coeff * ent;
    if (gp != nullptr) {
        for (Eigen::Index d = 0; d < k; ++d) {
            const double vn = std::exp(2.0 * nd.log_std[d]);
            const double vo = std::exp(2.0 * od.log_std[d]);
            const double diff = raw[d] - nd.params(d, col);
            const double dm = od.params(d, ocol) - nd.params(d, col);
            double g_mu = 0.0, g_s = 0.0;
            if (active) {
                g_mu -= ratio * adv * diff / vn;
                g_s -= ratio * adv * (diff * diff / vn - 1.0);
            }
            g_mu += beta * (-dm) / vn;
            g_s += beta * (1.0 - (vo + dm * dm) / vn);
            g_s -= cfg.entropy_coeff;
            gp[d] += scale * g_mu;
            (*glog)[d] += scale * g_s;
        }
    }
    return out;
}

constexpr Eigen::Index kChunk = 64;

}  // namespace

double surrogate_loss(const Policy& policy, const PpoBatch& batch, std::span<const Eigen::Index> idx, double kl_coeff,
                      const PpoConfig& cfg) {
    if (idx.empty()) return 0.0;
    nn::Matrix obs(batch.obs.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) obs.col(static_cast<Eigen::Index>(j)) = batch.obs.col(idx[j]);
    const DistBatch nd = policy.distribution(obs);
    double loss = 0.0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
        const Eigen::Index i = idx[j];
        loss += head_terms(nd, static_cast<Eigen::Index>(j), batch.old_dist, i, batch.raw_action.col(i).data(),
                           batch.advantage[i], batch.old_log_prob[i], batch.info_weight[i], kl_coeff, cfg, nullptr,
                           nullptr, 0.0)
                    .loss;
    }
    return loss / static_cast<double>(idx.size());
}

SurrogateTerms surrogate_gradient(const Policy& policy, const PpoBatch& batch, std::span<const Eigen::Index> idx,
                                  double kl_coeff, const PpoConfig& cfg, nn::Vector& grad, int jobs) {
    const auto np = static_cast<Eigen::Index>(policy.num_parameters());
    grad = nn::Vector::Zero(np);
    if (idx.empty()) return {};
    const auto n = static_cast<Eigen::Index>(idx.size());
    const Eigen::Index chunks = (n + kChunk - 1) / kChunk;
    const double scale = 1.0 / static_cast<double>(n);
    const Eigen::Index adim = batch.raw_action.rows();
    const Eigen::Index nlog = policy.head() == HeadKind::DiagonalGaussian ? adim : 0;

    std::vector<nn::Vector> partial(static_cast<std::size_t>(chunks));
    std::vector<SurrogateTerms> terms(static_cast<std::size_t>(chunks));

#pragma omp parallel for schedule(static) num_threads(std::max(1, jobs)) if (jobs > 1)
    for (Eigen::Index c = 0; c < chunks; ++c) {
        const Eigen::Index begin = c * kChunk;
        const Eigen::Index len = std::min(kChunk, n - begin);
        nn::Matrix obs(batch.obs.rows(), len);
        for (Eigen::Index j = 0; j < len; ++j) obs.col(j) = batch.obs.col(idx[static_cast<std::size_t>(begin + j)]);
        nn::Mlp::Cache cache;
        const DistBatch nd = policy.distribution(obs, cache);
        nn::Matrix gparams = nn::Matrix::Zero(nd.params.rows(), len);
        nn::Vector glog = nn::Vector::Zero(nlog);
        SurrogateTerms t;
        for (Eigen::Index j = 0; j < len; ++j) {
            const Eigen::Index i = idx[static_cast<std::size_t>(begin + j)];
            auto st = head_terms(nd, j, batch.old_dist, i, batch.raw_action.col(i).data(), batch.advantage[i],
                                 batch.old_log_prob[i], batch.info_weight[i], kl_coeff, cfg, gparams.col(j).data(),
                                 &glog, scale);
            t.loss += st.loss;
            t.kl += st.kl;
            t.clip_fraction += st.clipped ? 1.0 : 0.0;
        }
        nn::Vector g = nn::Vector::Zero(np);
        policy.backward(cache, gparams, glog, g);
        partial[static_cast<std::size_t>(c)] = std::move(g);
        terms[static_cast<std::size_t>(c)] = t;
    }

    SurrogateTerms total;
    for (Eigen::Index c = 0; c < chunks; ++c) {
        grad += partial[static_cast<std::size_t>(c)];
        total.loss += terms[static_cast<std::size_t>(c)].loss;
        total.kl += terms[static_cast<std::size_t>(c)].kl;
        total.clip_fraction += terms[static_cast<std::size_t>(c)].clip_fraction;
    }
    total.loss *= scale;
    total.kl *= scale;
    total.clip_fraction *= scale;
    return total;
}

SurrogateTerms surrogate_gradient_serial(const Policy& policy, const PpoBatch& batch, std::span<const Eigen::Index> idx,
                                         double kl_coeff, const PpoConfig& cfg, nn::Vector& grad) {
    const auto np = static_cast<Eigen::Index>(policy.num_parameters());
    grad = nn::Vector::Zero(np);
    SurrogateTerms total;
    if (idx.empty()) return total;
    const double scale = 1.0 / static_cast<double>(idx.size());
    const Eigen::Index nlog = policy.head() == HeadKind::DiagonalGaussian ? batch.raw_action.rows() : 0;
    for (const Eigen::Index i : idx) {
        nn::Matrix obs = batch.obs.col(i);
        nn::Mlp::Cache cache;
        const DistBatch nd = policy.distribution(obs, cache);
        nn::Matrix gparams = nn::Matrix::Zero(nd.params.rows(), 1);
        nn::Vector glog = nn::Vector::Zero(nlog);
        auto st = head_terms(nd, 0, batch.old_dist, i, batch.raw_action.col(i).data(), batch.advantage[i],
                             batch.old_log_prob[i], batch.info_weight[i], kl_coeff, cfg, gparams.data(), &glog, scale);
        policy.backward(cache, gparams, glog, grad);
        total.loss += st.loss * scale;
        total.kl += st.kl * scale;
        total.clip_fraction += (st.clipped ? 1.0 : 0.0) * scale;
    }
    return total;
}

double mean_kl(const Policy& policy, const PpoBatch& batch) {
    if (batch.size() == 0) return 0.0;
    const DistBatch nd = policy.distribution(batch.obs);
    double kl = 0.0;
    for (Eigen::Index i = 0; i < batch.size(); ++i) kl += batch.old_dist.kl(i, nd, i);
    return kl / static_cast<double>(batch.size());
}

UpdateStats ppo_update(Policy& policy, ValueFunction* value_fn, std::span<const Trajectory* const> trajectories,
                       const PpoConfig& cfg, PpoState& state) {
    UpdateStats stats;
    PpoBatch batch = make_ppo_batch(policy, trajectories, cfg);
    const Eigen::Index n = batch.size();
    if (n == 0) return stats;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const auto mb = static_cast<std::size_t>(std::min<Eigen::Index>(n, static_cast<Eigen::Index>(cfg.minibatch_size)));
    const double limit = 4.0 * cfg.kl_target;
    nn::Vector grad;

    for (std::size_t epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
        const nn::Vector epoch_start = policy.parameters();
        std::shuffle(order.begin(), order.end(), state.rng);
        double clip_sum = 0.0, loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += mb) {
            const std::size_t len = std::min(mb, order.size() - start);
            std::span<const Eigen::Index> idx(order.data() + start, len);
            auto terms = surrogate_gradient(policy, batch, idx, state.kl_coeff, cfg, grad, cfg.jobs);
            if (!std::isfinite(terms.loss) || !grad.allFinite())
                throw NonFiniteError("policy", -1, "PPO surrogate loss or gradient");
            nn::Vector p = policy.parameters();
            state.adam.step(p, grad);
            policy.set_parameters(p);
            clip_sum += terms.clip_fraction;
            loss_sum += terms.loss;
            ++steps;
        }
        stats.epochs = epoch + 1;
        stats.clip_fraction = clip_sum / static_cast<double>(steps);
        stats.policy_loss = loss_sum / static_cast<double>(steps);
        if (!cfg.adapt_kl) continue;
        double kl = mean_kl(policy, batch);
        if (kl > limit) {
            // Backtrack along the epoch's step until the trust bound holds.
            const nn::Vector end = policy.parameters();
            double frac = 0.5;
            for (int k = 0; k < 30 && kl > limit; ++k, frac *= 0.5) {
                policy.set_parameters(epoch_start + frac * (end - epoch_start));
                kl = mean_kl(policy, batch);
            }
            if (kl > limit) policy.set_parameters(epoch_start);
            break;
        }
        if (kl > 2.0 * cfg.kl_target) break;
    }

    stats.mean_kl = mean_kl(policy, batch);
    if (!std::isfinite(stats.mean_kl)) throw NonFiniteError("policy", -1, "PPO KL divergence");
    if (cfg.adapt_kl) {
        if (stats.mean_kl > 2.0 * cfg.kl_target)
            state.kl_coeff *= 2.0;
        else if (stats.mean_kl < 0.5 * cfg.kl_target)
            state.kl_coeff *= 0.5;
        state.kl_coeff = std::clamp(state.kl_coeff, 1e-6, 1e6);
    }

    if (value_fn != nullptr && cfg.train_value) {
        stats.value_loss = value_fn->fit(batch.obs, batch.returns, cfg.value_epochs, cfg.minibatch_size, state.rng);
        if (!std::isfinite(stats.value_loss)) throw NonFiniteError("value", -1, "value-function loss");
    }
    return stats;
}

// --------------------------------------------------------------- PpoLearner

PpoLearner::PpoLearner(std::string name, std::size_t obs_dim, const ActionSpace& space, std::vector<double> input_scale,
                       PpoConfig cfg, std::uint64_t seed)
    : name_(std::move(name)), cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng init = make_rng(split_seed(seed, 0));
    policy_ = Policy(obs_dim, space, cfg_.hidden, input_scale, init);
    value_ = ValueFunction(obs_dim, cfg_.hidden, input_scale, init);
    value_.set_learning_rate(cfg_.value_learning_rate);
    state_.adam = nn::Adam(policy_.num_parameters(), cfg_.learning_rate);
    state_.kl_coeff = cfg_.kl_coeff;
    state_.rng = make_rng(split_seed(seed, 1));
}

UpdateStats PpoLearner::update(std::span<const Trajectory* const> batch) {
    UpdateStats s;
    try {
        s = ppo_update(policy_, &value_, batch, cfg_, state_);
    } catch (const NonFiniteError& e) {
        throw NonFiniteError(name_, e.iteration(), e.what());
    }
    count_update();
    return s;
}

std::vector<ActionSample> PpoLearner::PolicyActor::act(const nn::Matrix& obs, std::span<Rng* const> rngs) const {
    const DistBatch dist = owner_.policy_.distribution(obs);
    const nn::Vector v = owner_.value_.predict(obs);
    std::vector<ActionSample> out;
    out.reserve(static_cast<std::size_t>(obs.cols()));
    for (Eigen::Index c = 0; c < obs.cols(); ++c) {
        ActionSample s = greedy_ ? owner_.policy_.mode(dist, c)
                                 : owner_.policy_.sample(dist, c, *rngs[static_cast<std::size_t>(c)]);
        s.value = v[c];
        out.push_back(std::move(s));
    }
    return out;
}

nn::Vector PpoLearner::PolicyActor::values(const nn::Matrix& obs) const { return owner_.value_.predict(obs); }

}  // namespace bilevel
