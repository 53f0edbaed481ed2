#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lagoon/config.hpp"
#include "lagoon/rl_env.hpp"
#include "lagoon/rl_policy.hpp"
#include "lagoon/rng.hpp"

namespace lagoon {

struct PpoConfig {
    double gamma = 0.99;
    double lambda = 0.95;
    double clip_eps = 0.2;
    double entropy_beta = 5e-3;
    /// The entropy term is frozen once policy entropy falls to this level, so
    /// a negative entropy_beta anneals exploration down to a floor instead of
    /// to zero. Unset (-inf) the term is always live.
    double entropy_floor = -std::numeric_limits<double>::infinity();
    double learning_rate = 3e-4;
    double max_grad_norm = 0.5; // global L2 clip per minibatch; 0 disables
    bool lr_decay = true;
    std::size_t horizon = 640;       // rollout steps per env between updates
    std::size_t minibatch = 4096;
    std::size_t epochs = 3;
    std::size_t env_count = 64;
    std::uint64_t max_steps = 80000000; // total MDP steps across envs
    std::uint64_t checkpoint_every = 500000;
    std::uint64_t seed = 0;
    Eigen::Index hidden = 128;

    /// The value-loss coefficient is fixed, not a tunable.
    static constexpr double kC1 = 0.5;

    void validate() const {
        if (!(gamma > 0.0 && gamma <= 1.0))
            throw std::invalid_argument("PpoConfig: gamma must lie in (0,1]");
        if (!(lambda > 0.0 && lambda <= 1.0))
            throw std::invalid_argument("PpoConfig: lambda must lie in (0,1]");
        if (!(clip_eps > 0.0)) throw std::invalid_argument("PpoConfig: clip_eps must be > 0");
        if (!(max_grad_norm >= 0.0))
            throw std::invalid_argument("PpoConfig: max_grad_norm must be >= 0");
        if (env_count < 1) throw std::invalid_argument("PpoConfig: env_count must be >= 1");
        if (horizon < 1) throw std::invalid_argument("PpoConfig: horizon must be >= 1");
        if (minibatch < 1) throw std::invalid_argument("PpoConfig: minibatch must be >= 1");
        if (epochs < 1) throw std::invalid_argument("PpoConfig: epochs must be >= 1");
    }

    static PpoConfig from_config(KeyValueConfig& cfg) {
        PpoConfig p;
        p.gamma = cfg.get_double("gamma", p.gamma);
        p.lambda = cfg.get_double("lambda", p.lambda);
        p.clip_eps = cfg.get_double("clip_eps", p.clip_eps);
        p.entropy_beta = cfg.get_double("entropy_beta", p.entropy_beta);
        p.entropy_floor = cfg.get_double("entropy_floor", p.entropy_floor);
        p.learning_rate = cfg.get_double("learning_rate", p.learning_rate);
        p.max_grad_norm = cfg.get_double("max_grad_norm", p.max_grad_norm);
        p.lr_decay = cfg.get_bool("lr_decay", p.lr_decay);
        p.horizon = static_cast<std::size_t>(cfg.get_u64("horizon", p.horizon));
        p.minibatch = static_cast<std::size_t>(cfg.get_u64("minibatch", p.minibatch));
        p.epochs = static_cast<std::size_t>(cfg.get_u64("epochs", p.epochs));
        p.env_count = static_cast<std::size_t>(cfg.get_u64("env_count", p.env_count));
        p.max_steps = cfg.get_u64("max_steps", p.max_steps);
        p.checkpoint_every = cfg.get_u64("checkpoint_every", p.checkpoint_every);
        p.seed = cfg.get_u64("seed", p.seed);
        p.hidden = static_cast<Eigen::Index>(cfg.get_int("hidden", p.hidden));
        p.validate();
        return p;
    }
};

/// Truncated generalized advantage estimation over one segment.
/// delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t);
/// A_t = delta_t + gamma * lambda * (1 - done_t) * A_{t+1};
/// returns_t = A_t + V(s_t). `bootstrap_value` stands in for V at the
/// segment end; `dones` (optional) cuts both recursions at episode ends.
inline void gae(const std::vector<double>& rewards, const std::vector<double>& values,
                double bootstrap_value, double gamma, double lambda,
                std::vector<double>& advantages, std::vector<double>& returns,
                const std::vector<std::uint8_t>* dones = nullptr) {
    const std::size_t n = rewards.size();
    if (values.size() != n) throw std::invalid_argument("gae: rewards/values length mismatch");
    if (dones && dones->size() != n)
        throw std::invalid_argument("gae: rewards/dones length mismatch");
    advantages.assign(n, 0.0);
    returns.assign(n, 0.0);
    double acc = 0.0;
    for (std::size_t t = n; t-- > 0;) {
        const double cont = dones && (*dones)[t] ? 0.0 : 1.0;
        const double v_next = t + 1 < n ? values[t + 1] : bootstrap_value;
        const double delta = rewards[t] + gamma * v_next * cont - values[t];
        acc = delta + gamma * lambda * cont * acc;
        advantages[t] = acc;
        returns[t] = acc + values[t];
    }
}

struct PpoBatch {
    Eigen::MatrixXd obs;         // B x input
    Eigen::MatrixXd raw_actions; // B x actions
    Eigen::VectorXd logp_old, values_old, advantages, returns;
};

struct PpoDiagnostics {
    double loss = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double clip_fraction = 0.0;
    double approx_kl = 0.0;
};

/// Clipped-surrogate PPO loss with clipped value error and entropy bonus:
///   L = -E[min(r A, clip(r, 1-eps, 1+eps) A)] + c1 * E[max((V-R)^2,
///       (Vold + clip(V-Vold))-R)^2)] - beta * S.
/// When `grad` is non-null the analytic gradient w.r.t. the flat parameter
/// vector is written there (validated against finite differences by test).
inline PpoDiagnostics ppo_loss(const PolicyNet& net, const PpoBatch& batch,
                               const PpoConfig& cfg, Eigen::VectorXd* grad = nullptr) {
    const auto B = batch.obs.rows();
    const auto A = net.dims().actions;
    if (batch.raw_actions.rows() != B || batch.logp_old.size() != B ||
        batch.values_old.size() != B || batch.advantages.size() != B ||
        batch.returns.size() != B)
        throw std::invalid_argument("ppo_loss: ragged batch");

    PolicyNet::Cache c;
    net.forward(batch.obs, c);
    const Eigen::VectorXd log_std = net.log_std();
    const Eigen::VectorXd sigma2 = (2.0 * log_std.array()).exp().matrix();

    // New log-probabilities of the stored raw actions.
    const Eigen::MatrixXd diff = batch.raw_actions - c.MU;
    Eigen::VectorXd logp_new =
        Eigen::VectorXd::Constant(B, -0.5 * static_cast<double>(A) * log_2pi() -
                                         log_std.sum());
    for (Eigen::Index j = 0; j < A; ++j)
        logp_new -= (0.5 / sigma2[j]) * diff.col(j).array().square().matrix();

    const Eigen::VectorXd ratio = (logp_new - batch.logp_old).array().exp().matrix();
    const double inv_b = 1.0 / static_cast<double>(B);
    const double lo = 1.0 - cfg.clip_eps, hi = 1.0 + cfg.clip_eps;

    double policy_loss = 0.0, value_loss = 0.0, clip_count = 0.0;
    Eigen::VectorXd dlogp = Eigen::VectorXd::Zero(B); // d(loss)/d(logp_new)
    Eigen::VectorXd gv = Eigen::VectorXd::Zero(B);    // d(loss)/d(value)
    for (Eigen::Index i = 0; i < B; ++i) {
        const double r = ratio[i];
        const double adv = batch.advantages[i];
        const double unclipped = r * adv;
        const double clipped = std::clamp(r, lo, hi) * adv;
        policy_loss -= inv_b * std::min(unclipped, clipped);
        if (r < lo || r > hi) clip_count += 1.0;
        // Gradient flows through the ratio only while the unclipped branch
        // is active (the min at the old policy point ties toward it).
        if (unclipped <= clipped) dlogp[i] = -inv_b * r * adv;

        const double vdiff = c.V[i] - batch.returns[i];
        const double vclip = batch.values_old[i] +
                             std::clamp(c.V[i] - batch.values_old[i], -cfg.clip_eps,
                                        cfg.clip_eps);
        const double cdiff = vclip - batch.returns[i];
        const double sq_un = vdiff * vdiff, sq_cl = cdiff * cdiff;
        value_loss += inv_b * std::max(sq_un, sq_cl);
        // The clipped branch exceeds the unclipped one only when the clamp
        // saturated, where its derivative w.r.t. V is zero.
        if (sq_un >= sq_cl) gv[i] = PpoConfig::kC1 * inv_b * 2.0 * vdiff;
    }
    const double entropy = gaussian_entropy(log_std);
    // Below the floor the entropy term freezes at its floor value: the loss
    // stays continuous across the threshold and the term's gradient is zero.
    const bool entropy_live = entropy > cfg.entropy_floor;

    PpoDiagnostics d;
    d.policy_loss = policy_loss;
    d.value_loss = value_loss;
    d.entropy = entropy;
    d.clip_fraction = clip_count * inv_b;
    d.approx_kl = (batch.logp_old - logp_new).mean();
    d.loss = policy_loss + PpoConfig::kC1 * value_loss -
             cfg.entropy_beta * (entropy_live ? entropy : cfg.entropy_floor);
    if (!std::isfinite(d.loss))
        throw std::runtime_error(
            "ppo_loss: non-finite loss (policy " + std::to_string(policy_loss) + ", value " +
            std::to_string(value_loss) + ", entropy " + std::to_string(entropy) + ")");

    if (grad) {
        Eigen::MatrixXd gmu(B, A);
        Eigen::VectorXd gs = Eigen::VectorXd::Zero(A);
        for (Eigen::Index j = 0; j < A; ++j) {
            // d logp / d mu_j = diff_j / sigma_j^2 ; d logp / d s_j =
            // diff_j^2 / sigma_j^2 - 1.
            gmu.col(j) = (dlogp.array() * diff.col(j).array() / sigma2[j]).matrix();
            gs[j] = (dlogp.array() *
                     (diff.col(j).array().square() / sigma2[j] - 1.0))
                        .sum();
            if (entropy_live) gs[j] -= cfg.entropy_beta; // dS/ds_j = 1
        }
        net.backward(c, gmu, gv, gs, *grad);
    }
    return d;
}

class Adam {
public:
    explicit Adam(Eigen::Index n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps), m_(Eigen::VectorXd::Zero(n)),
          v_(Eigen::VectorXd::Zero(n)) {}

    void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, double lr) {
        ++t_;
        m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
        v_ = (beta2_ * v_.array() + (1.0 - beta2_) * grad.array().square()).matrix();
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        theta -= (lr / bc1) * (m_.array() / ((v_.array() / bc2).sqrt() + eps_)).matrix();
    }

private:
    double beta1_, beta2_, eps_;
    int t_ = 0;
    Eigen::VectorXd m_, v_;
};

struct CurvePoint {
    std::uint64_t step = 0;
    double mean_episode_reward = 0.0;
    double clip_fraction = 0.0;
    double approx_kl = 0.0;
    double entropy = 0.0;
};

inline void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& out) {
    out << "step,mean_episode_reward,clip_fraction,approx_kl,entropy\n";
    for (const auto& p : curve)
        out << p.step << ',' << format_double(p.mean_episode_reward) << ','
            << format_double(p.clip_fraction) << ',' << format_double(p.approx_kl) << ','
            << format_double(p.entropy) << "\n";
}

/// Synchronous PPO: env_count parallel episodes are advanced `horizon` steps,
/// GAE runs per env, advantages are whitened over the whole batch, and the
/// flat parameter vector takes `epochs` passes of minibatch Adam steps.
/// Deterministic for a fixed config: every random draw comes from seeded
/// streams consumed in a fixed order.
class PpoTrainer {
public:
    PpoTrainer(PpoConfig cfg, EnvConfig env_cfg,
               std::map<std::string, std::string> config_echo = {})
        : cfg_(cfg), env_cfg_(env_cfg), echo_(std::move(config_echo)),
          net_(NetDims{10, cfg.hidden, 3}, cfg.seed),
          adam_(net_.param_count()),
          rng_act_(derive_seed(cfg.seed, 0x616374ULL)),      // "act"
          rng_shuffle_(derive_seed(cfg.seed, 0x73687566ULL)) // "shuf"
    {
        cfg_.validate();
        env_cfg_.sim.validate();
    }

    const PolicyNet& net() const { return net_; }
    const std::vector<CurvePoint>& curve() const { return curve_; }
    std::uint64_t steps_done() const { return steps_done_; }

    /// Runs to max_steps. When `out_dir` is non-empty, writes curve.csv
    /// after every update and checkpoint files on the configured cadence;
    /// on divergence the last good checkpoint survives as
    /// checkpoint_latest.json and the error is rethrown.
    void train(const std::string& out_dir = "") {
        namespace fs = std::filesystem;
        if (!out_dir.empty()) fs::create_directories(out_dir);

        envs_.clear();
        envs_.reserve(cfg_.env_count);
        episodes_started_.assign(cfg_.env_count, 0);
        episode_acc_.assign(cfg_.env_count, 0.0);
        obs_.resize(static_cast<Eigen::Index>(cfg_.env_count), 10);
        for (std::size_t e = 0; e < cfg_.env_count; ++e) {
            envs_.emplace_back(env_cfg_);
            reset_env_(e);
        }

        const std::size_t batch_size = cfg_.horizon * cfg_.env_count;
        std::uint64_t next_checkpoint = cfg_.checkpoint_every;
        while (steps_done_ < cfg_.max_steps) {
            Rollout roll = collect_rollout_();
            try {
                update_(roll);
            } catch (const std::exception&) {
                if (!out_dir.empty()) flush_(out_dir); // keep the last good state
                throw;
            }
            steps_done_ += batch_size;
            log_point_();
            if (!out_dir.empty()) {
                std::ofstream curve_out(out_dir + "/curve.csv");
                write_curve_csv(curve_, curve_out);
                if (steps_done_ >= next_checkpoint || steps_done_ >= cfg_.max_steps) {
                    flush_(out_dir);
                    while (next_checkpoint <= steps_done_)
                        next_checkpoint += cfg_.checkpoint_every;
                }
            }
        }
    }

    Checkpoint make_checkpoint() const {
        Checkpoint cp;
        cp.dims = net_.dims();
        cp.theta = net_.theta();
        cp.level_scale_m = env_cfg_.level_scale_m;
        cp.count_scale = env_cfg_.count_scale;
        cp.config_echo = echo_;
        cp.seed = cfg_.seed;
        cp.steps_trained = steps_done_;
        return cp;
    }

private:
    struct Rollout {
        // Step-major, env-minor; one row per transition.
        Eigen::MatrixXd obs, raw;
        Eigen::VectorXd logp, value, reward;
        std::vector<std::uint8_t> done;
        Eigen::VectorXd bootstrap; // per env
    };

    void reset_env_(std::size_t e) {
        const std::uint64_t episode =
            episodes_started_[e]++ * cfg_.env_count + e;
        const auto obs = envs_[e].reset(
            make_synthetic_stream(derive_seed(cfg_.seed, 0x656e76ULL, episode),
                                  env_cfg_.sim.dt_s, env_cfg_.episode_days));
        obs_.row(static_cast<Eigen::Index>(e)) = obs.to_eigen().transpose();
        episode_acc_[e] = 0.0;
    }

    Rollout collect_rollout_() {
        const auto E = static_cast<Eigen::Index>(cfg_.env_count);
        const auto H = static_cast<Eigen::Index>(cfg_.horizon);
        Rollout r;
        r.obs.resize(H * E, 10);
        r.raw.resize(H * E, 3);
        r.logp.resize(H * E);
        r.value.resize(H * E);
        r.reward.resize(H * E);
        r.done.assign(static_cast<std::size_t>(H * E), 0);
        const Eigen::VectorXd log_std = net_.log_std();
        const Eigen::VectorXd sigma = log_std.array().exp().matrix();

        PolicyNet::Cache c;
        for (Eigen::Index h = 0; h < H; ++h) {
            net_.forward(obs_, c);
            for (Eigen::Index e = 0; e < E; ++e) {
                const Eigen::Index row = h * E + e;
                r.obs.row(row) = obs_.row(e);
                Eigen::Vector3d raw;
                for (Eigen::Index j = 0; j < 3; ++j)
                    raw[j] = c.MU(e, j) + sigma[j] * rng_act_.normal();
                r.raw.row(row) = raw.transpose();
                r.logp[row] =
                    gaussian_log_prob(raw, c.MU.row(e).transpose(), log_std);
                r.value[row] = c.V[e];

                auto& env = envs_[static_cast<std::size_t>(e)];
                const auto out = env.step(map_raw_action(raw));
                r.reward[row] = out.reward;
                episode_acc_[static_cast<std::size_t>(e)] += out.reward;
                if (out.done) {
                    r.done[static_cast<std::size_t>(row)] = 1;
                    completed_.push_back(episode_acc_[static_cast<std::size_t>(e)]);
                    if (completed_.size() > 64) completed_.pop_front();
                    reset_env_(static_cast<std::size_t>(e));
                } else {
                    obs_.row(e) = out.obs.to_eigen().transpose();
                }
            }
        }
        net_.forward(obs_, c);
        r.bootstrap = c.V;
        return r;
    }

    void update_(const Rollout& roll) {
        const auto E = static_cast<Eigen::Index>(cfg_.env_count);
        const auto H = static_cast<Eigen::Index>(cfg_.horizon);
        const auto N = H * E;

        // Per-env GAE over the step-major layout.
        Eigen::VectorXd adv(N), ret(N);
        std::vector<double> rew(static_cast<std::size_t>(H)), val(static_cast<std::size_t>(H)),
            a(static_cast<std::size_t>(H)), g(static_cast<std::size_t>(H));
        std::vector<std::uint8_t> dn(static_cast<std::size_t>(H));
        std::vector<double> advs, rets;
        for (Eigen::Index e = 0; e < E; ++e) {
            for (Eigen::Index h = 0; h < H; ++h) {
                const auto row = h * E + e;
                rew[static_cast<std::size_t>(h)] = roll.reward[row];
                val[static_cast<std::size_t>(h)] = roll.value[row];
                dn[static_cast<std::size_t>(h)] = roll.done[static_cast<std::size_t>(row)];
            }
            gae(rew, val, roll.bootstrap[e], cfg_.gamma, cfg_.lambda, advs, rets, &dn);
            for (Eigen::Index h = 0; h < H; ++h) {
                adv[h * E + e] = advs[static_cast<std::size_t>(h)];
                ret[h * E + e] = rets[static_cast<std::size_t>(h)];
            }
        }

        // Whiten advantages over the whole update batch.
        const double mean = adv.mean();
        const double sd =
            std::sqrt((adv.array() - mean).square().sum() / static_cast<double>(N)) + 1e-8;
        adv = ((adv.array() - mean) / sd).matrix();

        std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
        std::iota(order.begin(), order.end(), 0);
        const double frac =
            cfg_.lr_decay
                ? std::max(0.0, 1.0 - static_cast<double>(steps_done_) /
                                      static_cast<double>(cfg_.max_steps))
                : 1.0;
        const double lr = cfg_.learning_rate * frac;

        double cf = 0.0, kl = 0.0, ent = 0.0;
        std::size_t nmb = 0;
        Eigen::VectorXd grad(net_.param_count());
        for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
            // Fisher-Yates with the seeded stream: deterministic shuffles.
            for (std::size_t i = order.size(); i > 1; --i) {
                const auto j = static_cast<std::size_t>(rng_shuffle_.next_u64() % i);
                std::swap(order[i - 1], order[j]);
            }
            for (Eigen::Index start = 0; start < N;
                 start += static_cast<Eigen::Index>(cfg_.minibatch)) {
                const auto count =
                    std::min<Eigen::Index>(static_cast<Eigen::Index>(cfg_.minibatch),
                                           N - start);
                PpoBatch b;
                b.obs.resize(count, 10);
                b.raw_actions.resize(count, 3);
                b.logp_old.resize(count);
                b.values_old.resize(count);
                b.advantages.resize(count);
                b.returns.resize(count);
                for (Eigen::Index k = 0; k < count; ++k) {
                    const auto row = order[static_cast<std::size_t>(start + k)];
                    b.obs.row(k) = roll.obs.row(row);
                    b.raw_actions.row(k) = roll.raw.row(row);
                    b.logp_old[k] = roll.logp[row];
                    b.values_old[k] = roll.value[row];
                    b.advantages[k] = adv[row];
                    b.returns[k] = ret[row];
                }
                grad.setZero();
                const auto d = ppo_loss(net_, b, cfg_, &grad);
                if (cfg_.max_grad_norm > 0.0) {
                    const double gn = grad.norm();
                    if (gn > cfg_.max_grad_norm) grad *= cfg_.max_grad_norm / gn;
                }
                adam_.step(net_.theta(), grad, lr);
                cf += d.clip_fraction;
                kl += d.approx_kl;
                ent += d.entropy;
                ++nmb;
            }
        }
        last_cf_ = cf / static_cast<double>(nmb);
        last_kl_ = kl / static_cast<double>(nmb);
        last_ent_ = ent / static_cast<double>(nmb);
    }

    void log_point_() {
        CurvePoint p;
        p.step = steps_done_;
        p.mean_episode_reward =
            completed_.empty()
                ? 0.0
                : std::accumulate(completed_.begin(), completed_.end(), 0.0) /
                      static_cast<double>(completed_.size());
        p.clip_fraction = last_cf_;
        p.approx_kl = last_kl_;
        p.entropy = last_ent_;
        curve_.push_back(p);
    }

    void flush_(const std::string& out_dir) const {
        make_checkpoint().save(out_dir + "/checkpoint_latest.json");
    }

    PpoConfig cfg_;
    EnvConfig env_cfg_;
    std::map<std::string, std::string> echo_;
    PolicyNet net_;
    Adam adam_;
    Rng rng_act_, rng_shuffle_;
    std::vector<LagoonEnv> envs_;
    std::vector<std::uint64_t> episodes_started_;
    std::vector<double> episode_acc_;
    std::deque<double> completed_;
    Eigen::MatrixXd obs_;
    std::vector<CurvePoint> curve_;
    std::uint64_t steps_done_ = 0;
    double last_cf_ = 0.0, last_kl_ = 0.0, last_ent_ = 0.0;
};

} // namespace lagoon
