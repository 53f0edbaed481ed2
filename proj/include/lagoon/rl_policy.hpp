#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "lagoon/config.hpp"
#include "lagoon/rng.hpp"

namespace lagoon {

/// Artifact (checkpoint) incompatibility; the CLI maps this to exit code 3.
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NetDims {
    Eigen::Index input = 10;
    Eigen::Index hidden = 128;
    Eigen::Index actions = 3;

    bool operator==(const NetDims&) const = default;
};

inline double log_2pi() {
    static const double v = std::log(2.0 * M_PI);
    return v;
}

/// Shared-trunk actor-critic: two tanh hidden layers feed a bounded action
/// mean head (tanh scaled to +-kMuBound) and a linear value head; the
/// Gaussian log-std is a free state-independent 3-vector. Bounding the mean
/// keeps the Gaussian centre near the decoder's responsive range however
/// hard the surrogate pushes to silence a channel's exploration noise;
/// without it those pushes grow without limit, ride through the widest
/// weight block, and saturate the shared trunk into a state-blind constant
/// function. All parameters live in one flat vector so the optimizer and
/// the finite-difference gradient check can treat the network as a plain
/// R^n function.
///
/// Layout (column-major blocks): W1 (h x in), b1, W2 (h x h), b2,
/// Wmu (a x h), bmu, Wv (1 x h), bv, log_std (a).
class PolicyNet {
public:
    /// Half-width of the action-mean range. Wide enough that every decoder
    /// threshold (0 for the mode nodes, +-1 for the saturated sluice ends)
    /// is reachable with margin, small enough that tanh still passes
    /// gradient there (tanh' >= 0.36 across the whole range).
    static constexpr double kMuBound = 1.5;

    PolicyNet(NetDims dims, std::uint64_t seed) : dims_(dims) {
        offsets_();
        theta_ = Eigen::VectorXd::Zero(count_);
        // Trunk: Xavier-uniform (suits tanh); heads and log-std stay zero so
        // the initial policy is the centered action with unit noise.
        Rng rng(derive_seed(seed, 0x696e6974ULL)); // stream tag: "init"
        auto fill = [&](Eigen::Index off, Eigen::Index rows, Eigen::Index cols) {
            const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
            for (Eigen::Index i = 0; i < rows * cols; ++i)
                theta_[off + i] = rng.uniform(-a, a);
        };
        fill(off_w1_, dims_.hidden, dims_.input);
        fill(off_w2_, dims_.hidden, dims_.hidden);
    }

    PolicyNet(NetDims dims, Eigen::VectorXd theta) : dims_(dims) {
        offsets_();
        if (theta.size() != count_)
            throw std::invalid_argument("PolicyNet: parameter vector has wrong size");
        theta_ = std::move(theta);
    }

    const NetDims& dims() const { return dims_; }
    Eigen::Index param_count() const { return count_; }
    const Eigen::VectorXd& theta() const { return theta_; }
    Eigen::VectorXd& theta() { return theta_; }

    Eigen::VectorXd log_std() const { return theta_.segment(off_logstd_, dims_.actions); }
    void set_log_std(const Eigen::VectorXd& s) {
        theta_.segment(off_logstd_, dims_.actions) = s;
    }

    /// Activations retained for the analytic backward pass. Rows = samples.
    struct Cache {
        Eigen::MatrixXd X, H1, H2, MU;
        Eigen::VectorXd V;
    };

    void forward(const Eigen::MatrixXd& X, Cache& c) const {
        const auto W1 = mat(off_w1_, dims_.hidden, dims_.input);
        const auto b1 = vec(off_b1_, dims_.hidden);
        const auto W2 = mat(off_w2_, dims_.hidden, dims_.hidden);
        const auto b2 = vec(off_b2_, dims_.hidden);
        const auto Wmu = mat(off_wmu_, dims_.actions, dims_.hidden);
        const auto bmu = vec(off_bmu_, dims_.actions);
        const auto Wv = mat(off_wv_, 1, dims_.hidden);
        const auto bv = vec(off_bv_, 1);

        c.X = X;
        c.H1 = ((X * W1.transpose()).rowwise() + b1.transpose()).array().tanh().matrix();
        c.H2 = ((c.H1 * W2.transpose()).rowwise() + b2.transpose()).array().tanh().matrix();
        c.MU = (((c.H2 * Wmu.transpose()).rowwise() + bmu.transpose())
                    .array()
                    .tanh() *
                kMuBound)
                   .matrix();
        c.V = ((c.H2 * Wv.transpose()).col(0).array() + bv[0]).matrix();
        if (!c.MU.allFinite() || !c.V.allFinite())
            throw std::runtime_error("PolicyNet: non-finite network output (divergence)");
    }

    /// Accumulates d(loss)/d(theta) into `grad` given upstream gradients
    /// w.r.t. the action means (Gmu), values (Gv) and log-std (Gs).
    void backward(const Cache& c, const Eigen::MatrixXd& Gmu, const Eigen::VectorXd& Gv,
                  const Eigen::VectorXd& Gs, Eigen::VectorXd& grad) const {
        if (grad.size() != count_) grad = Eigen::VectorXd::Zero(count_);
        const auto W2 = mat(off_w2_, dims_.hidden, dims_.hidden);
        const auto Wmu = mat(off_wmu_, dims_.actions, dims_.hidden);
        const auto Wv = mat(off_wv_, 1, dims_.hidden);

        auto gW1 = gmat(grad, off_w1_, dims_.hidden, dims_.input);
        auto gb1 = gvec(grad, off_b1_, dims_.hidden);
        auto gW2 = gmat(grad, off_w2_, dims_.hidden, dims_.hidden);
        auto gb2 = gvec(grad, off_b2_, dims_.hidden);
        auto gWmu = gmat(grad, off_wmu_, dims_.actions, dims_.hidden);
        auto gbmu = gvec(grad, off_bmu_, dims_.actions);
        auto gWv = gmat(grad, off_wv_, 1, dims_.hidden);
        auto gbv = gvec(grad, off_bv_, 1);
        auto gs = gvec(grad, off_logstd_, dims_.actions);

        // Chain through the bounded mean head: d(mu)/d(preact) =
        // kMuBound * (1 - tanh^2) recovered from the cached output.
        const Eigen::MatrixXd Gpre =
            (Gmu.array() * (kMuBound - c.MU.array().square() / kMuBound)).matrix();
        gWmu.noalias() += Gpre.transpose() * c.H2;
        gbmu += Gpre.colwise().sum().transpose();
        gWv.noalias() += Gv.transpose() * c.H2;
        gbv[0] += Gv.sum();
        gs += Gs;

        Eigen::MatrixXd gH2 = Gpre * Wmu;
        gH2.noalias() += Gv * Wv;
        const Eigen::MatrixXd gP2 =
            (gH2.array() * (1.0 - c.H2.array().square())).matrix();
        gW2.noalias() += gP2.transpose() * c.H1;
        gb2 += gP2.colwise().sum().transpose();

        const Eigen::MatrixXd gH1 = gP2 * W2;
        const Eigen::MatrixXd gP1 =
            (gH1.array() * (1.0 - c.H1.array().square())).matrix();
        gW1.noalias() += gP1.transpose() * c.X;
        gb1 += gP1.colwise().sum().transpose();
    }

private:
    void offsets_() {
        const Eigen::Index in = dims_.input, h = dims_.hidden, a = dims_.actions;
        off_w1_ = 0;
        off_b1_ = off_w1_ + h * in;
        off_w2_ = off_b1_ + h;
        off_b2_ = off_w2_ + h * h;
        off_wmu_ = off_b2_ + h;
        off_bmu_ = off_wmu_ + a * h;
        off_wv_ = off_bmu_ + a;
        off_bv_ = off_wv_ + h;
        off_logstd_ = off_bv_ + 1;
        count_ = off_logstd_ + a;
    }

    Eigen::Map<const Eigen::MatrixXd> mat(Eigen::Index off, Eigen::Index r,
                                          Eigen::Index c) const {
        return {theta_.data() + off, r, c};
    }
    Eigen::Map<const Eigen::VectorXd> vec(Eigen::Index off, Eigen::Index n) const {
        return {theta_.data() + off, n};
    }
    static Eigen::Map<Eigen::MatrixXd> gmat(Eigen::VectorXd& g, Eigen::Index off,
                                            Eigen::Index r, Eigen::Index c) {
        return {g.data() + off, r, c};
    }
    static Eigen::Map<Eigen::VectorXd> gvec(Eigen::VectorXd& g, Eigen::Index off,
                                            Eigen::Index n) {
        return {g.data() + off, n};
    }

    NetDims dims_;
    Eigen::Index off_w1_ = 0, off_b1_ = 0, off_w2_ = 0, off_b2_ = 0, off_wmu_ = 0,
                 off_bmu_ = 0, off_wv_ = 0, off_bv_ = 0, off_logstd_ = 0, count_ = 0;
    Eigen::VectorXd theta_;
};

/// Diagonal-Gaussian log-density of `raw` under (mu, exp(log_std)).
inline double gaussian_log_prob(const Eigen::VectorXd& raw, const Eigen::VectorXd& mu,
                                const Eigen::VectorXd& log_std) {
    double lp = -0.5 * static_cast<double>(raw.size()) * log_2pi();
    for (Eigen::Index j = 0; j < raw.size(); ++j) {
        const double z = (raw[j] - mu[j]) / std::exp(log_std[j]);
        lp += -0.5 * z * z - log_std[j];
    }
    return lp;
}

/// Entropy of the diagonal Gaussian: sum_j (log_std_j + 0.5 + 0.5 ln 2*pi).
inline double gaussian_entropy(const Eigen::VectorXd& log_std) {
    return log_std.sum() +
           0.5 * static_cast<double>(log_std.size()) * (1.0 + log_2pi());
}

/// Raw Gaussian sample -> the unit cube the decoder reads: clip to [-1, 1],
/// then shift/scale to [0, 1].
inline std::array<double, 3> map_raw_action(const Eigen::Vector3d& raw) {
    std::array<double, 3> a{};
    for (int j = 0; j < 3; ++j) a[j] = (std::clamp(raw[j], -1.0, 1.0) + 1.0) * 0.5;
    return a;
}

struct SampleResult {
    std::array<double, 3> action01{};
    Eigen::Vector3d raw = Eigen::Vector3d::Zero();
    double log_prob = 0.0;
    double value = 0.0;
};

/// Samples (train) or takes the mean action (eval). The log-prob is the
/// density of the pre-clip raw sample.
inline SampleResult policy_sample(const PolicyNet& net, const Eigen::VectorXd& obs,
                                  bool deterministic, Rng* rng) {
    PolicyNet::Cache c;
    net.forward(obs.transpose(), c);
    const Eigen::VectorXd mu = c.MU.row(0).transpose();
    const Eigen::VectorXd log_std = net.log_std();
    SampleResult out;
    out.value = c.V[0];
    if (deterministic) {
        out.raw = mu;
    } else {
        if (!rng) throw std::invalid_argument("policy_sample: sampling needs an Rng");
        for (Eigen::Index j = 0; j < 3; ++j)
            out.raw[j] = mu[j] + std::exp(log_std[j]) * rng->normal();
    }
    out.log_prob = gaussian_log_prob(out.raw, mu, log_std);
    out.action01 = map_raw_action(out.raw);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    NetDims dims;
    Eigen::VectorXd theta;
    double level_scale_m = 6.0;
    double count_scale = 16.0;
    std::map<std::string, std::string> config_echo;
    std::uint64_t seed = 0;
    std::uint64_t steps_trained = 0;
    std::string tool_version = kToolVersion;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["format_version"] = kCheckpointVersion;
        j["arch"] = {{"input", dims.input}, {"hidden", {dims.hidden, dims.hidden}},
                     {"actions", dims.actions}};
        j["normalizers"] = {{"level_scale_m", level_scale_m}, {"count_scale", count_scale}};
        j["theta"] = std::vector<double>(theta.data(), theta.data() + theta.size());
        j["config"] = config_echo;
        j["seed"] = seed;
        j["steps_trained"] = steps_trained;
        j["tool_version"] = tool_version;
        return j;
    }

    static Checkpoint from_json(const nlohmann::json& j) {
        const int version = j.value("format_version", -1);
        if (version != kCheckpointVersion)
            throw CheckpointError("checkpoint format_version " + std::to_string(version) +
                                  " unsupported (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
        Checkpoint cp;
        cp.dims.input = j.at("arch").at("input").get<Eigen::Index>();
        cp.dims.hidden = j.at("arch").at("hidden").at(0).get<Eigen::Index>();
        cp.dims.actions = j.at("arch").at("actions").get<Eigen::Index>();
        const auto weights = j.at("theta").get<std::vector<double>>();
        cp.theta = Eigen::Map<const Eigen::VectorXd>(weights.data(),
                                                     static_cast<Eigen::Index>(weights.size()));
        cp.level_scale_m = j.at("normalizers").value("level_scale_m", 6.0);
        cp.count_scale = j.at("normalizers").value("count_scale", 16.0);
        if (j.contains("config"))
            cp.config_echo = j.at("config").get<std::map<std::string, std::string>>();
        cp.seed = j.value("seed", std::uint64_t{0});
        cp.steps_trained = j.value("steps_trained", std::uint64_t{0});
        cp.tool_version = j.value("tool_version", "");
        return cp;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
        out << to_json().dump() << "\n";
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw CheckpointError(path + ": not a checkpoint JSON: " + e.what());
        }
        return from_json(j);
    }

    PolicyNet to_net() const { return PolicyNet(dims, theta); }
};

} // namespace lagoon
