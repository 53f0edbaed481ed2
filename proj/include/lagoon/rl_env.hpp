#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "lagoon/rl_policy.hpp"
#include "lagoon/rng.hpp"
#include "lagoon/simulation.hpp"
#include "lagoon/tides.hpp"

namespace lagoon {

/// Hierarchical action decode: node 1 wins ties for Generate, node 2 for
/// Idle, otherwise Off; node 3 is the sluice opening fraction. Total on any
/// input in the unit cube.
inline StructureCommand decode_action(const std::array<double, 3>& a) {
    StructureCommand cmd;
    if (a[0] >= 0.5)
        cmd.turbines = TurbineMode::Generate;
    else if (a[1] >= 0.5)
        cmd.turbines = TurbineMode::Idle;
    else
        cmd.turbines = TurbineMode::Off;
    cmd.sluice_fraction = a[2];
    return cmd;
}

/// Strictly sequential ocean-sample source. The environment may only ever
/// ask for the next sample — there is no random or forward access, which is
/// what makes the controller structurally prediction-free.
class TideStream {
public:
    virtual ~TideStream() = default;
    virtual double next() = 0;
    virtual std::size_t remaining() const = 0;
    virtual double dt_s() const = 0;
};

class SeriesStream final : public TideStream {
public:
    explicit SeriesStream(TideSeries series)
        : owned_(std::make_shared<const TideSeries>(std::move(series))), s_(owned_.get()) {}
    explicit SeriesStream(const TideSeries* borrowed) : s_(borrowed) {
        if (!borrowed) throw std::invalid_argument("SeriesStream: null series");
    }

    double next() override {
        if (idx_ >= s_->size())
            throw std::runtime_error("TideStream: sequential read past the end of the series");
        return s_->levels_m[idx_++];
    }
    std::size_t remaining() const override { return s_->size() - idx_; }
    double dt_s() const override { return s_->dt_s; }

private:
    std::shared_ptr<const TideSeries> owned_;
    const TideSeries* s_ = nullptr;
    std::size_t idx_ = 0;
};

/// One month of synthetic tide from the default constituents with seeded
/// random phase lags.
inline TideSeries synthetic_month(std::uint64_t seed, double dt_s = 60.0,
                                  double days = kDaysPerMonth) {
    const auto cs = constituents_with_phases(default_constituents(), random_phases(seed));
    return synthesize(cs, days * 86400.0, dt_s);
}

inline std::unique_ptr<TideStream> make_synthetic_stream(std::uint64_t seed, double dt_s = 60.0,
                                                         double days = kDaysPerMonth) {
    return std::make_unique<SeriesStream>(synthetic_month(seed, dt_s, days));
}

struct EnvConfig {
    SimConfig sim;
    int physics_per_mdp = 15;           // 15 x 60 s = one MDP step
    std::size_t max_mdp_steps = 2880;   // one month of control windows
    double level_scale_m = 6.0;
    double count_scale = 16.0;
    double reward_scale_mwh = 50.0;
    double episode_days = kDaysPerMonth;

    static EnvConfig from_config(KeyValueConfig& cfg) {
        EnvConfig e;
        e.sim = SimConfig::from_config(cfg);
        e.physics_per_mdp = static_cast<int>(cfg.get_int("physics_per_mdp", e.physics_per_mdp));
        e.max_mdp_steps = static_cast<std::size_t>(
            cfg.get_u64("episode_mdp_steps", e.max_mdp_steps));
        e.level_scale_m = cfg.get_double("obs_level_scale_m", e.level_scale_m);
        e.count_scale = cfg.get_double("obs_count_scale", e.count_scale);
        e.reward_scale_mwh = cfg.get_double("reward_scale_mwh", e.reward_scale_mwh);
        e.episode_days = cfg.get_double("episode_days", e.episode_days);
        if (e.physics_per_mdp < 1)
            throw std::invalid_argument("EnvConfig: physics_per_mdp must be >= 1");
        return e;
    }
};

/// Normalized plant observation: {ocean, lagoon, generating, idling, sluice}
/// at the current and previous MDP boundary (previous duplicates current at
/// reset).
struct Observation {
    std::array<double, 10> v{};

    Eigen::VectorXd to_eigen() const {
        Eigen::VectorXd x(10);
        for (int i = 0; i < 10; ++i) x[i] = v[i];
        return x;
    }
};

/// The 15-minute MDP wrapper over the 60-second physics: each step decodes
/// the action once, holds the command for `physics_per_mdp` physics steps
/// (momentum ramp active on every one), and pays the window's generated
/// energy as reward. Exactly one ocean sample is drawn from the stream per
/// physics step; the reset draws the first.
class LagoonEnv {
public:
    explicit LagoonEnv(EnvConfig cfg) : cfg_(std::move(cfg)), sim_(cfg_.sim) {}

    const EnvConfig& config() const { return cfg_; }
    const Simulation& sim() const { return sim_; }
    std::size_t mdp_steps() const { return steps_; }
    double energy_wh() const { return sim_.energy_wh(); }
    bool done() const { return done_; }

    /// Physics-step records are appended here when set (evaluation mode).
    void set_record_sink(std::vector<StepRecord>* sink) { sink_ = sink; }

    Observation reset(std::unique_ptr<TideStream> stream) {
        if (!stream) throw std::invalid_argument("LagoonEnv: null tide stream");
        if (std::abs(stream->dt_s() - cfg_.sim.dt_s) > 1e-9)
            throw std::invalid_argument(
                "LagoonEnv: stream sample interval does not match the physics step; "
                "resample the series first");
        if (stream->remaining() <
            static_cast<std::size_t>(cfg_.physics_per_mdp) + 1)
            throw std::invalid_argument("LagoonEnv: stream too short for one MDP step");
        stream_ = std::move(stream);
        sim_.reset(0.0);
        steps_ = 0;
        done_ = false;
        ocean_ = stream_->next();
        cur_ = block_(TurbineMode::Off, 0.0);
        prev_ = cur_;
        return observation_();
    }

    struct StepOut {
        Observation obs;
        double reward = 0.0;
        bool done = false;
    };

    StepOut step(const std::array<double, 3>& action01) {
        if (!stream_) throw std::runtime_error("LagoonEnv: step before reset");
        if (done_) throw std::runtime_error("LagoonEnv: step on a finished episode");
        const StructureCommand cmd = decode_action(action01);
        const double e0 = sim_.energy_wh();
        for (int p = 0; p < cfg_.physics_per_mdp; ++p) {
            const StepRecord rec = sim_.step(ocean_, cmd);
            if (sink_) sink_->push_back(rec);
            ocean_ = stream_->next();
        }
        ++steps_;
        prev_ = cur_;
        cur_ = block_(cmd.turbines, cmd.sluice_fraction);
        done_ = steps_ >= cfg_.max_mdp_steps ||
                stream_->remaining() < static_cast<std::size_t>(cfg_.physics_per_mdp);
        StepOut out;
        out.obs = observation_();
        out.reward = (sim_.energy_wh() - e0) / 1e6 / cfg_.reward_scale_mwh;
        out.done = done_;
        return out;
    }

private:
    std::array<double, 5> block_(TurbineMode mode, double sluice) const {
        const double n = cfg_.count_scale;
        return {ocean_ / cfg_.level_scale_m, sim_.state().level_m / cfg_.level_scale_m,
                mode == TurbineMode::Generate ? cfg_.sim.turbine.count / n : 0.0,
                mode == TurbineMode::Idle ? cfg_.sim.turbine.count / n : 0.0, sluice};
    }

    Observation observation_() const {
        Observation o;
        for (int i = 0; i < 5; ++i) {
            o.v[static_cast<std::size_t>(i)] = cur_[static_cast<std::size_t>(i)];
            o.v[static_cast<std::size_t>(i + 5)] = prev_[static_cast<std::size_t>(i)];
        }
        return o;
    }

    EnvConfig cfg_;
    Simulation sim_;
    std::unique_ptr<TideStream> stream_;
    double ocean_ = 0.0;
    std::array<double, 5> cur_{}, prev_{};
    std::size_t steps_ = 0;
    bool done_ = false;
    std::vector<StepRecord>* sink_ = nullptr;
};

struct EvalResult {
    std::vector<StepRecord> records;
    double energy_wh = 0.0;
    std::size_t mdp_steps = 0;
    bool envelope_warning = false;
};

/// Drives the deterministic (mean-action) policy over the whole stream.
/// Observations leaving the training normalizer envelope by more than 50%
/// raise a one-shot warning — likely distribution shift, not an error.
inline EvalResult evaluate_policy(const PolicyNet& net, EnvConfig cfg,
                                  std::unique_ptr<TideStream> stream,
                                  bool keep_records = true) {
    cfg.max_mdp_steps = static_cast<std::size_t>(-1); // run the stream out
    LagoonEnv env(cfg);
    EvalResult result;
    if (keep_records) env.set_record_sink(&result.records);
    Observation obs = env.reset(std::move(stream));
    bool done = false;
    while (!done) {
        for (double x : obs.v) {
            if (std::abs(x) > 1.5 && !result.envelope_warning) {
                result.envelope_warning = true;
                std::fprintf(stderr,
                             "warning: observation %g left the training envelope "
                             "(distribution shift?)\n", x);
            }
        }
        const auto s = policy_sample(net, obs.to_eigen(), true, nullptr);
        const auto out = env.step(s.action01);
        obs = out.obs;
        done = out.done;
    }
    result.energy_wh = env.energy_wh();
    result.mdp_steps = env.mdp_steps();
    return result;
}

} // namespace lagoon
