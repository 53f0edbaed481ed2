#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lagoon/area_profile.hpp"
#include "lagoon/config.hpp"
#include "lagoon/hydraulics.hpp"
#include "lagoon/tides.hpp"

namespace lagoon {

enum class TurbineMode { Off, Idle, Generate };

inline const char* turbine_mode_name(TurbineMode m) {
    switch (m) {
        case TurbineMode::Off: return "off";
        case TurbineMode::Idle: return "idle";
        case TurbineMode::Generate: return "generate";
    }
    return "?";
}

inline TurbineMode turbine_mode_from_name(const std::string& s) {
    if (s == "off") return TurbineMode::Off;
    if (s == "idle") return TurbineMode::Idle;
    if (s == "generate") return TurbineMode::Generate;
    throw std::runtime_error("unknown turbine mode: " + s);
}

/// Command applied to all structures: the plant's turbines switch as one
/// block, sluices open as a fraction of the total bank area (0 = offline).
struct StructureCommand {
    TurbineMode turbines = TurbineMode::Off;
    double sluice_fraction = 0.0;

    bool operator==(const StructureCommand&) const = default;
};

/// Full plant + numerics configuration for one simulation.
struct SimConfig {
    TurbinePlant turbine;
    HillChart chart;
    EfficiencyChain eff;
    SluiceBank sluices;
    AreaProfile area;
    double dt_s = 60.0;
    double zeta = 0.4;      // momentum-ramp retention per step
    double hold_eps_m = 0.05; // |He| below which holding begins
    double power_cap_w = 0.0; // per-turbine cap; 0 disables
    double rated_power_w = 20e6; // per-turbine nameplate, for capacity factor

    void validate() const {
        turbine.validate();
        chart.validate();
        eff.validate();
        sluices.validate();
        if (dt_s <= 0.0) throw std::invalid_argument("SimConfig: dt_s must be > 0");
        if (!(zeta > 0.0 && zeta <= 1.0))
            throw std::invalid_argument("SimConfig: zeta must lie in (0, 1]");
    }

    /// Keys shared with the CLI plant config file; defaults are the Swansea
    /// design values.
    static SimConfig from_config(KeyValueConfig& cfg) {
        SimConfig c;
        c.turbine.diameter_m = cfg.get_double("turbine_diameter_m", c.turbine.diameter_m);
        c.turbine.poles = static_cast<int>(cfg.get_int("turbine_poles", c.turbine.poles));
        c.turbine.grid_hz = cfg.get_double("grid_hz", c.turbine.grid_hz);
        c.turbine.count = static_cast<int>(cfg.get_int("turbine_count", c.turbine.count));
        c.turbine.h_mt_m = cfg.get_double("min_generating_head_m", c.turbine.h_mt_m);
        c.turbine.idle_cd = cfg.get_double("turbine_idle_cd", c.turbine.idle_cd);
        c.turbine.idle_area_m2 = cfg.get_double("turbine_idle_area_m2", c.turbine.idle_area_m2);
        c.chart.q11_slope = cfg.get_double("hill_q11_slope", c.chart.q11_slope);
        c.chart.q11_intercept = cfg.get_double("hill_q11_intercept", c.chart.q11_intercept);
        c.chart.q11_cap = cfg.get_double("hill_q11_cap", c.chart.q11_cap);
        c.chart.n11_cap_threshold =
            cfg.get_double("hill_n11_cap_threshold", c.chart.n11_cap_threshold);
        c.chart.ef_slope = cfg.get_double("hill_ef_slope", c.chart.ef_slope);
        c.chart.ef_intercept = cfg.get_double("hill_ef_intercept", c.chart.ef_intercept);
        c.chart.ef_clamp = cfg.get_bool("hill_ef_clamp", c.chart.ef_clamp);
        c.eff.generator = cfg.get_double("eff_generator", c.eff.generator);
        c.eff.transformer = cfg.get_double("eff_transformer", c.eff.transformer);
        c.eff.water_friction = cfg.get_double("eff_water_friction", c.eff.water_friction);
        c.eff.drivetrain = cfg.get_double("eff_drivetrain", c.eff.drivetrain);
        c.eff.availability = cfg.get_double("eff_availability", c.eff.availability);
        c.eff.flood_orientation = cfg.get_double("eff_flood_orientation", c.eff.flood_orientation);
        c.sluices.area_m2 = cfg.get_double("sluice_area_m2", c.sluices.area_m2);
        c.sluices.cd = cfg.get_double("sluice_cd", c.sluices.cd);
        c.dt_s = cfg.get_double("dt_s", c.dt_s);
        c.zeta = cfg.get_double("ramp_zeta", c.zeta);
        c.hold_eps_m = cfg.get_double("hold_eps_m", c.hold_eps_m);
        c.power_cap_w = cfg.get_double("power_cap_w", c.power_cap_w);
        c.rated_power_w = cfg.get_double("rated_power_w", c.rated_power_w);
        const double const_area = cfg.get_double("lagoon_area_m2", 11.5e6);
        const std::string profile = cfg.get_string("area_profile_csv", "");
        c.area = profile.empty() ? AreaProfile::constant(const_area)
                                 : AreaProfile::from_csv(profile);
        c.validate();
        return c;
    }
};

struct LagoonState {
    double t_s = 0.0;
    double level_m = 0.0; // datum = mean sea level
    RampState turbine_ramp;
    RampState sluice_ramp;
    StructureCommand mode;
};

/// One physics step of output. `lagoon_m` is the level at the start of the
/// step (the area the backward difference used is evaluated there).
struct StepRecord {
    double t_s = 0.0;
    double ocean_m = 0.0;
    double lagoon_m = 0.0;
    double turbine_flow_m3s = 0.0;
    double sluice_flow_m3s = 0.0;
    double power_w = 0.0;
    TurbineMode turbine_mode = TurbineMode::Off;
    double sluice_fraction = 0.0;
};

/// The 0D time-stepping engine: dL/dt = Q_T / Al(L), advanced by backward
/// finite differences at dt (60 s by default), with the momentum ramp applied
/// to each structure group every step.
class Simulation {
public:
    explicit Simulation(SimConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        reset();
    }

    void reset(double level_m = 0.0) {
        state_ = LagoonState{};
        state_.level_m = level_m;
        state_.turbine_ramp.zeta = cfg_.zeta;
        state_.sluice_ramp.zeta = cfg_.zeta;
        energy_j_ = 0.0;
    }

    const LagoonState& state() const { return state_; }
    void set_state(const LagoonState& s) { state_ = s; }
    const SimConfig& config() const { return cfg_; }
    double energy_j() const { return energy_j_; }
    double energy_wh() const { return energy_j_ / 3600.0; }
    void set_energy_j(double e) { energy_j_ = e; }

    StepRecord step(double ocean_m, const StructureCommand& cmd) {
        if (!std::isfinite(ocean_m))
            throw std::runtime_error("Simulation::step: non-finite ocean level at t=" +
                                     std::to_string(state_.t_s));
        const double head = ocean_m - state_.level_m;
        const double abs_head = std::abs(head);
        const auto& plant = cfg_.turbine;

        // Target flows for this command.
        double turbine_target = 0.0;
        switch (cmd.turbines) {
            case TurbineMode::Generate:
                if (abs_head >= plant.h_mt_m && plant.count > 0) {
                    const auto out = turbine_flow_power(plant, cfg_.chart, cfg_.eff, head);
                    turbine_target = out.flow_m3s * plant.count;
                }
                break;
            case TurbineMode::Idle:
                turbine_target = plant.count *
                                 orifice_flow(plant.idle_flow_area_m2(), plant.idle_cd, head);
                break;
            case TurbineMode::Off:
                break;
        }
        const double sluice_target =
            orifice_flow(cfg_.sluices.area_m2 * cmd.sluice_fraction, cfg_.sluices.cd, head);

        state_.turbine_ramp = ramp_step(state_.turbine_ramp, turbine_target);
        state_.sluice_ramp = ramp_step(state_.sluice_ramp, sluice_target);
        const double q_turbine = state_.turbine_ramp.flow_m3s;
        const double q_sluice = state_.sluice_ramp.flow_m3s;

        // Power from the ramped turbine flow, only while generating above the
        // minimum head and only for the head-aligned flow component.
        double power = 0.0;
        if (cmd.turbines == TurbineMode::Generate && abs_head >= plant.h_mt_m &&
            plant.count > 0) {
            const double aligned =
                (head >= 0.0) == (q_turbine >= 0.0) ? std::abs(q_turbine) : 0.0;
            if (aligned > 0.0) {
                const double n11 = unit_speed(plant, head);
                power = kSeawaterDensity * kGravity * aligned * abs_head *
                        cfg_.chart.ef(n11) * cfg_.eff.combined();
                if (head > 0.0) power *= cfg_.eff.flood_orientation;
                if (cfg_.power_cap_w > 0.0)
                    power = std::min(power, cfg_.power_cap_w * plant.count);
            }
        }

        StepRecord rec;
        rec.t_s = state_.t_s;
        rec.ocean_m = ocean_m;
        rec.lagoon_m = state_.level_m;
        rec.turbine_flow_m3s = q_turbine;
        rec.sluice_flow_m3s = q_sluice;
        rec.power_w = power;
        rec.turbine_mode = cmd.turbines;
        rec.sluice_fraction = cmd.sluice_fraction;

        const double q_total = q_turbine + q_sluice;
        const double area = cfg_.area.area_at(state_.level_m);
        state_.level_m += q_total / area * cfg_.dt_s;
        state_.t_s += cfg_.dt_s;
        state_.mode = cmd;
        energy_j_ += power * cfg_.dt_s;
        return rec;
    }

private:
    SimConfig cfg_;
    LagoonState state_;
    double energy_j_ = 0.0;
};

/// Observed plant state handed to controllers each physics step.
struct ControlInput {
    double t_s = 0.0;
    double ocean_m = 0.0;
    double lagoon_m = 0.0;
};

using Controller = std::function<StructureCommand(const ControlInput&)>;

struct RunResult {
    std::vector<StepRecord> records;
    double energy_wh = 0.0;
    LagoonState final_state;
};

namespace detail {

/// Verifies that every sample feeding the run is usable; short non-Good gaps
/// up to `max_gap_s` are bridged by the series interpolation, anything longer
/// is an error naming the gap.
inline void check_gaps(const TideSeries& tide, double max_gap_s) {
    std::size_t gap_start = 0;
    std::size_t gap_len = 0;
    for (std::size_t i = 0; i <= tide.size(); ++i) {
        const bool bad = i < tide.size() && !tide.good(i);
        if (bad) {
            if (gap_len == 0) gap_start = i;
            ++gap_len;
        } else if (gap_len > 0) {
            const double gap_s = static_cast<double>(gap_len) * tide.dt_s;
            if (gap_s > max_gap_s) {
                throw std::runtime_error(
                    "tide gap of " + std::to_string(gap_s) + " s at t=" +
                    std::to_string(tide.t_s(gap_start)) + " s exceeds the interpolation "
                    "tolerance of " + std::to_string(max_gap_s) + " s");
            }
            gap_len = 0;
        }
    }
}

} // namespace detail

/// Drives a controller over the full tide span on the physics grid, starting
/// from mean sea level. The tide is linearly interpolated when its sampling
/// is coarser than the physics step.
inline RunResult run(const SimConfig& cfg, const TideSeries& tide, const Controller& controller,
                     bool keep_records = true, double max_gap_s = 0.0) {
    tide.validate();
    detail::check_gaps(tide, max_gap_s);
    Simulation sim(cfg);
    const auto steps = static_cast<std::size_t>(std::floor(tide.span_s() / cfg.dt_s));
    RunResult result;
    if (keep_records) result.records.reserve(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * cfg.dt_s;
        const double ocean = tide.level_at(t);
        const StructureCommand cmd =
            controller(ControlInput{t, ocean, sim.state().level_m});
        const StepRecord rec = sim.step(ocean, cmd);
        if (keep_records) result.records.push_back(rec);
    }
    result.energy_wh = sim.energy_wh();
    result.final_state = sim.state();
    return result;
}

inline void write_records_csv(const std::vector<StepRecord>& records, std::ostream& out,
                              const std::map<std::string, std::string>& preamble = {}) {
    for (const auto& [k, v] : preamble) out << "# " << k << "=" << v << "\n";
    out << "t_s,ocean_m,lagoon_m,turbine_flow_m3s,sluice_flow_m3s,power_w,"
           "turbine_mode,sluice_fraction\n";
    for (const auto& r : records) {
        out << format_double(r.t_s) << ',' << format_double(r.ocean_m) << ','
            << format_double(r.lagoon_m) << ',' << format_double(r.turbine_flow_m3s) << ','
            << format_double(r.sluice_flow_m3s) << ',' << format_double(r.power_w) << ','
            << turbine_mode_name(r.turbine_mode) << ',' << format_double(r.sluice_fraction)
            << "\n";
    }
}

} // namespace lagoon
