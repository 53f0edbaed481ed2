#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lagoon {

inline constexpr double kSeawaterDensity = 1024.0; // kg/m^3
inline constexpr double kGravity = 9.81;           // m/s^2

/// Head sign convention used everywhere: He = ocean - lagoon.
/// Positive head drives flow into the lagoon (flood direction).

/// Bulb turbine unit parameters for the Swansea design.
struct TurbinePlant {
    double diameter_m = 7.35;
    int poles = 95;
    double grid_hz = 50.0;
    int count = 16;
    double h_mt_m = 1.0;   // minimum generating head
    double idle_cd = 1.36; // discharge coefficient when idling
    // Flow area of an idling turbine. <= 0 selects the runner swept area
    // pi*(D/2)^2; a positive value overrides it.
    double idle_area_m2 = -1.0;

    double rotation_rpm() const { return 120.0 * grid_hz / static_cast<double>(poles); }

    double idle_flow_area_m2() const {
        if (idle_area_m2 > 0.0) return idle_area_m2;
        const double r = 0.5 * diameter_m;
        return M_PI * r * r;
    }

    void validate() const {
        if (diameter_m <= 0.0) throw std::invalid_argument("TurbinePlant: diameter_m must be > 0");
        if (poles <= 0) throw std::invalid_argument("TurbinePlant: poles must be > 0");
        if (grid_hz <= 0.0) throw std::invalid_argument("TurbinePlant: grid_hz must be > 0");
        if (count < 0) throw std::invalid_argument("TurbinePlant: count must be >= 0");
        if (h_mt_m < 0.0) throw std::invalid_argument("TurbinePlant: h_mt_m must be >= 0");
        if (idle_cd <= 0.0) throw std::invalid_argument("TurbinePlant: idle_cd must be > 0");
    }
};

/// Linearized maximum-power-output curve of the Andritz hill chart.
/// Q11 is piecewise with a deliberate jump at the cap threshold; Ef is the
/// linear efficiency fit, clamped to [0,1] since the fit exceeds 1 for
/// unit speeds below ~129.5 (heads far beyond the Swansea tidal range).
struct HillChart {
    double q11_slope = 0.0166;
    double q11_intercept = 0.4861;
    double q11_cap = 4.75;
    double n11_cap_threshold = 255.0;
    double ef_slope = -0.0019;
    double ef_intercept = 1.2461;
    bool ef_clamp = true;

    double q11(double n11) const {
        if (n11 > n11_cap_threshold) return q11_cap;
        return q11_slope * n11 + q11_intercept;
    }

    double ef(double n11) const {
        double e = ef_slope * n11 + ef_intercept;
        if (ef_clamp) e = std::clamp(e, 0.0, 1.0);
        return e;
    }

    void validate() const {
        if (q11_cap <= 0.0) throw std::invalid_argument("HillChart: q11_cap must be > 0");
        if (n11_cap_threshold <= 0.0)
            throw std::invalid_argument("HillChart: n11_cap_threshold must be > 0");
    }
};

/// Fixed plant-side efficiencies multiplied into the power output.
struct EfficiencyChain {
    double generator = 0.97;
    double transformer = 0.995;
    double water_friction = 0.95;
    double drivetrain = 0.972;
    double availability = 0.95;
    double flood_orientation = 0.90; // applied only when the head is flood-directed

    double combined() const {
        return generator * transformer * water_friction * drivetrain * availability;
    }

    void validate() const {
        for (double f : {generator, transformer, water_friction, drivetrain, availability,
                         flood_orientation}) {
            if (!(f > 0.0 && f <= 1.0))
                throw std::invalid_argument("EfficiencyChain: factors must lie in (0, 1]");
        }
    }
};

struct SluiceBank {
    double area_m2 = 800.0;
    double cd = 1.0;

    void validate() const {
        if (area_m2 <= 0.0) throw std::invalid_argument("SluiceBank: area_m2 must be > 0");
        if (cd <= 0.0) throw std::invalid_argument("SluiceBank: cd must be > 0");
    }
};

/// Momentum-ramp state for one structure group (all turbines, or all sluices).
/// Each step the flow moves toward the commanded target, retaining a fraction
/// zeta of the remaining gap: Q' = Qc - zeta * (Qc - Q).
struct RampState {
    double zeta = 0.4;
    double flow_m3s = 0.0;
};

inline RampState ramp_step(RampState state, double target_flow_m3s) {
    state.flow_m3s = target_flow_m3s - state.zeta * (target_flow_m3s - state.flow_m3s);
    return state;
}

/// Unit speed n11 = Sp * D / sqrt(|He|) with Sp = 120 f / Gp.
inline double unit_speed(const TurbinePlant& plant, double head_m) {
    const double h = std::abs(head_m);
    if (h <= 0.0) throw std::domain_error("unit_speed: zero head (gate on h_mt first)");
    return plant.rotation_rpm() * plant.diameter_m / std::sqrt(h);
}

struct TurbineOutput {
    double flow_m3s = 0.0; // signed, per turbine; sign follows the head
    double power_w = 0.0;  // per turbine, >= 0
};

/// Flow and power of a single generating turbine at head He.
/// Only valid at |He| >= h_mt; below that the turbine cannot generate and the
/// caller must fall back to idle or zero flow.
inline TurbineOutput turbine_flow_power(const TurbinePlant& plant, const HillChart& chart,
                                        const EfficiencyChain& eff, double head_m) {
    const double h = std::abs(head_m);
    if (h < plant.h_mt_m)
        throw std::domain_error("turbine_flow_power: |head| below minimum generating head");
    const double n11 = unit_speed(plant, head_m);
    const double q = chart.q11(n11) * plant.diameter_m * plant.diameter_m * std::sqrt(h);
    double p = kSeawaterDensity * kGravity * q * h * chart.ef(n11) * eff.combined();
    if (head_m > 0.0) p *= eff.flood_orientation;
    TurbineOutput out;
    out.flow_m3s = head_m >= 0.0 ? q : -q;
    out.power_w = std::abs(p);
    return out;
}

/// Orifice flow Q = Cd * A * sqrt(2 g |He|), signed by the head. Total on the
/// full real line; zero head or zero area gives zero flow.
inline double orifice_flow(double area_m2, double cd, double head_m) {
    if (area_m2 < 0.0) throw std::invalid_argument("orifice_flow: negative area");
    const double h = std::abs(head_m);
    const double q = cd * area_m2 * std::sqrt(2.0 * kGravity * h);
    return head_m >= 0.0 ? q : -q;
}

} // namespace lagoon
