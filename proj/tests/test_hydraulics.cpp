#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lagoon/hydraulics.hpp"

using namespace lagoon;

namespace {
// Hand-evaluated chain for the Swansea design point at 4 m head, frozen as
// the reference for the parametrization.
constexpr double kSp = 63.1578947368421;
constexpr double kN11At4m = 232.1052631578947;
constexpr double kQ11At4m = 4.339047368421053;
constexpr double kQtAt4m = 468.8123729210526;
constexpr double kEfAt4m = 0.8051;
constexpr double kCE = 0.8466585344999998;
constexpr double kPowerEbb4m = 12840624.250436958;
constexpr double kPowerFlood4m = 11556561.825393263;
} // namespace

TEST_CASE("synchronous speed from grid frequency and pole count") {
    TurbinePlant plant;
    CHECK_THAT(plant.rotation_rpm(), Catch::Matchers::WithinRel(kSp, 1e-12));
}

TEST_CASE("design-point chain at 4 m head") {
    TurbinePlant plant;
    HillChart chart;
    EfficiencyChain eff;

    const double n11 = unit_speed(plant, -4.0); // ebb: lagoon above ocean
    CHECK_THAT(n11, Catch::Matchers::WithinRel(kN11At4m, 1e-12));
    CHECK_THAT(chart.q11(n11), Catch::Matchers::WithinRel(kQ11At4m, 1e-12));
    CHECK_THAT(chart.ef(n11), Catch::Matchers::WithinRel(kEfAt4m, 1e-12));
    CHECK_THAT(eff.combined(), Catch::Matchers::WithinRel(kCE, 1e-12));

    const auto ebb = turbine_flow_power(plant, chart, eff, -4.0);
    CHECK_THAT(std::abs(ebb.flow_m3s), Catch::Matchers::WithinRel(kQtAt4m, 1e-12));
    CHECK(ebb.flow_m3s < 0.0); // flow follows the head out of the lagoon
    CHECK_THAT(ebb.power_w, Catch::Matchers::WithinRel(kPowerEbb4m, 1e-12));

    const auto flood = turbine_flow_power(plant, chart, eff, 4.0);
    CHECK(flood.flow_m3s > 0.0);
    CHECK_THAT(flood.power_w, Catch::Matchers::WithinRel(kPowerFlood4m, 1e-12));
}

TEST_CASE("hill chart discharge caps above the knee") {
    HillChart chart;
    CHECK_THAT(chart.q11(254.999), Catch::Matchers::WithinAbs(0.0166 * 254.999 + 0.4861, 1e-9));
    CHECK(chart.q11(255.0) <= 4.7191);
    CHECK(chart.q11(255.001) == 4.75);
    CHECK(chart.q11(400.0) == 4.75);
}

TEST_CASE("efficiency clamps to [0, 1]") {
    HillChart chart;
    CHECK(chart.ef(1000.0) == 0.0);  // far past the fitted range
    CHECK(chart.ef(0.0) == 1.0);     // intercept 1.2461 clamps down
    HillChart raw = chart;
    raw.ef_clamp = false;
    CHECK(raw.ef(0.0) > 1.0);
}

TEST_CASE("generation below the minimum head is a contract violation") {
    TurbinePlant plant;
    HillChart chart;
    EfficiencyChain eff;
    CHECK_THROWS_AS(turbine_flow_power(plant, chart, eff, 0.5), std::domain_error);
    CHECK_THROWS_AS(turbine_flow_power(plant, chart, eff, -0.999), std::domain_error);
    CHECK_NOTHROW(turbine_flow_power(plant, chart, eff, 1.0));
    CHECK_THROWS_AS(unit_speed(plant, 0.0), std::domain_error);
}

TEST_CASE("orifice flow is signed and total") {
    CHECK(orifice_flow(800.0, 1.0, 0.0) == 0.0);
    const double q4 = orifice_flow(800.0, 1.0, 4.0);
    CHECK_THAT(q4, Catch::Matchers::WithinRel(7087.115068912033, 1e-12));
    CHECK_THAT(orifice_flow(800.0, 1.0, -4.0), Catch::Matchers::WithinRel(-q4, 1e-12));
    // quadrupled head doubles the flow
    CHECK_THAT(orifice_flow(800.0, 1.0, 1.0) * 2.0, Catch::Matchers::WithinRel(q4, 1e-12));
}

TEST_CASE("idling turbines default to the runner swept area") {
    TurbinePlant plant;
    CHECK_THAT(plant.idle_flow_area_m2(),
               Catch::Matchers::WithinRel(42.429172282138644, 1e-12));
    const double q = orifice_flow(plant.idle_flow_area_m2(), plant.idle_cd, 4.0);
    CHECK_THAT(q, Catch::Matchers::WithinRel(511.1907246117563, 1e-12));
    plant.idle_area_m2 = 30.0; // config override
    CHECK(plant.idle_flow_area_m2() == 30.0);
}

TEST_CASE("momentum ramp closes a fixed fraction of the gap per step") {
    RampState s;
    s.zeta = 0.4;
    s.flow_m3s = 0.0;
    s = ramp_step(s, 1000.0);
    CHECK_THAT(s.flow_m3s, Catch::Matchers::WithinRel(600.0, 1e-12));

    SECTION("fixed point: at the target it stays there") {
        s.flow_m3s = 1000.0;
        s = ramp_step(s, 1000.0);
        CHECK(s.flow_m3s == 1000.0);
    }

    SECTION("geometric error decay at ratio zeta") {
        // The residual is recovered by subtraction from the target, so the
        // ratio picks up cancellation noise as the gap shrinks towards the
        // rounding floor; 1e-9 still separates 0.4 from any other retention.
        s.flow_m3s = 0.0;
        double err_prev = 1000.0;
        for (int k = 0; k < 15; ++k) {
            s = ramp_step(s, 1000.0);
            const double err = 1000.0 - s.flow_m3s;
            CHECK_THAT(err / err_prev, Catch::Matchers::WithinAbs(0.4, 1e-9));
            err_prev = err;
        }
        CHECK_THAT(err_prev / 1000.0,
                   Catch::Matchers::WithinAbs(1.073741824e-06, 1e-12));
    }

    SECTION("sign reversal is handled like any other target") {
        s.flow_m3s = 500.0;
        s = ramp_step(s, -500.0);
        CHECK_THAT(s.flow_m3s, Catch::Matchers::WithinRel(-100.0, 1e-12));
    }
}

TEST_CASE("plant validation rejects nonsense") {
    TurbinePlant plant;
    plant.poles = 0;
    CHECK_THROWS_AS(plant.validate(), std::invalid_argument);
    plant = TurbinePlant{};
    plant.diameter_m = -1.0;
    CHECK_THROWS_AS(plant.validate(), std::invalid_argument);
    CHECK_NOTHROW(TurbinePlant{}.validate());
}
