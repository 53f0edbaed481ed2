#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "lagoon/rng.hpp"
#include "lagoon/schemes.hpp"

using namespace lagoon;

namespace {

SimConfig desk_config() {
    SimConfig cfg;
    cfg.area = AreaProfile::constant(11.5e6);
    return cfg;
}

TideSeries month_tide(std::uint64_t seed, double days = 3.0) {
    const auto cs = constituents_with_phases(default_constituents(), random_phases(seed));
    return synthesize(cs, days * 86400.0, 60.0);
}

ControlInput at_head(double abs_head, double t_s = 0.0) {
    return ControlInput{t_s, abs_head, 0.0};
}

} // namespace

TEST_CASE("stage transitions fire at threshold equality") {
    SchemeController ctl(HeadSchedule::constant_classic(2.0, 1.0), {0.0});

    REQUIRE(ctl.stage() == Stage::Holding);
    CHECK(ctl(at_head(1.999)) == StructureCommand{TurbineMode::Off, 0.0});
    CHECK(ctl.stage() == Stage::Holding);

    CHECK(ctl(at_head(2.0)) == StructureCommand{TurbineMode::Generate, 0.0});
    CHECK(ctl.stage() == Stage::Generating);

    CHECK(ctl(at_head(1.001)) == StructureCommand{TurbineMode::Generate, 0.0});
    CHECK(ctl(at_head(1.0)) == StructureCommand{TurbineMode::Idle, 1.0});
    CHECK(ctl.stage() == Stage::Sluicing);

    CHECK(ctl(at_head(0.051)) == StructureCommand{TurbineMode::Idle, 1.0});
    CHECK(ctl(at_head(0.05)) == StructureCommand{TurbineMode::Off, 0.0});
    CHECK(ctl.stage() == Stage::Holding);
}

TEST_CASE("generate is never commanded at or below the cut-out head") {
    // Includes degenerate schedules with h_start < h_min, which a single
    // transition per step would mishandle.
    Rng rng(404);
    const auto tide = month_tide(404, 2.0);
    for (int trial = 0; trial < 12; ++trial) {
        const double h_start = rng.uniform(0.5, 5.0);
        const double h_min = rng.uniform(0.5, 3.0);
        auto ctl = std::make_shared<SchemeController>(
            HeadSchedule::constant_classic(h_start, h_min), std::vector<double>{0.0});
        Simulation sim(desk_config());
        for (std::size_t k = 0; k < tide.size(); ++k) {
            const double t = tide.t_s(k);
            const double ocean = tide.levels_m[k];
            const ControlInput in{t, ocean, sim.state().level_m};
            const auto cmd = (*ctl)(in);
            if (cmd.turbines == TurbineMode::Generate) {
                REQUIRE(std::abs(in.ocean_m - in.lagoon_m) > h_min);
            }
            sim.step(ocean, cmd);
        }
    }
}

TEST_CASE("a plain tidal day walks through all three stages") {
    const auto tide = month_tide(7, 1.5);
    auto ctl = std::make_shared<SchemeController>(HeadSchedule::constant_classic(2.5, 1.0),
                                                  std::vector<double>{0.0});
    const auto result = run(desk_config(), tide, make_controller(ctl));
    bool saw_off = false, saw_gen = false, saw_idle = false;
    for (const auto& rec : result.records) {
        saw_off |= rec.turbine_mode == TurbineMode::Off;
        saw_gen |= rec.turbine_mode == TurbineMode::Generate;
        saw_idle |= rec.turbine_mode == TurbineMode::Idle;
    }
    CHECK(saw_off);
    CHECK(saw_gen);
    CHECK(saw_idle);
    CHECK(result.energy_wh > 0.0);
}

TEST_CASE("variant degenerates to classic when hs_start never exceeds h_min") {
    Rng rng(909);
    const auto tide = month_tide(909, 2.0);
    const auto cfg = desk_config();
    for (int trial = 0; trial < 20; ++trial) {
        const double h_min = rng.uniform(0.6, 3.0);
        const double h_start = rng.uniform(h_min, 6.0);
        const double hs_start = rng.uniform(0.0, h_min);

        auto classic = std::make_shared<SchemeController>(
            HeadSchedule::constant_classic(h_start, h_min), std::vector<double>{0.0});
        auto variant = std::make_shared<SchemeController>(
            HeadSchedule::constant_variant(h_start, h_min, hs_start),
            std::vector<double>{0.0});

        const auto a = run(cfg, tide, make_controller(classic), false);
        const auto b = run(cfg, tide, make_controller(variant), false);
        REQUIRE(a.energy_wh == b.energy_wh); // bit-identical trajectories
        REQUIRE(a.final_state.level_m == b.final_state.level_m);
    }
}

TEST_CASE("variant opens sluices during late generation when allowed to") {
    const auto tide = month_tide(5, 2.0);
    const auto cfg = desk_config();
    auto variant = std::make_shared<SchemeController>(
        HeadSchedule::constant_variant(3.0, 1.0, 2.5), std::vector<double>{0.0});
    const auto result = run(cfg, tide, make_controller(variant));
    bool gen_with_sluice = false;
    for (const auto& rec : result.records) {
        if (rec.turbine_mode == TurbineMode::Generate && rec.sluice_fraction == 1.0)
            gen_with_sluice = true;
    }
    CHECK(gen_with_sluice);
}

TEST_CASE("thresholds swap at half-tide boundaries while the stage persists") {
    // Two half-tides: permissive first triple, unreachable second one.
    auto sched = HeadSchedule::per_half_tide(
        {{1.0, 0.5, 0.0}, {9.0, 0.5, 0.0}}, false);
    SchemeController ctl(sched, {0.0, 1000.0});

    CHECK(ctl(at_head(2.0, 0.0)).turbines == TurbineMode::Generate);
    CHECK(ctl.half_tide_index() == 0);

    // Crossing the boundary keeps the Generating stage even though the new
    // h_start would never have admitted it.
    CHECK(ctl(at_head(2.0, 1000.0)).turbines == TurbineMode::Generate);
    CHECK(ctl.half_tide_index() == 1);

    // But the new h_min now governs the exit.
    CHECK(ctl(at_head(0.5, 1060.0)).turbines == TurbineMode::Idle);

    // A fresh controller in the second half-tide never starts generating.
    SchemeController late(sched, {0.0, 1000.0});
    CHECK(late(at_head(2.0, 1500.0)).turbines == TurbineMode::Off);
}

TEST_CASE("controller reset seeds carried state for windowed runs") {
    SchemeController ctl(HeadSchedule::constant_classic(2.0, 1.0), {0.0});
    ctl.reset(Stage::Sluicing, 0);
    CHECK(ctl(at_head(0.5)).turbines == TurbineMode::Idle);
    ctl.reset(Stage::Generating, 0);
    CHECK(ctl(at_head(1.5)).turbines == TurbineMode::Generate);
}

TEST_CASE("schedules round-trip through json") {
    auto sched = HeadSchedule::per_half_tide(
        {{2.25, 1.5, 3.0}, {1.75, 1.0, 0.5}, {4.0, 2.0, 1.0}}, true);
    const auto j = sched.to_json();
    CHECK(j.at("scheme") == "variant");
    CHECK(j.at("triples").size() == 3);
    CHECK(j.at("triples")[1].at("half_tide") == 1);
    const auto back = HeadSchedule::from_json(j);
    CHECK(back.variant == sched.variant);
    CHECK(back.constant == sched.constant);
    REQUIRE(back.triples == sched.triples);

    const std::string path = "sched_roundtrip.tmp.json";
    sched.save(path);
    const auto loaded = HeadSchedule::load(path);
    std::remove(path.c_str());
    CHECK(loaded.triples == sched.triples);
}

TEST_CASE("classic json omits the variant threshold and reloads with zero") {
    const auto sched = HeadSchedule::constant_classic(2.0, 1.0);
    const auto j = sched.to_json();
    CHECK_FALSE(j.at("triples")[0].contains("hs_start_m"));
    const auto back = HeadSchedule::from_json(j);
    CHECK(back.triples[0].hs_start_m == 0.0);
}

TEST_CASE("schedule validation rejects malformed inputs") {
    auto j = HeadSchedule::constant_classic(2.0, 1.0).to_json();
    j["format_version"] = 99;
    CHECK_THROWS_WITH(HeadSchedule::from_json(j),
                      Catch::Matchers::ContainsSubstring("format_version"));

    HeadSchedule empty;
    empty.triples.clear();
    CHECK_THROWS_AS(empty.validate(), std::invalid_argument);

    auto bad = HeadSchedule::constant_classic(2.0, 1.0);
    bad.triples[0].h_min_m = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    auto counted = HeadSchedule::per_half_tide({{2.0, 1.0, 0.0}}, false);
    CHECK_THROWS_AS(counted.validate(3), std::invalid_argument);
    CHECK_NOTHROW(counted.validate(1));

    CHECK_THROWS_AS(SchemeController(HeadSchedule::constant_classic(2.0, 1.0), {}),
                    std::invalid_argument);
}
