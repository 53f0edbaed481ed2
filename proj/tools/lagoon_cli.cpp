// lagoon: command-line driver for the tidal-range-structure operation toolkit.
//
// Subcommands: tide (synth | ingest), simulate, optimize, train, evaluate,
// compare. Exit codes: 0 success, 2 usage or input error, 3 artifact
// incompatibility (e.g. checkpoint version mismatch). File formats are
// documented in FORMATS.md.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lagoon/area_profile.hpp"
#include "lagoon/config.hpp"
#include "lagoon/hydraulics.hpp"
#include "lagoon/optimizers.hpp"
#include "lagoon/rl_env.hpp"
#include "lagoon/rl_policy.hpp"
#include "lagoon/rl_ppo.hpp"
#include "lagoon/schemes.hpp"
#include "lagoon/simulation.hpp"
#include "lagoon/tides.hpp"

namespace {

using nlohmann::json;

std::string basename_of(const std::string& path) {
    return std::filesystem::path(path).filename().string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << text;
}

void write_json_file(const std::string& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

/// Effective-settings fingerprint embedded in every output.
std::string hash_of(lagoon::KeyValueConfig& cfg) { return cfg.hash(); }

lagoon::SimConfig load_sim_config(const std::string& plant_config_path,
                                  lagoon::KeyValueConfig& effective) {
    effective = plant_config_path.empty()
                    ? lagoon::KeyValueConfig{}
                    : lagoon::KeyValueConfig::from_file(plant_config_path);
    auto sim = lagoon::SimConfig::from_config(effective);
    effective.finish();
    return sim;
}

lagoon::TideSeries load_tide_csv(const std::string& path) {
    return lagoon::ingest_gauge(path, lagoon::GaugeFormat::Csv);
}

json run_summary(const std::string& kind, const std::string& method, const std::string& tide,
                 double energy_gwh, double capacity_factor, const std::string& config_hash,
                 std::uint64_t seed) {
    json j;
    j["format_version"] = 1;
    j["kind"] = kind;
    j["method"] = method;
    j["tide"] = tide;
    j["total_energy_gwh"] = energy_gwh;
    j["capacity_factor"] = capacity_factor;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["tool_version"] = lagoon::kToolVersion;
    return j;
}

double capacity_factor(const lagoon::SimConfig& sim, double energy_wh, double span_s) {
    const double rated_w = sim.rated_power_w * sim.turbine.count;
    const double hours = span_s / 3600.0;
    if (rated_w <= 0.0 || hours <= 0.0) return 0.0;
    return energy_wh / (rated_w * hours);
}

// ---------------------------------------------------------------------------
// tide
// ---------------------------------------------------------------------------

struct TideSynthArgs {
    double months = 1.0;
    double dt_s = 60.0;
    std::uint64_t seed = 0;
    bool zero_phases = false;
    std::string constituents_csv;
    std::string out;
};

std::vector<lagoon::Constituent> load_constituents(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open constituents file: " + path);
    std::vector<lagoon::Constituent> cs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        lagoon::Constituent c;
        const int got = std::sscanf(line.c_str(), "%lf,%lf,%lf", &c.amplitude_m, &c.period_hr,
                                    &c.phase_rad);
        if (got < 2)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected `amplitude_m,period_hr[,phase_rad]`");
        cs.push_back(c);
    }
    if (cs.empty()) throw std::runtime_error(path + ": no constituents");
    return cs;
}

void cmd_tide_synth(const TideSynthArgs& a) {
    auto cs = a.constituents_csv.empty() ? lagoon::default_constituents()
                                         : load_constituents(a.constituents_csv);
    if (!a.zero_phases) {
        const auto phases = lagoon::random_phases(a.seed);
        cs = lagoon::constituents_with_phases(std::move(cs), phases);
    }
    const double span_s = a.months * lagoon::kDaysPerMonth * 86400.0;
    const auto series = lagoon::synthesize(cs, span_s, a.dt_s);

    lagoon::KeyValueConfig eff;
    eff.set("months", lagoon::format_double(a.months));
    eff.set("dt_s", lagoon::format_double(a.dt_s));
    eff.set("seed", std::to_string(a.seed));
    eff.set("zero_phases", a.zero_phases ? "true" : "false");
    if (!a.constituents_csv.empty()) eff.set("constituents", basename_of(a.constituents_csv));

    std::map<std::string, std::string> preamble{
        {"config_hash", hash_of(eff)},
        {"seed", std::to_string(a.seed)},
        {"tool_version", lagoon::kToolVersion},
    };
    lagoon::write_tide_csv(series, a.out, preamble);
    std::cout << "wrote " << series.size() << " samples to " << a.out << "\n";
}

struct TideIngestArgs {
    std::string input;
    std::string format = "bodc";
    double datum_m = 0.0;
    double min_good = 1.0;
    std::string out;
};

void cmd_tide_ingest(const TideIngestArgs& a) {
    const auto fmt = a.format == "bodc" ? lagoon::GaugeFormat::BodcAscii
                     : a.format == "csv"
                         ? lagoon::GaugeFormat::Csv
                         : throw std::runtime_error("unknown format: " + a.format);
    const auto series = lagoon::ingest_gauge(a.input, fmt, a.datum_m);
    const double good = series.good_fraction();
    if (good < a.min_good - 1e-12)
        throw std::runtime_error(a.input + ": only " + lagoon::format_double(good * 100.0) +
                                 "% of samples are flagged good (threshold " +
                                 lagoon::format_double(a.min_good * 100.0) + "%)");
    lagoon::KeyValueConfig eff;
    eff.set("format", a.format);
    eff.set("datum_m", lagoon::format_double(a.datum_m));
    eff.set("min_good", lagoon::format_double(a.min_good));
    std::map<std::string, std::string> preamble{
        {"config_hash", hash_of(eff)},
        {"seed", "0"},
        {"source", basename_of(a.input)},
        {"tool_version", lagoon::kToolVersion},
    };
    lagoon::write_tide_csv(series, a.out, preamble);
    std::cout << "wrote " << series.size() << " samples (" << good * 100.0 << "% good) to "
              << a.out << "\n";
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string tide;
    std::string scheme = "classic";
    std::vector<double> heads;
    std::string schedule_file;
    std::string plant_config;
    double smooth_s = 1800.0;
    double max_gap_s = 0.0;
    std::string out_records;
    std::string out_summary;
};

void cmd_simulate(const SimulateArgs& a) {
    lagoon::KeyValueConfig eff;
    const auto sim_cfg = load_sim_config(a.plant_config, eff);
    const auto tide = load_tide_csv(a.tide);

    lagoon::HeadSchedule schedule;
    std::string method;
    if (!a.schedule_file.empty()) {
        if (!a.heads.empty())
            throw std::runtime_error("--schedule and --heads are mutually exclusive");
        schedule = lagoon::HeadSchedule::load(a.schedule_file);
        method = "schedule:" + basename_of(a.schedule_file);
    } else if (a.scheme == "classic") {
        if (a.heads.size() != 2)
            throw std::runtime_error("classic scheme takes exactly 2 heads: h_start,h_min");
        schedule = lagoon::HeadSchedule::constant_classic(a.heads[0], a.heads[1]);
        method = "classic(" + lagoon::format_double(a.heads[0]) + "," +
                 lagoon::format_double(a.heads[1]) + ")";
    } else if (a.scheme == "variant") {
        if (a.heads.size() != 3)
            throw std::runtime_error(
                "variant scheme takes exactly 3 heads: h_start,h_min,hs_start");
        schedule =
            lagoon::HeadSchedule::constant_variant(a.heads[0], a.heads[1], a.heads[2]);
        method = "variant(" + lagoon::format_double(a.heads[0]) + "," +
                 lagoon::format_double(a.heads[1]) + "," +
                 lagoon::format_double(a.heads[2]) + ")";
    } else {
        throw std::runtime_error("unknown scheme: " + a.scheme +
                                 " (expected classic or variant)");
    }

    const auto half_tides = lagoon::segment_half_tides(tide, a.smooth_s);
    schedule.validate(schedule.constant ? 0 : half_tides.size());
    auto ctl = std::make_shared<lagoon::SchemeController>(
        schedule, lagoon::half_tide_boundaries_s(half_tides, tide.dt_s), sim_cfg.hold_eps_m);
    const auto result = lagoon::run(sim_cfg, tide, lagoon::make_controller(ctl),
                                    !a.out_records.empty(), a.max_gap_s);

    eff.set("scheme", schedule.variant ? "variant" : "classic");
    eff.set("method", method);
    eff.set("smooth_s", lagoon::format_double(a.smooth_s));
    const std::string config_hash = hash_of(eff);

    if (!a.out_records.empty()) {
        std::ofstream out(a.out_records);
        if (!out) throw std::runtime_error("cannot write: " + a.out_records);
        lagoon::write_records_csv(result.records, out,
                                  {{"config_hash", config_hash},
                                   {"seed", "0"},
                                   {"tool_version", lagoon::kToolVersion}});
    }
    const double energy_gwh = result.energy_wh / 1e9;
    const auto summary =
        run_summary("simulate", method, basename_of(a.tide), energy_gwh,
                    capacity_factor(sim_cfg, result.energy_wh, tide.span_s()), config_hash, 0);
    if (!a.out_summary.empty()) write_json_file(a.out_summary, summary);
    std::cout << method << ": " << energy_gwh << " GWh over " << tide.span_s() / 86400.0
              << " days\n";
}

// ---------------------------------------------------------------------------
// optimize
// ---------------------------------------------------------------------------

struct OptimizeArgs {
    std::string baseline = "CH";
    std::string pred;
    std::string measured;
    std::string plant_config;
    lagoon::BaselineConfig cfg;
    std::string out_report;
    std::string out_schedule;
};

void cmd_optimize(const OptimizeArgs& a, int threads) {
    lagoon::KeyValueConfig eff;
    const auto sim_cfg = load_sim_config(a.plant_config, eff);
    const auto kind = lagoon::baseline_from_name(a.baseline);
    const auto measured = load_tide_csv(a.measured);
    const bool perfect = a.pred.empty();
    lagoon::TideSeries pred_storage;
    if (!perfect) pred_storage = load_tide_csv(a.pred);
    const lagoon::TideSeries& prediction = perfect ? measured : pred_storage;

    auto cfg = a.cfg;
    cfg.threads = threads;
    auto report = lagoon::run_baseline(kind, sim_cfg, prediction, measured, cfg);

    eff.set("baseline", lagoon::baseline_name(kind));
    eff.set("seed", std::to_string(cfg.seed));
    eff.set("grid_initial_res_m", lagoon::format_double(cfg.initial_res_m));
    eff.set("grid_final_res_m", lagoon::format_double(cfg.final_res_m));
    eff.set("bh_iterations", std::to_string(cfg.bh_iterations));
    eff.set("bh_step_m", lagoon::format_double(cfg.bh_step_m));
    eff.set("smooth_s", lagoon::format_double(cfg.smooth_window_s));
    const std::string config_hash = hash_of(eff);

    json j = report.to_json();
    j["config_hash"] = config_hash;
    j["tool_version"] = lagoon::kToolVersion;
    j["method"] = lagoon::baseline_name(kind);
    j["tide"] = basename_of(a.measured);
    j["total_energy_gwh"] = report.applied_energy_gwh;
    if (!a.out_report.empty()) write_json_file(a.out_report, j);
    if (!a.out_schedule.empty()) report.schedule.save(a.out_schedule);
    std::cout << lagoon::baseline_name(kind) << ": predicted " << report.predicted_energy_gwh
              << " GWh, applied " << report.applied_energy_gwh << " GWh ("
              << report.evaluations << " evaluations, " << report.wall_time_s << " s)\n";
}

// ---------------------------------------------------------------------------
// train / evaluate
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config_file;
    std::string out_dir;
    std::int64_t seed_override = -1;
    std::int64_t max_steps_override = -1;
};

void cmd_train(const TrainArgs& a) {
    auto cfg = a.config_file.empty() ? lagoon::KeyValueConfig{}
                                     : lagoon::KeyValueConfig::from_file(a.config_file);
    if (a.seed_override >= 0) cfg.set("seed", std::to_string(a.seed_override));
    if (a.max_steps_override >= 0)
        cfg.set("max_steps", std::to_string(a.max_steps_override));
    auto env_cfg = lagoon::EnvConfig::from_config(cfg);
    auto ppo_cfg = lagoon::PpoConfig::from_config(cfg);
    cfg.finish();

    auto echo = cfg.items();
    echo["config_hash"] = cfg.hash();

    lagoon::PpoTrainer trainer(ppo_cfg, env_cfg, echo);
    const auto t0 = std::chrono::steady_clock::now();
    trainer.train(a.out_dir);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trainer.make_checkpoint().save(a.out_dir + "/checkpoint_final.json");
    std::cout << "trained " << trainer.steps_done() << " steps in " << secs << " s; curve and "
              << "checkpoints in " << a.out_dir << "\n";
}

struct EvaluateArgs {
    std::string checkpoint;
    std::string tide;
    std::string plant_config;
    double max_gap_s = 0.0;
    std::string out_records;
    std::string out_summary;
};

void cmd_evaluate(const EvaluateArgs& a) {
    const auto cp = lagoon::Checkpoint::load(a.checkpoint);
    const auto net = cp.to_net();

    // Rebuild the environment the checkpoint was trained with; an explicit
    // plant config overrides the echo.
    lagoon::KeyValueConfig eff;
    if (!a.plant_config.empty()) {
        eff = lagoon::KeyValueConfig::from_file(a.plant_config);
    } else {
        for (const auto& [k, v] : cp.config_echo)
            if (k != "config_hash") eff.set(k, v);
    }
    auto env_cfg = lagoon::EnvConfig::from_config(eff);
    if (a.plant_config.empty()) {
        // Training-only keys in the echo are not errors here.
        lagoon::PpoConfig::from_config(eff);
    }
    eff.finish();
    env_cfg.level_scale_m = cp.level_scale_m;
    env_cfg.count_scale = cp.count_scale;

    auto tide = load_tide_csv(a.tide);
    lagoon::detail::check_gaps(tide, a.max_gap_s);
    if (std::abs(tide.dt_s - env_cfg.sim.dt_s) > 1e-9)
        tide = lagoon::resample(tide, env_cfg.sim.dt_s);

    const auto result = lagoon::evaluate_policy(
        net, env_cfg, std::make_unique<lagoon::SeriesStream>(&tide), !a.out_records.empty());

    eff.set("checkpoint", basename_of(a.checkpoint));
    eff.set("steps_trained", std::to_string(cp.steps_trained));
    const std::string config_hash = hash_of(eff);
    if (!a.out_records.empty()) {
        std::ofstream out(a.out_records);
        if (!out) throw std::runtime_error("cannot write: " + a.out_records);
        lagoon::write_records_csv(result.records, out,
                                  {{"config_hash", config_hash},
                                   {"seed", std::to_string(cp.seed)},
                                   {"tool_version", lagoon::kToolVersion}});
    }
    const double energy_gwh = result.energy_wh / 1e9;
    const double span_s =
        static_cast<double>(result.mdp_steps) *
        static_cast<double>(env_cfg.physics_per_mdp) * env_cfg.sim.dt_s;
    const auto summary =
        run_summary("evaluate", "ppo", basename_of(a.tide), energy_gwh,
                    capacity_factor(env_cfg.sim, result.energy_wh, span_s), config_hash,
                    cp.seed);
    if (!a.out_summary.empty()) write_json_file(a.out_summary, summary);
    std::cout << "ppo: " << energy_gwh << " GWh over " << result.mdp_steps
              << " control steps\n";
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

struct CompareArgs {
    std::vector<std::string> summaries;
    std::string out;
};

void cmd_compare(const CompareArgs& a) {
    struct Row {
        std::string method, source;
        double energy_gwh = 0.0;
    };
    std::vector<Row> rows;
    for (const auto& path : a.summaries) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open summary: " + path);
        json j;
        in >> j;
        Row r;
        r.method = j.contains("method") ? j.at("method").get<std::string>()
                   : j.contains("kind") ? j.at("kind").get<std::string>()
                                        : basename_of(path);
        r.source = j.value("tide", basename_of(path));
        if (j.contains("total_energy_gwh"))
            r.energy_gwh = j.at("total_energy_gwh").get<double>();
        else if (j.contains("applied_energy_gwh"))
            r.energy_gwh = j.at("applied_energy_gwh").get<double>();
        else
            throw std::runtime_error(path + ": no energy field found");
        rows.push_back(std::move(r));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) {
        return x.method < y.method;
    });

    std::string csv = "method,source,energy_gwh\n";
    for (const auto& r : rows)
        csv += r.method + "," + r.source + "," + lagoon::format_double(r.energy_gwh) + "\n";
    // Footer: per-method mean and population standard deviation across months.
    for (std::size_t i = 0; i < rows.size();) {
        std::size_t j = i;
        double sum = 0.0;
        while (j < rows.size() && rows[j].method == rows[i].method) sum += rows[j++].energy_gwh;
        const double n = static_cast<double>(j - i);
        const double mean = sum / n;
        double var = 0.0;
        for (std::size_t k = i; k < j; ++k)
            var += (rows[k].energy_gwh - mean) * (rows[k].energy_gwh - mean) / n;
        csv += "mean," + rows[i].method + "," + lagoon::format_double(mean) + "\n";
        csv += "std," + rows[i].method + "," + lagoon::format_double(std::sqrt(var)) + "\n";
        i = j;
    }
    if (a.out.empty())
        std::cout << csv;
    else
        write_text(a.out, csv);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"lagoon: tidal-range-structure operation toolkit"};
    app.require_subcommand(1);
    int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    app.add_option("--threads", threads,
                   "worker threads (1 = bitwise-reproducible runs)")
        ->capture_default_str();

    // tide
    auto* tide = app.add_subcommand("tide", "synthesize or ingest ocean series");
    tide->require_subcommand(1);
    TideSynthArgs synth_args;
    auto* synth = tide->add_subcommand("synth", "harmonic synthesis to CSV");
    synth->add_option("--months", synth_args.months, "31-day months to generate")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    synth->add_option("--dt", synth_args.dt_s, "sample interval, s")->capture_default_str();
    synth->add_option("--seed", synth_args.seed, "phase-lag seed")->capture_default_str();
    synth->add_flag("--zero-phases", synth_args.zero_phases, "all phase lags 0");
    synth->add_option("--constituents", synth_args.constituents_csv,
                      "CSV of amplitude_m,period_hr[,phase_rad] (default: Swansea set)");
    synth->add_option("--out", synth_args.out, "output tide CSV")->required();
    synth->callback([&] { cmd_tide_synth(synth_args); });

    TideIngestArgs ingest_args;
    auto* ingest = tide->add_subcommand("ingest", "parse a gauge file to CSV");
    ingest->add_option("input", ingest_args.input, "gauge file")->required();
    ingest->add_option("--format", ingest_args.format, "bodc | csv")->capture_default_str();
    ingest->add_option("--datum", ingest_args.datum_m, "datum offset subtracted, m")
        ->capture_default_str();
    ingest->add_option("--min-good", ingest_args.min_good,
                       "minimum usable fraction of good samples")
        ->capture_default_str();
    ingest->add_option("--out", ingest_args.out, "output tide CSV")->required();
    ingest->callback([&] { cmd_tide_ingest(ingest_args); });

    // simulate
    SimulateArgs sim_args;
    auto* sim = app.add_subcommand("simulate", "run a head-threshold scheme over a tide");
    sim->add_option("--tide", sim_args.tide, "tide CSV")->required();
    sim->add_option("--scheme", sim_args.scheme, "classic | variant")->capture_default_str();
    sim->add_option("--heads", sim_args.heads,
                    "h_start,h_min[,hs_start] for a constant schedule")
        ->delimiter(',');
    sim->add_option("--schedule", sim_args.schedule_file, "schedule JSON (per half-tide)");
    sim->add_option("--plant-config", sim_args.plant_config, "plant key=value file");
    sim->add_option("--smooth", sim_args.smooth_s, "half-tide smoothing window, s")
        ->capture_default_str();
    sim->add_option("--max-gap", sim_args.max_gap_s, "largest tolerated bad-sample gap, s")
        ->capture_default_str();
    sim->add_option("--out-records", sim_args.out_records, "per-step CSV");
    sim->add_option("--out-summary", sim_args.out_summary, "run summary JSON");
    sim->callback([&] { cmd_simulate(sim_args); });

    // optimize
    OptimizeArgs opt_args;
    auto* opt = app.add_subcommand("optimize", "fit a baseline schedule");
    opt->add_option("--baseline", opt_args.baseline, "CH | CHV | EHT | EHTV | EHN | EHNV")
        ->capture_default_str();
    opt->add_option("--measured", opt_args.measured, "measured tide CSV")->required();
    opt->add_option("--pred", opt_args.pred,
                    "prediction tide CSV (defaults to --measured: perfect forecast)");
    opt->add_option("--plant-config", opt_args.plant_config, "plant key=value file");
    opt->add_option("--seed", opt_args.cfg.seed, "search seed")->capture_default_str();
    opt->add_option("--smooth", opt_args.cfg.smooth_window_s, "segmentation window, s")
        ->capture_default_str();
    opt->add_option("--grid-initial-res", opt_args.cfg.initial_res_m, "m")
        ->capture_default_str();
    opt->add_option("--grid-final-res", opt_args.cfg.final_res_m, "m")->capture_default_str();
    opt->add_option("--bh-iterations", opt_args.cfg.bh_iterations, "basin-hopping iterations")
        ->capture_default_str();
    opt->add_option("--bh-step", opt_args.cfg.bh_step_m, "basin-hopping step scale, m")
        ->capture_default_str();
    opt->add_option("--bh-temp-frac", opt_args.cfg.bh_temp_frac,
                    "Metropolis temperature as a fraction of |best|")
        ->capture_default_str();
    opt->add_option("--out-report", opt_args.out_report, "optimization report JSON");
    opt->add_option("--out-schedule", opt_args.out_schedule, "schedule JSON");
    opt->callback([&] { cmd_optimize(opt_args, threads); });

    // train
    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "train the PPO agent on synthetic tides");
    train->add_option("--config", train_args.config_file, "key=value training config");
    train->add_option("--out-dir", train_args.out_dir, "output directory")->required();
    train->add_option("--seed", train_args.seed_override, "override config seed");
    train->add_option("--max-steps", train_args.max_steps_override,
                      "override config max_steps");
    train->callback([&] { cmd_train(train_args); });

    // evaluate
    EvaluateArgs eval_args;
    auto* eval = app.add_subcommand("evaluate", "run a checkpoint over a tide");
    eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint JSON")->required();
    eval->add_option("--tide", eval_args.tide, "tide CSV (resampled to the physics step)")
        ->required();
    eval->add_option("--plant-config", eval_args.plant_config,
                     "override the checkpoint's environment config");
    eval->add_option("--max-gap", eval_args.max_gap_s, "largest tolerated bad-sample gap, s")
        ->capture_default_str();
    eval->add_option("--out-records", eval_args.out_records, "per-step CSV");
    eval->add_option("--out-summary", eval_args.out_summary, "run summary JSON");
    eval->callback([&] { cmd_evaluate(eval_args); });

    // compare
    CompareArgs cmp_args;
    auto* cmp = app.add_subcommand("compare", "join run summaries into an energy table");
    cmp->add_option("summaries", cmp_args.summaries, "summary/report JSON files")
        ->expected(2, -1);
    cmp->add_option("--out", cmp_args.out, "output CSV (default stdout)");
    cmp->callback([&] { cmd_compare(cmp_args); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const lagoon::CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
