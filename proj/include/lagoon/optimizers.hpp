#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lagoon/rng.hpp"
#include "lagoon/schemes.hpp"
#include "lagoon/simulation.hpp"
#include "lagoon/tides.hpp"

namespace lagoon {

// ---------------------------------------------------------------------------
// Generic search primitives
// ---------------------------------------------------------------------------

struct SearchBox {
    double lo = 0.0;
    double hi = 0.0;
};

/// H_start in [1,6], H_min in [1,3].
inline std::vector<SearchBox> classic_box() { return {{1.0, 6.0}, {1.0, 3.0}}; }
/// H_start, H_min, HS_start in [1,5].
inline std::vector<SearchBox> variant_box() {
    return {{1.0, 6.0}, {1.0, 3.0}, {1.0, 5.0}};
}

inline double clip(double x, const SearchBox& b) { return std::min(std::max(x, b.lo), b.hi); }

inline std::vector<double> clip(std::vector<double> x, const std::vector<SearchBox>& box) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = clip(x[i], box[i]);
    return x;
}

using Objective = std::function<double(const std::vector<double>&)>;

/// Runs fn(0..n-1), optionally across threads. Each index owns its output
/// slot, so results are identical for any thread count.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const auto nthreads = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    std::atomic<std::size_t> next{0};
    for (std::size_t w = 0; w < nthreads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

struct GridResult {
    std::vector<double> best_x;
    double best_value = -std::numeric_limits<double>::infinity();
    std::vector<double> pass_bests; // best-so-far after each refinement pass
    std::size_t evaluations = 0;
};

namespace detail {

inline std::vector<double> axis_lattice(const SearchBox& b, double res) {
    std::vector<double> v;
    for (double x = b.lo; x <= b.hi + 1e-9; x += res) v.push_back(std::min(x, b.hi));
    return v;
}

inline std::vector<double> axis_neighborhood(double center, double prev_res, double res,
                                             const SearchBox& b) {
    std::vector<double> v;
    for (double off = -prev_res; off <= prev_res + 1e-12; off += res)
        v.push_back(clip(center + off, b));
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end(),
                        [](double a, double c) { return std::abs(a - c) < 1e-12; }),
            v.end());
    return v;
}

inline std::vector<std::vector<double>> cartesian(const std::vector<std::vector<double>>& axes) {
    std::vector<std::vector<double>> out;
    std::size_t total = 1;
    for (const auto& a : axes) total *= a.size();
    out.reserve(total);
    std::vector<std::size_t> idx(axes.size(), 0);
    for (std::size_t n = 0; n < total; ++n) {
        std::vector<double> p(axes.size());
        for (std::size_t d = 0; d < axes.size(); ++d) p[d] = axes[d][idx[d]];
        out.push_back(std::move(p));
        for (std::size_t d = axes.size(); d-- > 0;) {
            if (++idx[d] < axes[d].size()) break;
            idx[d] = 0;
        }
    }
    return out;
}

} // namespace detail

/// Iteratively refined exhaustive search (maximization). Pass 1 sweeps the
/// whole box at `initial_res`; each later pass halves the resolution and
/// sweeps best +- previous resolution per axis, clipped to the box. Stops
/// after the first pass whose resolution is below `final_res` (1 m start,
/// 0.01 m floor: 8 passes ending at 0.0078125 m). The incumbent is always in
/// the candidate set, so the best value never decreases.
inline GridResult grid_search(const std::vector<SearchBox>& box, const Objective& objective,
                              double initial_res = 1.0, double final_res = 0.01,
                              int threads = 1) {
    if (box.empty()) throw std::invalid_argument("grid_search: empty box");
    GridResult result;
    double res = initial_res;
    double prev_res = 0.0;
    while (true) {
        std::vector<std::vector<double>> axes(box.size());
        for (std::size_t d = 0; d < box.size(); ++d) {
            axes[d] = prev_res == 0.0
                          ? detail::axis_lattice(box[d], res)
                          : detail::axis_neighborhood(result.best_x[d], prev_res, res, box[d]);
        }
        const auto candidates = detail::cartesian(axes);
        std::vector<double> values(candidates.size());
        parallel_for(candidates.size(), threads,
                     [&](std::size_t i) { values[i] = objective(candidates[i]); });
        result.evaluations += candidates.size();
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            if (values[i] > result.best_value) {
                result.best_value = values[i];
                result.best_x = candidates[i];
            }
        }
        result.pass_bests.push_back(result.best_value);
        if (res < final_res) break;
        prev_res = res;
        res *= 0.5;
    }
    return result;
}

struct LocalMinResult {
    std::vector<double> x;
    double value = std::numeric_limits<double>::infinity();
    std::size_t evaluations = 0;
};

/// Derivative-free simplex descent (minimization) with box handling by
/// clipping every trial vertex. Deterministic for a given start point.
inline LocalMinResult nelder_mead(const Objective& f, std::vector<double> x0,
                                  const std::vector<SearchBox>& box, double init_step = 0.25,
                                  double tol = 1e-8, std::size_t max_evals = 800) {
    const std::size_t n = x0.size();
    x0 = clip(std::move(x0), box);
    LocalMinResult result;

    std::vector<std::vector<double>> simplex{x0};
    for (std::size_t d = 0; d < n; ++d) {
        auto v = x0;
        v[d] = clip(v[d] + (v[d] + init_step <= box[d].hi ? init_step : -init_step), box[d]);
        simplex.push_back(std::move(v));
    }
    std::vector<double> fv(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        fv[i] = f(simplex[i]);
        ++result.evaluations;
    }

    const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;
    while (result.evaluations < max_evals) {
        // Order vertices; index sort keeps ties deterministic.
        std::vector<std::size_t> ord(n + 1);
        std::iota(ord.begin(), ord.end(), 0);
        std::stable_sort(ord.begin(), ord.end(),
                         [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        std::vector<std::vector<double>> sx(n + 1);
        std::vector<double> sf(n + 1);
        for (std::size_t i = 0; i <= n; ++i) {
            sx[i] = simplex[ord[i]];
            sf[i] = fv[ord[i]];
        }
        simplex = std::move(sx);
        fv = std::move(sf);

        double spread = 0.0;
        for (std::size_t i = 1; i <= n; ++i) spread = std::max(spread, std::abs(fv[i] - fv[0]));
        double diam = 0.0;
        for (std::size_t i = 1; i <= n; ++i)
            for (std::size_t d = 0; d < n; ++d)
                diam = std::max(diam, std::abs(simplex[i][d] - simplex[0][d]));
        if (spread < tol && diam < 1e-6) break;

        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t d = 0; d < n; ++d) centroid[d] += simplex[i][d] / double(n);

        auto point_at = [&](double coef) {
            std::vector<double> p(n);
            for (std::size_t d = 0; d < n; ++d)
                p[d] = centroid[d] + coef * (centroid[d] - simplex[n][d]);
            return clip(std::move(p), box);
        };

        auto reflected = point_at(alpha);
        const double fr = f(reflected);
        ++result.evaluations;
        if (fr < fv[0]) {
            auto expanded = point_at(gamma);
            const double fe = f(expanded);
            ++result.evaluations;
            if (fe < fr) {
                simplex[n] = std::move(expanded);
                fv[n] = fe;
            } else {
                simplex[n] = std::move(reflected);
                fv[n] = fr;
            }
        } else if (fr < fv[n - 1]) {
            simplex[n] = std::move(reflected);
            fv[n] = fr;
        } else {
            auto contracted = point_at(fr < fv[n] ? rho : -rho);
            const double fc = f(contracted);
            ++result.evaluations;
            if (fc < std::min(fr, fv[n])) {
                simplex[n] = std::move(contracted);
                fv[n] = fc;
            } else {
                for (std::size_t i = 1; i <= n; ++i) {
                    for (std::size_t d = 0; d < n; ++d)
                        simplex[i][d] = simplex[0][d] + sigma * (simplex[i][d] - simplex[0][d]);
                    fv[i] = f(simplex[i]);
                    ++result.evaluations;
                }
            }
        }
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i <= n; ++i)
        if (fv[i] < fv[best]) best = i;
    result.x = simplex[best];
    result.value = fv[best];
    return result;
}

struct BasinHoppingResult {
    std::vector<double> x;
    double value = std::numeric_limits<double>::infinity();
    std::size_t evaluations = 0;
};

/// Stochastic global minimization: repeated {perturb, local minimize,
/// Metropolis accept}. Temperature is `temp_frac` of the best value's
/// magnitude. Deterministic given the seed; all iterates clipped to the box.
inline BasinHoppingResult basin_hopping(const Objective& f, std::vector<double> x0,
                                        const std::vector<SearchBox>& box,
                                        std::size_t iterations = 50, double step_scale = 0.5,
                                        std::uint64_t seed = 0, double temp_frac = 0.01) {
    if (iterations < 1) throw std::invalid_argument("basin_hopping: iterations must be >= 1");
    Rng rng(seed);
    BasinHoppingResult result;

    auto current = nelder_mead(f, clip(std::move(x0), box), box);
    result.evaluations += current.evaluations;
    result.x = current.x;
    result.value = current.value;

    for (std::size_t it = 0; it < iterations; ++it) {
        std::vector<double> trial = current.x;
        for (std::size_t d = 0; d < trial.size(); ++d)
            trial[d] = clip(trial[d] + rng.uniform(-step_scale, step_scale), box[d]);
        auto local = nelder_mead(f, std::move(trial), box);
        result.evaluations += local.evaluations;
        if (local.value < result.value) {
            result.value = local.value;
            result.x = local.x;
        }
        const double temp = std::max(temp_frac * std::abs(result.value), 1e-12);
        const double du = local.value - current.value;
        if (du <= 0.0 || rng.uniform() < std::exp(-du / temp)) current = std::move(local);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Schedule objective evaluation
// ---------------------------------------------------------------------------

/// Lagoon + controller state threaded across sequential half-tide windows.
struct SimCarry {
    LagoonState sim;
    Stage stage = Stage::Holding;
};

/// Binds a plant config to one tide series and its half-tide segmentation and
/// prices schedules on it. All methods are const and thread-safe.
class ScheduleEvaluator {
public:
    ScheduleEvaluator(SimConfig cfg, const TideSeries& tide, std::vector<HalfTide> half_tides)
        : cfg_(std::move(cfg)), tide_(tide), half_tides_(std::move(half_tides)),
          boundaries_s_(half_tide_boundaries_s(half_tides_, tide.dt_s)) {
        if (half_tides_.empty())
            throw std::invalid_argument("ScheduleEvaluator: no half-tides");
    }

    const std::vector<HalfTide>& half_tides() const { return half_tides_; }
    std::size_t count() const { return half_tides_.size(); }
    const SimConfig& config() const { return cfg_; }

    /// Whole-series energy of a schedule from a fresh state (level 0,
    /// Holding). Per-half-tide schedules must cover every half-tide.
    double schedule_energy_wh(const HeadSchedule& schedule) const {
        schedule.validate(schedule.constant ? 0 : count());
        SimCarry fresh;
        return run_span(schedule, boundaries_s_, 0.0, tide_.get().span_s(), fresh, nullptr);
    }

    /// Energy over half-tides [ht_begin, ht_end) starting from `carry`;
    /// `triples` holds one entry per half-tide in the window. Pass
    /// `carry_out` to advance the chain.
    double window_energy_wh(const std::vector<HeadTriple>& triples, bool variant,
                            std::size_t ht_begin, std::size_t ht_end, const SimCarry& carry,
                            SimCarry* carry_out = nullptr) const {
        if (ht_begin >= ht_end || ht_end > count())
            throw std::invalid_argument("window_energy_wh: bad half-tide window");
        if (triples.size() != ht_end - ht_begin)
            throw std::invalid_argument("window_energy_wh: triple count != window size");
        const auto schedule = HeadSchedule::per_half_tide(triples, variant);
        std::vector<double> bounds(boundaries_s_.begin() + static_cast<std::ptrdiff_t>(ht_begin),
                                   boundaries_s_.begin() + static_cast<std::ptrdiff_t>(ht_end));
        const double t_begin = boundaries_s_[ht_begin];
        const double t_end =
            ht_end == count() ? tide_.get().span_s() : boundaries_s_[ht_end];
        return run_span(schedule, bounds, t_begin, t_end, carry, carry_out);
    }

private:
    double run_span(const HeadSchedule& schedule, const std::vector<double>& bounds,
                    double t_begin, double t_end, const SimCarry& carry,
                    SimCarry* carry_out) const {
        Simulation sim(cfg_);
        auto state = carry.sim;
        state.turbine_ramp.zeta = cfg_.zeta;
        state.sluice_ramp.zeta = cfg_.zeta;
        sim.set_state(state);
        SchemeController ctl(schedule, bounds, cfg_.hold_eps_m);
        ctl.reset(carry.stage, 0);
        const auto k_begin = static_cast<std::int64_t>(std::llround(t_begin / cfg_.dt_s));
        const auto k_end = static_cast<std::int64_t>(std::floor(t_end / cfg_.dt_s + 1e-9));
        const TideSeries& tide = tide_.get();
        for (std::int64_t k = k_begin; k < k_end; ++k) {
            const double t = static_cast<double>(k) * cfg_.dt_s;
            const double ocean = tide.level_at(t);
            const StructureCommand cmd = ctl(ControlInput{t, ocean, sim.state().level_m});
            sim.step(ocean, cmd);
        }
        if (carry_out) {
            carry_out->sim = sim.state();
            carry_out->stage = ctl.stage();
        }
        return sim.energy_wh();
    }

    SimConfig cfg_;
    std::reference_wrapper<const TideSeries> tide_;
    std::vector<HalfTide> half_tides_;
    std::vector<double> boundaries_s_;
};

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

enum class BaselineKind { CH, CHV, EHT, EHTV, EHN, EHNV };

inline const char* baseline_name(BaselineKind k) {
    switch (k) {
        case BaselineKind::CH: return "CH";
        case BaselineKind::CHV: return "CHV";
        case BaselineKind::EHT: return "EHT";
        case BaselineKind::EHTV: return "EHTV";
        case BaselineKind::EHN: return "EHN";
        case BaselineKind::EHNV: return "EHNV";
    }
    return "?";
}

inline BaselineKind baseline_from_name(const std::string& s) {
    if (s == "CH" || s == "ch") return BaselineKind::CH;
    if (s == "CHV" || s == "chv") return BaselineKind::CHV;
    if (s == "EHT" || s == "eht") return BaselineKind::EHT;
    if (s == "EHTV" || s == "ehtv") return BaselineKind::EHTV;
    if (s == "EHN" || s == "ehn") return BaselineKind::EHN;
    if (s == "EHNV" || s == "ehnv") return BaselineKind::EHNV;
    throw std::runtime_error("unknown baseline: " + s +
                             " (expected CH, CHV, EHT, EHTV, EHN or EHNV)");
}

inline bool baseline_is_variant(BaselineKind k) {
    return k == BaselineKind::CHV || k == BaselineKind::EHTV || k == BaselineKind::EHNV;
}

struct BaselineConfig {
    double initial_res_m = 1.0;
    double final_res_m = 0.01;
    std::size_t bh_iterations = 50;
    double bh_step_m = 0.5;
    double bh_temp_frac = 0.01;
    double smooth_window_s = 1800.0;
    std::uint64_t seed = 0;
    int threads = 1;
};

struct OptimizationReport {
    BaselineKind kind = BaselineKind::CH;
    HeadSchedule schedule;
    double predicted_energy_gwh = 0.0;
    double applied_energy_gwh = 0.0;
    std::size_t evaluations = 0;
    double wall_time_s = 0.0;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["format_version"] = 1;
        j["kind"] = baseline_name(kind);
        j["schedule"] = schedule.to_json();
        j["predicted_energy_gwh"] = predicted_energy_gwh;
        j["applied_energy_gwh"] = applied_energy_gwh;
        j["evaluations"] = evaluations;
        j["wall_time_s"] = wall_time_s;
        j["seed"] = seed;
        return j;
    }
};

inline constexpr double kWhPerGwh = 1e9;

namespace detail {

inline HeadTriple triple_from(const std::vector<double>& x, std::size_t at, bool variant) {
    HeadTriple t;
    t.h_start_m = x[at];
    t.h_min_m = x[at + 1];
    t.hs_start_m = variant ? x[at + 2] : 0.0;
    return t;
}

/// Applies a prediction-fitted per-half-tide schedule to a measured series
/// segmented on its own: index-matched, tolerating a count mismatch of one
/// (shortfall filled by repeating the last triple).
inline HeadSchedule fit_schedule_to(const HeadSchedule& schedule, std::size_t measured_count) {
    if (schedule.constant) return schedule;
    const std::size_t have = schedule.size();
    const std::size_t diff = have > measured_count ? have - measured_count : measured_count - have;
    if (diff > 1)
        throw std::runtime_error(
            "half-tide counts differ by " + std::to_string(diff) +
            " between prediction (" + std::to_string(have) + ") and measured (" +
            std::to_string(measured_count) + ") series; cannot transfer schedule");
    auto triples = schedule.triples;
    triples.resize(measured_count, triples.back());
    return HeadSchedule::per_half_tide(std::move(triples), schedule.variant);
}

} // namespace detail

/// Runs one baseline: optimize on the prediction series, freeze the
/// schedule, re-price it on the measured series. Pass the same series twice
/// for perfect-forecast mode.
inline OptimizationReport run_baseline(BaselineKind kind, const SimConfig& sim_cfg,
                                       const TideSeries& prediction, const TideSeries& measured,
                                       const BaselineConfig& cfg = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    const bool variant = baseline_is_variant(kind);
    const auto box = variant ? variant_box() : classic_box();
    const std::size_t dim = box.size();

    ScheduleEvaluator pred_eval(sim_cfg, prediction,
                                segment_half_tides(prediction, cfg.smooth_window_s));
    OptimizationReport report;
    report.kind = kind;
    report.seed = cfg.seed;

    if (kind == BaselineKind::CH || kind == BaselineKind::CHV) {
        const Objective objective = [&](const std::vector<double>& x) {
            HeadSchedule s;
            s.variant = variant;
            s.constant = true;
            s.triples = {detail::triple_from(x, 0, variant)};
            return pred_eval.schedule_energy_wh(s);
        };
        const auto grid =
            grid_search(box, objective, cfg.initial_res_m, cfg.final_res_m, cfg.threads);
        report.evaluations = grid.evaluations;
        report.schedule.variant = variant;
        report.schedule.constant = true;
        report.schedule.triples = {detail::triple_from(grid.best_x, 0, variant)};
    } else {
        const std::size_t n = pred_eval.count();
        const bool joint = kind == BaselineKind::EHN || kind == BaselineKind::EHNV;
        std::vector<HeadTriple> committed;
        committed.reserve(n);
        SimCarry carry;
        for (std::size_t i = 0; i < n; ++i) {
            const bool has_next = joint && i + 1 < n;
            const std::size_t window = has_next ? 2 : 1;
            const Objective objective = [&, i, window](const std::vector<double>& x) {
                std::vector<HeadTriple> triples;
                triples.reserve(window);
                for (std::size_t w = 0; w < window; ++w)
                    triples.push_back(detail::triple_from(x, w * dim, variant));
                return pred_eval.window_energy_wh(triples, variant, i, i + window, carry);
            };
            std::vector<SearchBox> wbox;
            for (std::size_t w = 0; w < window; ++w)
                wbox.insert(wbox.end(), box.begin(), box.end());

            std::vector<double> best;
            if (kind == BaselineKind::EHNV && has_next) {
                // 6 variables: stochastic global search instead of the grid.
                const Objective neg = [&](const std::vector<double>& x) {
                    return -objective(x);
                };
                std::vector<double> x0(wbox.size());
                for (std::size_t d = 0; d < wbox.size(); ++d)
                    x0[d] = 0.5 * (wbox[d].lo + wbox[d].hi);
                const auto bh =
                    basin_hopping(neg, std::move(x0), wbox, cfg.bh_iterations, cfg.bh_step_m,
                                  derive_seed(cfg.seed, 0x62680000ULL, i), cfg.bh_temp_frac);
                report.evaluations += bh.evaluations;
                best = bh.x;
            } else {
                const auto grid = grid_search(wbox, objective, cfg.initial_res_m,
                                              cfg.final_res_m, cfg.threads);
                report.evaluations += grid.evaluations;
                best = grid.best_x;
            }

            // Commit only the current half-tide and advance the carried state.
            const HeadTriple chosen = detail::triple_from(best, 0, variant);
            committed.push_back(chosen);
            pred_eval.window_energy_wh({chosen}, variant, i, i + 1, carry, &carry);
        }
        report.schedule = HeadSchedule::per_half_tide(std::move(committed), variant);
    }

    report.predicted_energy_gwh = pred_eval.schedule_energy_wh(report.schedule) / kWhPerGwh;

    const bool same_series = &measured == &prediction;
    if (same_series) {
        report.applied_energy_gwh = report.predicted_energy_gwh;
    } else {
        ScheduleEvaluator meas_eval(sim_cfg, measured,
                                    segment_half_tides(measured, cfg.smooth_window_s));
        const auto applied = detail::fit_schedule_to(report.schedule, meas_eval.count());
        report.applied_energy_gwh = meas_eval.schedule_energy_wh(applied) / kWhPerGwh;
    }

    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

} // namespace lagoon
