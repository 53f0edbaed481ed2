#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lagoon/simulation.hpp"
#include "lagoon/tides.hpp"

namespace lagoon {

enum class Stage { Holding, Generating, Sluicing };

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Holding: return "holding";
        case Stage::Generating: return "generating";
        case Stage::Sluicing: return "sluicing";
    }
    return "?";
}

/// Head thresholds (m) governing one half-tide. `hs_start_m` is only read by
/// the variant scheme; classic schedules leave it 0.
struct HeadTriple {
    double h_start_m = 0.0;
    double h_min_m = 0.0;
    double hs_start_m = 0.0;

    bool operator==(const HeadTriple&) const = default;

    void validate() const {
        if (!(std::isfinite(h_start_m) && h_start_m > 0.0))
            throw std::invalid_argument("HeadTriple: h_start_m must be finite and > 0");
        if (!(std::isfinite(h_min_m) && h_min_m > 0.0))
            throw std::invalid_argument("HeadTriple: h_min_m must be finite and > 0");
        if (!(std::isfinite(hs_start_m) && hs_start_m >= 0.0))
            throw std::invalid_argument("HeadTriple: hs_start_m must be finite and >= 0");
    }
};

/// Either one constant triple for the whole run or one triple per half-tide.
struct HeadSchedule {
    bool variant = false;
    bool constant = true;
    std::vector<HeadTriple> triples;

    static HeadSchedule constant_classic(double h_start, double h_min) {
        HeadSchedule s;
        s.variant = false;
        s.constant = true;
        s.triples = {{h_start, h_min, 0.0}};
        return s;
    }

    static HeadSchedule constant_variant(double h_start, double h_min, double hs_start) {
        HeadSchedule s;
        s.variant = true;
        s.constant = true;
        s.triples = {{h_start, h_min, hs_start}};
        return s;
    }

    static HeadSchedule per_half_tide(std::vector<HeadTriple> triples, bool variant) {
        HeadSchedule s;
        s.variant = variant;
        s.constant = false;
        s.triples = std::move(triples);
        return s;
    }

    const HeadTriple& triple_for(std::size_t half_tide) const {
        if (constant) return triples.front();
        return triples.at(half_tide);
    }

    std::size_t size() const { return triples.size(); }

    void validate(std::size_t n_half_tides = 0) const {
        if (triples.empty()) throw std::invalid_argument("HeadSchedule: no triples");
        if (constant && triples.size() != 1)
            throw std::invalid_argument("HeadSchedule: constant schedule needs exactly 1 triple");
        if (!constant && n_half_tides > 0 && triples.size() != n_half_tides)
            throw std::invalid_argument(
                "HeadSchedule: " + std::to_string(triples.size()) + " triples for " +
                std::to_string(n_half_tides) + " half-tides");
        for (const auto& t : triples) t.validate();
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["format_version"] = 1;
        j["scheme"] = variant ? "variant" : "classic";
        j["constant"] = constant;
        auto arr = nlohmann::json::array();
        for (std::size_t i = 0; i < triples.size(); ++i) {
            nlohmann::json t;
            t["half_tide"] = i;
            t["h_start_m"] = triples[i].h_start_m;
            t["h_min_m"] = triples[i].h_min_m;
            if (variant) t["hs_start_m"] = triples[i].hs_start_m;
            arr.push_back(std::move(t));
        }
        j["triples"] = std::move(arr);
        return j;
    }

    static HeadSchedule from_json(const nlohmann::json& j) {
        if (j.value("format_version", 0) != 1)
            throw std::runtime_error("HeadSchedule: unsupported format_version");
        HeadSchedule s;
        s.variant = j.at("scheme").get<std::string>() == "variant";
        s.constant = j.at("constant").get<bool>();
        for (const auto& t : j.at("triples")) {
            HeadTriple h;
            h.h_start_m = t.at("h_start_m").get<double>();
            h.h_min_m = t.at("h_min_m").get<double>();
            h.hs_start_m = t.value("hs_start_m", 0.0);
            s.triples.push_back(h);
        }
        s.validate();
        return s;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write schedule: " + path);
        out << to_json().dump(2) << "\n";
    }

    static HeadSchedule load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open schedule: " + path);
        nlohmann::json j;
        in >> j;
        return from_json(j);
    }
};

/// Three-stage threshold controller for two-way operation. Each physics step
/// it advances the half-tide index past any elapsed boundaries (thresholds
/// swap, the stage persists), applies stage transitions on the instantaneous
/// absolute head, then emits the stage's command:
///
///   Holding    --|He| >= h_start-->  Generating   (Generate, sluices 0)
///   Generating --|He| <= h_min---->  Sluicing     (Idle, sluices 1.0)
///   Sluicing   --|He| <= eps------>  Holding      (Off, sluices 0)
///
/// Transitions cascade within a step (bounded by the cycle length) so a
/// Generate command is never emitted at |He| <= h_min even for degenerate
/// schedules with h_start < h_min. In the variant scheme the sluices open
/// during Generating once |He| <= hs_start; with hs_start <= h_min that
/// condition is unreachable, which makes the classic scheme a special case.
class SchemeController {
public:
    SchemeController(HeadSchedule schedule, std::vector<double> boundaries_s,
                     double hold_eps_m = 0.05)
        : schedule_(std::move(schedule)), boundaries_s_(std::move(boundaries_s)),
          hold_eps_m_(hold_eps_m) {
        if (boundaries_s_.empty())
            throw std::invalid_argument("SchemeController: no half-tide boundaries");
        schedule_.validate(schedule_.constant ? 0 : boundaries_s_.size());
    }

    Stage stage() const { return stage_; }
    std::size_t half_tide_index() const { return idx_; }

    /// Seeds controller state for windowed evaluation with carried state.
    void reset(Stage stage, std::size_t half_tide_index) {
        stage_ = stage;
        idx_ = half_tide_index;
    }

    StructureCommand operator()(const ControlInput& in) {
        while (idx_ + 1 < boundaries_s_.size() && in.t_s >= boundaries_s_[idx_ + 1]) ++idx_;
        const HeadTriple& heads = schedule_.triple_for(idx_);
        const double abs_head = std::abs(in.ocean_m - in.lagoon_m);

        for (int hops = 0; hops < 3; ++hops) {
            const Stage before = stage_;
            switch (stage_) {
                case Stage::Holding:
                    if (abs_head >= heads.h_start_m) stage_ = Stage::Generating;
                    break;
                case Stage::Generating:
                    if (abs_head <= heads.h_min_m) stage_ = Stage::Sluicing;
                    break;
                case Stage::Sluicing:
                    if (abs_head <= hold_eps_m_) stage_ = Stage::Holding;
                    break;
            }
            if (stage_ == before) break;
        }

        switch (stage_) {
            case Stage::Holding:
                return {TurbineMode::Off, 0.0};
            case Stage::Generating: {
                const bool open =
                    schedule_.variant && abs_head <= heads.hs_start_m;
                return {TurbineMode::Generate, open ? 1.0 : 0.0};
            }
            case Stage::Sluicing:
                return {TurbineMode::Idle, 1.0};
        }
        return {TurbineMode::Off, 0.0}; // unreachable
    }

private:
    HeadSchedule schedule_;
    std::vector<double> boundaries_s_;
    double hold_eps_m_;
    Stage stage_ = Stage::Holding;
    std::size_t idx_ = 0;
};

/// Wraps a SchemeController (shared state) as the plain callback run() takes.
inline Controller make_controller(std::shared_ptr<SchemeController> ctl) {
    return [ctl](const ControlInput& in) { return (*ctl)(in); };
}

} // namespace lagoon
