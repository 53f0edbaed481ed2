#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lagoon/rng.hpp"

namespace lagoon {

inline constexpr double kSecondsPerHour = 3600.0;
inline constexpr double kDaysPerMonth = 31.0; // synthesis month length

enum class Quality : char {
    Good = 'G',
    Improbable = 'M',
    Null = 'N',
    Interpolated = 'T',
};

inline char quality_char(Quality q) { return static_cast<char>(q); }

inline Quality quality_from_char(char c) {
    switch (c) {
        case 'G': return Quality::Good;
        case 'M': return Quality::Improbable;
        case 'N': return Quality::Null;
        case 'T': return Quality::Interpolated;
        default: throw std::runtime_error(std::string("unknown quality flag '") + c + "'");
    }
}

struct Constituent {
    double amplitude_m = 0.0;
    double period_hr = 0.0;
    double phase_rad = 0.0;

    double omega_rad_s() const { return 2.0 * M_PI / (period_hr * kSecondsPerHour); }
};

/// M2, S2, N2, K1 at Swansea Bay.
inline std::vector<Constituent> default_constituents() {
    return {
        {3.20, 12.42, 0.0},
        {1.14, 12.00, 0.0},
        {0.61, 12.66, 0.0},
        {0.08, 23.93, 0.0},
    };
}

/// Regularly sampled ocean elevation relative to mean sea level.
struct TideSeries {
    std::int64_t epoch_unix_s = 0;
    double dt_s = 60.0;
    std::vector<double> levels_m;
    std::vector<Quality> quality;

    std::size_t size() const { return levels_m.size(); }
    double t_s(std::size_t i) const { return static_cast<double>(i) * dt_s; }
    double span_s() const { return static_cast<double>(size()) * dt_s; }

    bool good(std::size_t i) const { return quality[i] == Quality::Good; }

    double good_fraction() const {
        if (levels_m.empty()) return 0.0;
        std::size_t n = 0;
        for (auto q : quality)
            if (q == Quality::Good) ++n;
        return static_cast<double>(n) / static_cast<double>(size());
    }

    /// Linear interpolation on the sample grid; constant beyond the ends.
    double level_at(double t) const {
        if (levels_m.empty()) throw std::runtime_error("TideSeries: empty series");
        const double x = t / dt_s;
        if (x <= 0.0) return levels_m.front();
        const auto last = static_cast<double>(size() - 1);
        if (x >= last) return levels_m.back();
        const auto i = static_cast<std::size_t>(x);
        const double frac = x - static_cast<double>(i);
        return levels_m[i] + frac * (levels_m[i + 1] - levels_m[i]);
    }

    void validate() const {
        if (dt_s <= 0.0) throw std::invalid_argument("TideSeries: dt_s must be > 0");
        if (levels_m.size() != quality.size())
            throw std::invalid_argument("TideSeries: levels/quality size mismatch");
        for (std::size_t i = 0; i < size(); ++i) {
            if (quality[i] == Quality::Good && !std::isfinite(levels_m[i]))
                throw std::invalid_argument("TideSeries: non-finite level flagged Good");
        }
    }
};

/// o(t) = sum_i A_i sin(w_i t + phi_i), sampled at dt over [0, span).
inline TideSeries synthesize(const std::vector<Constituent>& constituents, double span_s,
                             double dt_s = 60.0) {
    if (span_s <= 0.0) throw std::invalid_argument("synthesize: span_s must be > 0");
    if (dt_s <= 0.0) throw std::invalid_argument("synthesize: dt_s must be > 0");
    TideSeries series;
    series.dt_s = dt_s;
    const auto n = static_cast<std::size_t>(std::llround(span_s / dt_s));
    series.levels_m.resize(n);
    series.quality.assign(n, Quality::Good);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt_s;
        double o = 0.0;
        for (const auto& c : constituents)
            o += c.amplitude_m * std::sin(c.omega_rad_s() * t + c.phase_rad);
        series.levels_m[i] = o;
    }
    return series;
}

/// Four phase lags, uniform on [0, 2*pi), fixed by the seed.
inline std::array<double, 4> random_phases(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x70686173ULL)); // stream tag: "phas"
    std::array<double, 4> phases{};
    for (auto& p : phases) p = rng.uniform(0.0, 2.0 * M_PI);
    return phases;
}

inline std::vector<Constituent> constituents_with_phases(std::vector<Constituent> cs,
                                                         const std::array<double, 4>& phases) {
    for (std::size_t i = 0; i < cs.size() && i < phases.size(); ++i)
        cs[i].phase_rad = phases[i];
    return cs;
}

// ---------------------------------------------------------------------------
// Gauge-file ingestion
// ---------------------------------------------------------------------------

enum class GaugeFormat { BodcAscii, Csv };

namespace detail {

inline std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<std::int64_t>(y) - era * 400;
    const std::int64_t doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const std::int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + doe - 719468;
}

inline bool parse_gauge_row(const std::string& line, std::int64_t& unix_s, double& level,
                            Quality& flag) {
    // "   1) 1993/01/01 00:00:00   5.7460M" -- the flag letter is optional
    // and any further columns are ignored.
    int cycle = 0, Y = 0, Mo = 0, D = 0, h = 0, mi = 0, se = 0;
    int consumed = 0;
    if (std::sscanf(line.c_str(), " %d) %d/%d/%d %d:%d:%d %n", &cycle, &Y, &Mo, &D, &h, &mi,
                    &se, &consumed) != 7)
        return false;
    const char* rest = line.c_str() + consumed;
    char* end = nullptr;
    level = std::strtod(rest, &end);
    if (end == rest) return false;
    flag = Quality::Good;
    if (*end != '\0' && !std::isspace(static_cast<unsigned char>(*end))) {
        flag = quality_from_char(*end);
        ++end;
    }
    unix_s = days_from_civil(Y, Mo, D) * 86400 + h * 3600 + mi * 60 + se;
    return true;
}

inline std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    return out;
}

} // namespace detail

/// Reads a tide-gauge file into a TideSeries. `datum_offset_m` is subtracted
/// from every level to refer the series to mean sea level.
///
/// bodc-ascii: free-form header lines, then rows
///   `<cycle>) YYYY/MM/DD hh:mm:ss <level><flag?>`
/// with flag letters M (improbable), N (null value), T (interpolated);
/// no letter means good. Once data rows begin, every non-blank line must
/// parse and cycle numbers must increase by one.
///
/// csv: optional `#` comment preamble, optional `t_s,level_m,quality`
/// header, then `t_s,level_m[,flag]` rows on a uniform time grid.
inline TideSeries ingest_gauge(const std::string& path, GaugeFormat format,
                               double datum_offset_m = 0.0) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open tide file: " + path);

    TideSeries series;
    std::string line;
    int lineno = 0;

    if (format == GaugeFormat::BodcAscii) {
        bool in_data = false;
        int prev_cycle = 0;
        std::int64_t prev_t = 0;
        std::int64_t dt = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            std::int64_t t = 0;
            double level = 0.0;
            Quality flag = Quality::Good;
            int cycle = 0;
            std::sscanf(line.c_str(), " %d)", &cycle);
            bool ok = false;
            try {
                ok = detail::parse_gauge_row(line, t, level, flag);
            } catch (const std::exception& e) {
                throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
            }
            if (!ok) {
                if (!in_data) continue; // header line
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": malformed gauge row: " + line);
            }
            if (in_data) {
                if (cycle != prev_cycle + 1)
                    throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                             ": cycle numbers must increase by 1");
                const std::int64_t step = t - prev_t;
                if (dt == 0)
                    dt = step;
                else if (step != dt)
                    throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                             ": mixed sample intervals (" +
                                             std::to_string(step) + "s vs " +
                                             std::to_string(dt) + "s)");
            } else {
                series.epoch_unix_s = t;
                in_data = true;
            }
            prev_cycle = cycle;
            prev_t = t;
            series.levels_m.push_back(level - datum_offset_m);
            series.quality.push_back(flag);
        }
        if (series.levels_m.empty())
            throw std::runtime_error(path + ": no data rows found");
        series.dt_s = dt > 0 ? static_cast<double>(dt) : 60.0;
    } else {
        bool header_checked = false;
        double prev_t = 0.0;
        double dt = 0.0;
        bool have_prev = false;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            if (!header_checked) {
                header_checked = true;
                if (line.rfind("t_s", 0) == 0) continue; // column header
            }
            const auto fields = detail::split_csv_row(line);
            if (fields.size() < 2)
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": expected `t_s,level_m[,quality]`");
            double t = 0.0, level = 0.0;
            try {
                t = std::stod(fields[0]);
                level = std::stod(fields[1]);
            } catch (const std::exception&) {
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": malformed csv row: " + line);
            }
            Quality flag = Quality::Good;
            if (fields.size() >= 3 && !fields[2].empty())
                flag = quality_from_char(fields[2][0]);
            if (have_prev) {
                const double step = t - prev_t;
                if (dt == 0.0)
                    dt = step;
                else if (std::abs(step - dt) > 1e-6)
                    throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                             ": mixed sample intervals");
            }
            prev_t = t;
            have_prev = true;
            series.levels_m.push_back(level - datum_offset_m);
            series.quality.push_back(flag);
        }
        if (series.levels_m.empty())
            throw std::runtime_error(path + ": no data rows found");
        series.dt_s = dt > 0.0 ? dt : 60.0;
    }
    series.validate();
    return series;
}

/// Shortest-round-trip decimal text for a double (bit-exact to re-ingest).
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline void write_tide_csv(const TideSeries& series, std::ostream& out,
                           const std::map<std::string, std::string>& preamble = {}) {
    for (const auto& [k, v] : preamble) out << "# " << k << "=" << v << "\n";
    out << "# epoch_unix_s=" << series.epoch_unix_s << "\n";
    out << "t_s,level_m,quality\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        out << format_double(series.t_s(i)) << "," << format_double(series.levels_m[i]) << ","
            << quality_char(series.quality[i]) << "\n";
    }
}

inline void write_tide_csv(const TideSeries& series, const std::string& path,
                           const std::map<std::string, std::string>& preamble = {}) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write tide file: " + path);
    write_tide_csv(series, out, preamble);
}

/// Linear resampling onto a new uniform grid over the same span. A sample is
/// Good only when both bracketing source samples are; otherwise it carries
/// the Interpolated flag.
inline TideSeries resample(const TideSeries& in, double new_dt_s) {
    in.validate();
    if (new_dt_s <= 0.0) throw std::invalid_argument("resample: dt must be > 0");
    if (in.levels_m.empty()) throw std::invalid_argument("resample: empty series");
    TideSeries out;
    out.epoch_unix_s = in.epoch_unix_s;
    out.dt_s = new_dt_s;
    const auto n = static_cast<std::size_t>(std::floor(
                       (static_cast<double>(in.size() - 1) * in.dt_s) / new_dt_s + 1e-9)) +
                   1;
    out.levels_m.reserve(n);
    out.quality.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * new_dt_s;
        out.levels_m.push_back(in.level_at(t));
        const auto lo = std::min(in.size() - 1, static_cast<std::size_t>(t / in.dt_s));
        const auto hi = std::min(in.size() - 1, lo + 1);
        out.quality.push_back(in.good(lo) && in.good(hi) ? Quality::Good
                                                         : Quality::Interpolated);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Half-tide segmentation
// ---------------------------------------------------------------------------

enum class TideDirection { Flood, Ebb };

/// One interval between consecutive ocean extrema. Segments tile the series:
/// the first begins at sample 0 and the last ends at the final sample, so the
/// leading and trailing segments may be partial half-tides.
struct HalfTide {
    std::size_t start_idx = 0;
    std::size_t end_idx = 0; // exclusive
    TideDirection direction = TideDirection::Flood;
    double extreme_m = 0.0; // level at the bounding extremum (segment end)

    double duration_s(double dt_s) const {
        return static_cast<double>(end_idx - start_idx) * dt_s;
    }
};

namespace detail {

inline std::vector<double> moving_average(const std::vector<double>& x, std::size_t half_w) {
    const std::size_t n = x.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half_w ? i - half_w : 0;
        const std::size_t hi = std::min(n - 1, i + half_w);
        double s = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) s += x[j];
        out[i] = s / static_cast<double>(hi - lo + 1);
    }
    return out;
}

} // namespace detail

/// Locates ocean extrema on a moving-average-smoothed copy (first-difference
/// sign change), refines each to the raw local extremum within +-window, and
/// returns the tiling segments. Throws if fewer than two extrema exist.
inline std::vector<HalfTide> segment_half_tides(const TideSeries& series,
                                                double smooth_window_s = 1800.0) {
    const std::size_t n = series.size();
    if (n < 3) throw std::runtime_error("segment_half_tides: series too short");
    const auto half_w = static_cast<std::size_t>(
        std::max(1.0, std::round(0.5 * smooth_window_s / series.dt_s)));
    const auto smooth = detail::moving_average(series.levels_m, half_w);

    // Sign changes of the smoothed first difference, ignoring flat runs.
    std::vector<std::pair<std::size_t, bool>> extrema; // (index, is_max)
    int prev_sign = 0;
    for (std::size_t i = 1; i < n; ++i) {
        const double d = smooth[i] - smooth[i - 1];
        const int sign = d > 0.0 ? 1 : (d < 0.0 ? -1 : 0);
        if (sign == 0) continue;
        if (prev_sign != 0 && sign != prev_sign)
            extrema.emplace_back(i - 1, prev_sign > 0);
        prev_sign = sign;
    }
    if (extrema.size() < 2)
        throw std::runtime_error("segment_half_tides: fewer than 2 extrema in series");

    // Refine to the unsmoothed extremum within the smoothing window.
    std::vector<std::pair<std::size_t, bool>> refined;
    for (auto [idx, is_max] : extrema) {
        const std::size_t lo = idx >= half_w ? idx - half_w : 0;
        const std::size_t hi = std::min(n - 1, idx + half_w);
        std::size_t best = idx;
        for (std::size_t j = lo; j <= hi; ++j) {
            if (is_max ? series.levels_m[j] > series.levels_m[best]
                       : series.levels_m[j] < series.levels_m[best])
                best = j;
        }
        if (!refined.empty() && best <= refined.back().first) continue;
        if (!refined.empty() && refined.back().second == is_max) {
            // Duplicate extremum type from smoothing noise: keep the stronger.
            const auto prev = refined.back().first;
            const bool keep_new = is_max ? series.levels_m[best] > series.levels_m[prev]
                                         : series.levels_m[best] < series.levels_m[prev];
            if (keep_new) refined.back() = {best, is_max};
            continue;
        }
        refined.emplace_back(best, is_max);
    }
    if (refined.size() < 2)
        throw std::runtime_error("segment_half_tides: fewer than 2 extrema in series");

    // Segment boundaries: series start, interior extrema, one-past-the-end.
    std::vector<std::size_t> bounds;
    bounds.push_back(0);
    for (auto [idx, is_max] : refined) {
        if (idx > bounds.back() && idx < n - 1) bounds.push_back(idx);
    }
    bounds.push_back(n);

    std::vector<HalfTide> tides;
    for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
        HalfTide ht;
        ht.start_idx = bounds[k];
        ht.end_idx = bounds[k + 1];
        const std::size_t close = std::min(ht.end_idx, n - 1);
        const double a = series.levels_m[ht.start_idx];
        const double b = series.levels_m[close];
        ht.direction = b >= a ? TideDirection::Flood : TideDirection::Ebb;
        ht.extreme_m = b;
        tides.push_back(ht);
    }
    return tides;
}

/// Start times (seconds) of each half-tide, for driving threshold controllers.
inline std::vector<double> half_tide_boundaries_s(const std::vector<HalfTide>& tides,
                                                  double dt_s) {
    std::vector<double> out;
    out.reserve(tides.size());
    for (const auto& ht : tides) out.push_back(static_cast<double>(ht.start_idx) * dt_s);
    return out;
}

} // namespace lagoon
