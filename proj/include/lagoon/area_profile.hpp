#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lagoon {

/// Wetted lagoon surface area as a function of water level: piecewise-linear
/// between breakpoints, constant beyond the ends.
class AreaProfile {
public:
    AreaProfile() : AreaProfile(constant(11.5e6)) {}

    explicit AreaProfile(std::vector<std::pair<double, double>> breakpoints)
        : pts_(std::move(breakpoints)) {
        if (pts_.empty()) throw std::invalid_argument("AreaProfile: no breakpoints");
        for (std::size_t i = 0; i < pts_.size(); ++i) {
            if (pts_[i].second <= 0.0)
                throw std::invalid_argument("AreaProfile: areas must be > 0");
            if (i > 0 && pts_[i].first <= pts_[i - 1].first)
                throw std::invalid_argument("AreaProfile: levels must be strictly increasing");
        }
    }

    static AreaProfile constant(double area_m2) {
        return AreaProfile({{0.0, area_m2}, {1.0, area_m2}});
    }

    /// CSV rows `level_m,area_m2`, `#` comments and an optional header allowed.
    static AreaProfile from_csv(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open area profile: " + path);
        std::vector<std::pair<double, double>> pts;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            if (line.rfind("level_m", 0) == 0) continue;
            std::istringstream row(line);
            std::string a, b;
            if (!std::getline(row, a, ',') || !std::getline(row, b, ','))
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": expected `level_m,area_m2`");
            try {
                pts.emplace_back(std::stod(a), std::stod(b));
            } catch (const std::exception&) {
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": malformed breakpoint row");
            }
        }
        return AreaProfile(std::move(pts));
    }

    double area_at(double level_m) const {
        if (level_m <= pts_.front().first) return pts_.front().second;
        if (level_m >= pts_.back().first) return pts_.back().second;
        for (std::size_t i = 1; i < pts_.size(); ++i) {
            if (level_m <= pts_[i].first) {
                const auto& [l0, a0] = pts_[i - 1];
                const auto& [l1, a1] = pts_[i];
                const double f = (level_m - l0) / (l1 - l0);
                return a0 + f * (a1 - a0);
            }
        }
        return pts_.back().second;
    }

    const std::vector<std::pair<double, double>>& breakpoints() const { return pts_; }

private:
    std::vector<std::pair<double, double>> pts_;
};

} // namespace lagoon
