#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lagoon {

inline constexpr const char* kToolVersion = "0.1.0";

/// Flat `key = value` configuration text. Lines starting with '#' (or the
/// remainder of a line after '#') are comments. Consumers read keys through
/// the typed getters; finish() rejects any key that was never consumed, so
/// misspelled options fail loudly instead of silently using a default.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig from_string(const std::string& text) {
        KeyValueConfig cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos) {
                throw std::runtime_error("config line " + std::to_string(lineno) +
                                         ": expected `key = value`, got `" + trimmed + "`");
            }
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty()) {
                throw std::runtime_error("config line " + std::to_string(lineno) +
                                         ": empty key");
            }
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static KeyValueConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config file: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return from_string(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(key);
        return it->second;
    }

    double get_double(const std::string& key, double fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(key);
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument(it->second);
            return v;
        } catch (const std::exception&) {
            throw std::runtime_error("config key `" + key + "`: not a number: `" +
                                     it->second + "`");
        }
    }

    std::int64_t get_int(const std::string& key, std::int64_t fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(key);
        try {
            std::size_t pos = 0;
            const long long v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument(it->second);
            return v;
        } catch (const std::exception&) {
            throw std::runtime_error("config key `" + key + "`: not an integer: `" +
                                     it->second + "`");
        }
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(key);
        try {
            std::size_t pos = 0;
            const unsigned long long v = std::stoull(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument(it->second);
            return v;
        } catch (const std::exception&) {
            throw std::runtime_error("config key `" + key + "`: not an integer: `" +
                                     it->second + "`");
        }
    }

    bool get_bool(const std::string& key, bool fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(key);
        const std::string& v = it->second;
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw std::runtime_error("config key `" + key + "`: not a boolean: `" + v + "`");
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    /// Rejects keys that no consumer asked for.
    void finish() const {
        std::vector<std::string> unknown;
        for (const auto& [k, v] : values_) {
            if (!consumed_.count(k)) unknown.push_back(k);
        }
        if (!unknown.empty()) {
            std::string msg = "unknown config key(s):";
            for (const auto& k : unknown) msg += " `" + k + "`";
            throw std::runtime_error(msg);
        }
    }

    /// FNV-1a over the sorted `key=value` pairs; stable across reordering
    /// and comments, sensitive to any value change.
    std::string hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&h](const std::string& s) {
            for (unsigned char c : s) {
                h ^= c;
                h *= 0x100000001b3ULL;
            }
        };
        for (const auto& [k, v] : values_) {
            mix(k);
            mix("=");
            mix(v);
            mix("\n");
        }
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return std::string(buf);
    }

    const std::map<std::string, std::string>& items() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> consumed_;
};

} // namespace lagoon
