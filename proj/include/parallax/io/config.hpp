#pragma once

#include <fstream>
#include <map>

#include "parallax/core/common.hpp"

namespace parallax {

// Flat key=value configuration with '#' comments. Unknown keys are rejected
// against the allowed set; command-line flags override file values.
class KeyValueConfig {
public:
    static KeyValueConfig from_file(const std::string& path) {
        std::ifstream f(path);
        check(f.good(), "config: cannot open " + path);
        KeyValueConfig cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            const size_t hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            // trim
            const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)); };
            while (!line.empty() && is_space(line.back())) line.pop_back();
            size_t start = 0;
            while (start < line.size() && is_space(line[start])) ++start;
            line = line.substr(start);
            if (line.empty()) continue;
            const size_t eq = line.find('=');
            check(eq != std::string::npos,
                  "config: line " + std::to_string(lineno) + " is not key=value: '" + line + "'");
            std::string key = line.substr(0, eq);
            std::string value = line.substr(eq + 1);
            while (!key.empty() && is_space(key.back())) key.pop_back();
            size_t vstart = 0;
            while (vstart < value.size() && is_space(value[vstart])) ++vstart;
            cfg.values_[key] = value.substr(vstart);
        }
        return cfg;
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            check(pos == it->second.size(), "");
            return v;
        } catch (...) {
            fail("config: key '" + key + "' has non-numeric value '" + it->second + "'");
        }
    }

    long get_int(const std::string& key, long fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            size_t pos = 0;
            const long v = std::stol(it->second, &pos);
            check(pos == it->second.size(), "");
            return v;
        } catch (...) {
            fail("config: key '" + key + "' has non-integer value '" + it->second + "'");
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const std::string& v = it->second;
        if (v == "on" || v == "true" || v == "1") return true;
        if (v == "off" || v == "false" || v == "0") return false;
        fail("config: key '" + key + "' has non-boolean value '" + v + "'");
    }

    void reject_unknown_keys(const std::vector<std::string>& allowed) const {
        for (const auto& [key, value] : values_) {
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
                fail("config: unknown key '" + key + "'");
        }
    }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace parallax
