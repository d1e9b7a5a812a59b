#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ttr/core.hpp"
#include "ttr/format.hpp"

namespace ttr {

// Flat key-value configuration with [section] headers and '#' comments.
// Keys are addressed as "section.key". Files carry schema_version = 1.
class Config {
public:
    static constexpr int kSchemaVersion = 1;

    Config() { values_["schema_version"] = "1"; }

    static Config from_stream(std::istream& in, const std::string& name) {
        Config cfg;
        cfg.values_.clear();
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            if (t.front() == '[') {
                if (t.back() != ']') throw ParseError("unterminated section header in " + name, lineno);
                section = trim(t.substr(1, t.size() - 2));
                continue;
            }
            std::size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw ParseError("expected key = value in " + name, lineno);
            std::string key = trim(t.substr(0, eq));
            std::string val = trim(t.substr(eq + 1));
            if (key.empty()) throw ParseError("empty key in " + name, lineno);
            cfg.values_[section.empty() ? key : section + "." + key] = val;
        }
        if (cfg.get_int("schema_version", -1) != kSchemaVersion)
            throw InputError("config " + name + " missing or unsupported schema_version");
        return cfg;
    }

    static Config from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw InputError("cannot open config " + path);
        return from_stream(in, path);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require_string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw InputError("config key missing: " + key);
        return it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        return parse_double(key, it->second);
    }

    long long get_int(const std::string& key, long long fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        char* end = nullptr;
        long long v = std::strtoll(it->second.c_str(), &end, 10);
        if (end == nullptr || *end != '\0')
            throw InputError("config key " + key + " is not an integer: " + it->second);
        return v;
    }

    // Pipe-separated list values, e.g. templates = chain:6:C | ring:6:C
    std::vector<std::string> get_list(const std::string& key) const {
        std::vector<std::string> out;
        auto it = values_.find(key);
        if (it == values_.end()) return out;
        for (auto& part : split_char(it->second, '|')) {
            std::string t = trim(part);
            if (!t.empty()) out.push_back(t);
        }
        return out;
    }

    std::vector<double> get_doubles(const std::string& key) const {
        std::vector<double> out;
        auto it = values_.find(key);
        if (it == values_.end()) return out;
        for (auto& part : split_char(it->second, ',')) {
            std::string t = trim(part);
            if (!t.empty()) out.push_back(parse_double(key, t));
        }
        return out;
    }

    void set(const std::string& key, const std::string& val) { values_[key] = val; }
    void set(const std::string& key, double val) { values_[key] = fmt_g17(val); }
    void set(const std::string& key, long long val) { values_[key] = std::to_string(val); }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;

    static double parse_double(const std::string& key, const std::string& s) {
        char* end = nullptr;
        double v = std::strtod(s.c_str(), &end);
        if (end == nullptr || *end != '\0')
            throw InputError("config key " + key + " is not a number: " + s);
        return v;
    }
};

}  // namespace ttr
