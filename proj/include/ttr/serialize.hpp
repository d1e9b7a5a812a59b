#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ttr/config.hpp"
#include "ttr/core.hpp"
#include "ttr/format.hpp"
#include "ttr/model.hpp"
#include "ttr/spectra.hpp"

namespace ttr {

// ---------------------------------------------------------------------------
// TrainingProfile <-> versioned key-value text, vectors comma-separated.

inline void save_profile(const TrainingProfile& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write profile " + path);
    out << "profile_version = 1\n";
    out << "train_cutoff = " << fmt_g17(p.train_cutoff) << "\n";
    out << "mean_spectrum = ";
    for (std::size_t i = 0; i < p.mean_spectrum.size(); ++i)
        out << (i ? "," : "") << fmt_g17(p.mean_spectrum[i]);
    out << "\n";
    out << "spectral_distance_mean = " << fmt_g17(p.spectral_distance_mean) << "\n";
    out << "spectral_distance_std = " << fmt_g17(p.spectral_distance_std) << "\n";
    out << "force_norm_mean = " << fmt_g17(p.force_norm_mean) << "\n";
    out << "force_norm_std = " << fmt_g17(p.force_norm_std) << "\n";
    out << "size_mean = " << fmt_g17(p.size_mean) << "\n";
    out << "size_std = " << fmt_g17(p.size_std) << "\n";
    out << "seen_elements = ";
    bool first = true;
    for (const auto& sp : p.seen_elements) {
        out << (first ? "" : ",") << sp;
        first = false;
    }
    out << "\n";
    for (const auto& [sp, v] : p.composition_mean)
        out << "composition_mean_" << sp << " = " << fmt_g17(v) << "\n";
    for (const auto& [sp, v] : p.composition_std)
        out << "composition_std_" << sp << " = " << fmt_g17(v) << "\n";
}

inline TrainingProfile load_profile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open profile " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos) throw ParseError("expected key = value in " + path, lineno);
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    if (kv["profile_version"] != "1")
        throw InputError("profile " + path + ": missing or unsupported profile_version");

    auto require = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw InputError("profile " + path + " missing key " + key);
        return it->second;
    };
    auto to_d = [&](const std::string& s) { return std::strtod(s.c_str(), nullptr); };

    TrainingProfile p;
    p.train_cutoff = to_d(require("train_cutoff"));
    for (auto& tok : split_char(require("mean_spectrum"), ','))
        if (!trim(tok).empty()) p.mean_spectrum.push_back(to_d(trim(tok)));
    p.spectral_distance_mean = to_d(require("spectral_distance_mean"));
    p.spectral_distance_std = to_d(require("spectral_distance_std"));
    p.force_norm_mean = to_d(require("force_norm_mean"));
    p.force_norm_std = to_d(require("force_norm_std"));
    p.size_mean = to_d(require("size_mean"));
    p.size_std = to_d(require("size_std"));
    for (auto& tok : split_char(require("seen_elements"), ','))
        if (!trim(tok).empty()) p.seen_elements.insert(trim(tok));
    for (const auto& [key, val] : kv) {
        if (key.rfind("composition_mean_", 0) == 0)
            p.composition_mean[key.substr(17)] = to_d(val);
        else if (key.rfind("composition_std_", 0) == 0)
            p.composition_std[key.substr(16)] = to_d(val);
    }
    if (p.seen_elements.empty()) throw InputError("profile " + path + ": seen_elements empty");
    return p;
}

// ---------------------------------------------------------------------------
// Model checkpoint: versioned text container with ArchConfig, species
// vocabulary, partition sizes, and the flat parameter vector.

inline void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write checkpoint " + path);
    out << "checkpoint_version 1\n";
    out << "arch " << params.arch.n_radial_basis << " " << params.arch.hidden_width << " "
        << params.arch.repr_blocks << " " << params.arch.head_blocks << " "
        << fmt_g17(params.arch.cutoff) << " " << params.arch.seed << "\n";
    out << "species " << params.species.size();
    for (const auto& sp : params.species) out << " " << sp;
    out << "\n";
    out << "partition " << params.repr_span().size << " " << params.main_span().size << " "
        << params.prior_span().size << "\n";
    out << "values " << params.values.size() << "\n";
    for (double v : params.values) out << fmt_g17(v) << "\n";
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open checkpoint " + path);
    std::string tag;
    int version = 0;
    in >> tag >> version;
    if (tag != "checkpoint_version" || version != 1)
        throw InputError("checkpoint " + path + ": bad header");

    ModelParams p;
    in >> tag;
    if (tag != "arch") throw InputError("checkpoint " + path + ": expected arch");
    in >> p.arch.n_radial_basis >> p.arch.hidden_width >> p.arch.repr_blocks >>
        p.arch.head_blocks >> p.arch.cutoff >> p.arch.seed;
    p.arch.validate();

    std::size_t n_species = 0;
    in >> tag >> n_species;
    if (tag != "species") throw InputError("checkpoint " + path + ": expected species");
    p.species.resize(n_species);
    for (auto& sp : p.species) in >> sp;

    std::size_t r = 0, m = 0, pr = 0;
    in >> tag >> r >> m >> pr;
    if (tag != "partition") throw InputError("checkpoint " + path + ": expected partition");

    std::size_t count = 0;
    in >> tag >> count;
    if (tag != "values") throw InputError("checkpoint " + path + ": expected values");
    p.values.resize(count);
    for (auto& v : p.values) in >> v;
    if (!in) throw InputError("checkpoint " + path + ": truncated values");

    if (r != p.repr_param_count() || m != p.head_param_count() || pr != p.head_param_count() ||
        count != p.total_param_count())
        throw InputError("checkpoint " + path + ": partition does not match architecture");
    return p;
}

// ---------------------------------------------------------------------------
// CSV writer with a fixed header and deterministic %.12g number formatting.

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header)
        : out_(path), cols_(header.size()) {
        if (!out_) throw InputError("cannot write csv " + path);
        for (std::size_t i = 0; i < header.size(); ++i)
            out_ << (i ? "," : "") << header[i];
        out_ << "\n";
    }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != cols_) throw InputError("csv row width mismatch");
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << "\n";
    }

    static std::string cell(double v) { return fmt_g12(v); }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(int v) { return std::to_string(v); }

private:
    std::ofstream out_;
    std::size_t cols_;
};

}  // namespace ttr
