#pragma once

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ttr/core.hpp"
#include "ttr/format.hpp"

namespace ttr {

// Extended-XYZ, one or more frames per file:
//   count line
//   comment line of key=value pairs (structure_id, system_id, label_source,
//     energy / prior_energy when present)
//   per-atom lines: symbol x y z [fx fy fz [pfx pfy pfz]]
// label_source decides the per-atom columns: none -> 4, reference or prior
// -> 7 (the force columns belong to that source), both -> 10.

namespace detail {

inline double parse_double(const std::string& tok, int line) {
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end == nullptr || *end != '\0')
        throw ParseError("bad numeric field '" + tok + "'", line);
    return v;
}

inline std::map<std::string, std::string> parse_kv(const std::string& s, int line) {
    std::map<std::string, std::string> out;
    for (const auto& tok : split_ws(s)) {
        std::size_t eq = tok.find('=');
        if (eq == std::string::npos)
            throw ParseError("comment token '" + tok + "' is not key=value", line);
        out[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return out;
}

}  // namespace detail

inline Dataset parse_extxyz_stream(std::istream& in, const std::string& source_name) {
    Dataset out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string counts = trim(line);
        if (counts.empty()) continue;  // tolerate blank separator lines
        int natoms = 0;
        auto [p, ec] = std::from_chars(counts.data(), counts.data() + counts.size(), natoms);
        if (ec != std::errc() || p != counts.data() + counts.size() || natoms < 1)
            throw ParseError("bad atom count '" + counts + "' in " + source_name, lineno);

        if (!std::getline(in, line))
            throw ParseError("missing comment line in " + source_name, lineno + 1);
        ++lineno;
        auto kv = detail::parse_kv(line, lineno);

        LabeledStructure ls;
        ls.structure.structure_id = kv.count("structure_id") ? kv["structure_id"] : "";
        ls.structure.system_id = kv.count("system_id") ? kv["system_id"] : "";
        std::string source = kv.count("label_source") ? kv["label_source"] : "none";
        bool has_ref = source == "reference" || source == "both";
        bool has_prior = source == "prior" || source == "both";
        if (!has_ref && !has_prior && source != "none")
            throw ParseError("unknown label_source '" + source + "'", lineno);

        if (has_ref) {
            if (!kv.count("energy")) throw ParseError("label_source includes reference but no energy key", lineno);
            ls.reference = Labels{detail::parse_double(kv["energy"], lineno), {}};
        }
        if (has_prior) {
            if (!kv.count("prior_energy"))
                throw ParseError("label_source includes prior but no prior_energy key", lineno);
            ls.prior = Labels{detail::parse_double(kv["prior_energy"], lineno), {}};
        }

        std::size_t expected_cols = 4 + (has_ref ? 3 : 0) + (has_prior ? 3 : 0);
        for (int a = 0; a < natoms; ++a) {
            if (!std::getline(in, line))
                throw ParseError("unexpected end of file: expected " + std::to_string(natoms) +
                                     " atoms in " + source_name,
                                 lineno + 1);
            ++lineno;
            auto toks = split_ws(line);
            if (toks.size() != expected_cols)
                throw ParseError("expected " + std::to_string(expected_cols) +
                                     " columns, got " + std::to_string(toks.size()),
                                 lineno);
            ls.structure.species.push_back(toks[0]);
            ls.structure.positions.push_back({detail::parse_double(toks[1], lineno),
                                              detail::parse_double(toks[2], lineno),
                                              detail::parse_double(toks[3], lineno)});
            std::size_t c = 4;
            if (has_ref) {
                ls.reference->forces.push_back({detail::parse_double(toks[c], lineno),
                                                detail::parse_double(toks[c + 1], lineno),
                                                detail::parse_double(toks[c + 2], lineno)});
                c += 3;
            }
            if (has_prior) {
                ls.prior->forces.push_back({detail::parse_double(toks[c], lineno),
                                            detail::parse_double(toks[c + 1], lineno),
                                            detail::parse_double(toks[c + 2], lineno)});
            }
        }
        ls.validate();
        out.push_back(std::move(ls));
    }
    return out;
}

inline Dataset parse_extxyz(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    return parse_extxyz_stream(in, path);
}

inline void write_extxyz_stream(std::ostream& out, const Dataset& data) {
    for (const auto& ls : data) {
        ls.validate();
        bool has_ref = ls.reference.has_value();
        bool has_prior = ls.prior.has_value();
        std::string source = has_ref && has_prior ? "both"
                             : has_ref            ? "reference"
                             : has_prior          ? "prior"
                                                  : "none";
        out << ls.structure.size() << "\n";
        out << "structure_id=" << ls.structure.structure_id
            << " system_id=" << ls.structure.system_id << " label_source=" << source;
        if (has_ref) out << " energy=" << fmt_g17(ls.reference->energy);
        if (has_prior) out << " prior_energy=" << fmt_g17(ls.prior->energy);
        out << "\n";
        for (std::size_t i = 0; i < ls.structure.size(); ++i) {
            const Vec3& p = ls.structure.positions[i];
            out << ls.structure.species[i] << " " << fmt_g17(p.x) << " " << fmt_g17(p.y)
                << " " << fmt_g17(p.z);
            if (has_ref) {
                const Vec3& f = ls.reference->forces[i];
                out << " " << fmt_g17(f.x) << " " << fmt_g17(f.y) << " " << fmt_g17(f.z);
            }
            if (has_prior) {
                const Vec3& f = ls.prior->forces[i];
                out << " " << fmt_g17(f.x) << " " << fmt_g17(f.y) << " " << fmt_g17(f.z);
            }
            out << "\n";
        }
    }
}

inline void write_extxyz(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    write_extxyz_stream(out, data);
}

}  // namespace ttr
