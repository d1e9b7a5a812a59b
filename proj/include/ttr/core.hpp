#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ttr {

// Thrown for malformed caller input (bad shapes, unknown species, ...).
struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Thrown when a numeric routine cannot deliver (non-convergence, rank deficiency).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown by file parsers; carries a 1-based line number.
struct ParseError : std::runtime_error {
    int line;
    ParseError(const std::string& msg, int line_)
        : std::runtime_error(msg + " (line " + std::to_string(line_) + ")"), line(line_) {}
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

    friend Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
    friend Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
    friend Vec3 operator*(double s, Vec3 a) { return a *= s; }
    friend Vec3 operator*(Vec3 a, double s) { return a *= s; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm2() const { return dot(*this); }
    double norm() const { return std::sqrt(norm2()); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

// One molecular configuration: species symbols plus Cartesian positions (Angstrom).
// system_id groups configurations of the same molecule.
struct Structure {
    std::vector<std::string> species;
    std::vector<Vec3> positions;
    std::string structure_id;
    std::string system_id;

    std::size_t size() const { return species.size(); }

    void validate() const {
        if (species.empty()) throw InputError("structure has no atoms");
        if (species.size() != positions.size())
            throw InputError("species/positions size mismatch");
        for (const auto& p : positions)
            if (!p.finite()) throw InputError("non-finite coordinates in structure " + structure_id);
        for (const auto& s : species)
            if (s.empty()) throw InputError("empty species symbol");
    }
};

// Energy (eV) and per-atom forces (eV/Angstrom) from one label source.
struct Labels {
    double energy = 0.0;
    std::vector<Vec3> forces;
};

// A structure with reference and/or prior labels. Both can be present side by
// side so one record supports joint training.
struct LabeledStructure {
    Structure structure;
    std::optional<Labels> reference;
    std::optional<Labels> prior;

    void validate() const {
        structure.validate();
        for (const auto* l : {&reference, &prior})
            if (l->has_value() && (*l)->forces.size() != structure.size())
                throw InputError("label force count does not match atom count for " +
                                 structure.structure_id);
    }
};

using Dataset = std::vector<LabeledStructure>;

// Boltzmann constant, eV per Kelvin.
inline constexpr double kBoltzmann = 8.617333262e-5;

// 1 eV/(Angstrom*amu) expressed in Angstrom/fs^2; its reciprocal converts
// amu*(Angstrom/fs)^2 to eV.
inline constexpr double kForceAccel = 9.648533212331183e-3;

inline double mean(const std::vector<double>& xs) {
    if (xs.empty()) throw InputError("mean of empty vector");
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Population standard deviation (documented convention everywhere in this library).
inline double pop_std(const std::vector<double>& xs) {
    double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size()));
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw InputError("pearson: bad input sizes");
    double ma = mean(a), mb = mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace ttr
