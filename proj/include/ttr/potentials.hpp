#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ttr/core.hpp"

namespace ttr {

// Lennard-Jones parameters. Stored per species; pair values come from the
// Lorentz-Berthelot combination sigma_ij = (sigma_i+sigma_j)/2,
// epsilon_ij = sqrt(epsilon_i*epsilon_j).
struct PairParams {
    std::map<std::string, double> epsilon;  // eV
    std::map<std::string, double> sigma;    // Angstrom

    bool covers(const std::string& sp) const {
        return epsilon.count(sp) && sigma.count(sp);
    }

    void require(const std::string& sp) const {
        if (!covers(sp)) throw InputError("no pair parameters for species " + sp);
        if (!(epsilon.at(sp) > 0.0) || !(sigma.at(sp) > 0.0))
            throw InputError("pair parameters for " + sp + " must be positive");
    }

    double eps_pair(const std::string& a, const std::string& b) const {
        return std::sqrt(epsilon.at(a) * epsilon.at(b));
    }
    double sigma_pair(const std::string& a, const std::string& b) const {
        return 0.5 * (sigma.at(a) + sigma.at(b));
    }
};

// Calibrated to the default reference oracle: the C-C well sits near the
// Morse minimum with a similar curvature, so prior and reference force norms
// track each other while the prior misses the angular physics.
inline PairParams default_pair_params() {
    PairParams p;
    p.epsilon = {{"H", 0.132}, {"C", 0.156}, {"N", 0.149}, {"O", 0.143}, {"S", 0.175}};
    p.sigma = {{"H", 2.80}, {"C", 2.851}, {"N", 2.84}, {"O", 2.83}, {"S", 2.90}};
    return p;
}

// Synthetic reference potential: Morse pairs plus a short-range r^-12 core
// (so the pair energy diverges as r -> 0) plus a cosine-harmonic three-body
// term damped by exp(-(r/l)^4) with l = 1.1*morse_r0, which confines the
// angular physics to bonded-range triples.
struct ReferenceOracleParams {
    double morse_depth = 0.28;        // eV
    double morse_width = 1.4;         // 1/Angstrom
    double morse_r0 = 3.2;            // Angstrom
    double three_body_strength = 0.60;  // eV; stiff enough to hold template shapes
    double three_body_cos0 = -0.5;    // cos(120 deg)

    void validate() const {
        if (!(morse_depth > 0.0 && morse_width > 0.0 && morse_r0 > 0.0 &&
              three_body_strength > 0.0))
            throw InputError("reference oracle parameters must be positive");
        if (three_body_cos0 < -1.0 || three_body_cos0 > 1.0)
            throw InputError("three_body_cos0 must lie in [-1, 1]");
    }
};

namespace detail {

inline void check_no_coincident(const Structure& s) {
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = i + 1; j < s.size(); ++j)
            if (distance(s.positions[i], s.positions[j]) <= 1e-12)
                throw InputError("coincident atoms " + std::to_string(i) + "," +
                                 std::to_string(j) + " in structure " + s.structure_id);
}

}  // namespace detail

// E = sum_{i<j} 4 eps [(sigma/r)^12 - (sigma/r)^6], forces = -grad E.
inline std::pair<double, std::vector<Vec3>> lj_energy_forces(const Structure& structure,
                                                             const PairParams& params) {
    structure.validate();
    detail::check_no_coincident(structure);
    for (const auto& sp : structure.species) params.require(sp);

    const std::size_t n = structure.size();
    double energy = 0.0;
    std::vector<Vec3> forces(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            Vec3 rij = structure.positions[i] - structure.positions[j];
            double r = rij.norm();
            double sig = params.sigma_pair(structure.species[i], structure.species[j]);
            double eps = params.eps_pair(structure.species[i], structure.species[j]);
            double sr6 = std::pow(sig / r, 6);
            double sr12 = sr6 * sr6;
            energy += 4.0 * eps * (sr12 - sr6);
            // dE/dr = 4 eps (-12 sr12 + 6 sr6)/r; F_i = -dE/dr * rij/r
            double dEdr = 4.0 * eps * (-12.0 * sr12 + 6.0 * sr6) / r;
            Vec3 f = (-dEdr / r) * rij;
            forces[i] += f;
            forces[j] -= f;
        }
    }
    return {energy, forces};
}

// Reference oracle energy/forces. Richer than the LJ prior (angular term)
// while staying analytic and divergent at r -> 0.
inline std::pair<double, std::vector<Vec3>> reference_energy_forces(
    const Structure& structure, const ReferenceOracleParams& params) {
    structure.validate();
    params.validate();
    detail::check_no_coincident(structure);

    const std::size_t n = structure.size();
    const double D = params.morse_depth;
    const double a = params.morse_width;
    const double r0 = params.morse_r0;
    const double core = r0 / 3.0;  // negligible at r0, dominates below ~0.5*r0
    const double l4 = std::pow(1.1 * r0, 4);

    double energy = 0.0;
    std::vector<Vec3> forces(n);

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            Vec3 rij = structure.positions[i] - structure.positions[j];
            double r = rij.norm();
            double ex = std::exp(-a * (r - r0));
            double morse = D * (1.0 - ex) * (1.0 - ex) - D;
            double c12 = std::pow(core / r, 12);
            energy += morse + D * c12;
            double dEdr = 2.0 * D * a * ex * (1.0 - ex) - 12.0 * D * c12 / r;
            Vec3 f = (-dEdr / r) * rij;
            forces[i] += f;
            forces[j] -= f;
        }
    }

    // Three-body: for every vertex j and unordered pair (i,k),
    // S * (cos(theta_ijk) - cos0)^2 * w(r_ji) * w(r_jk), w(r) = exp(-r^4/l^4).
    const double S = params.three_body_strength;
    const double c0 = params.three_body_cos0;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            if (i == j) continue;
            for (std::size_t k = i + 1; k < n; ++k) {
                if (k == j) continue;
                Vec3 u = structure.positions[i] - structure.positions[j];
                Vec3 v = structure.positions[k] - structure.positions[j];
                double ru = u.norm(), rv = v.norm();
                double cosang = u.dot(v) / (ru * rv);
                double wu = std::exp(-ru * ru * ru * ru / l4);
                double wv = std::exp(-rv * rv * rv * rv / l4);
                double dc = cosang - c0;
                energy += S * dc * dc * wu * wv;

                // d cos / du = v/(ru rv) - cos * u/ru^2, same with u<->v.
                Vec3 dcos_du = (1.0 / (ru * rv)) * v - (cosang / (ru * ru)) * u;
                Vec3 dcos_dv = (1.0 / (ru * rv)) * u - (cosang / (rv * rv)) * v;
                // dw(r)/dr = -4 r^3/l^4 * w; gradient wrt u is that times u/ru.
                Vec3 dwu_du = (-4.0 * ru * ru / l4) * wu * u;
                Vec3 dwv_dv = (-4.0 * rv * rv / l4) * wv * v;

                Vec3 dE_du = (2.0 * S * dc * wu * wv) * dcos_du + (S * dc * dc * wv) * dwu_du;
                Vec3 dE_dv = (2.0 * S * dc * wu * wv) * dcos_dv + (S * dc * dc * wu) * dwv_dv;

                forces[i] -= dE_du;
                forces[k] -= dE_dv;
                forces[j] += dE_du + dE_dv;
            }
        }
    }
    return {energy, forces};
}

// Mean/std (population) over all per-atom force norms in the set. Uses the
// reference labels when present, otherwise the prior labels.
inline std::pair<double, double> force_norm_stats(const Dataset& labeled) {
    if (labeled.empty()) throw InputError("force_norm_stats: empty dataset");
    std::vector<double> norms;
    for (const auto& ls : labeled) {
        const Labels* l = ls.reference ? &*ls.reference : (ls.prior ? &*ls.prior : nullptr);
        if (!l) throw InputError("force_norm_stats: structure " + ls.structure.structure_id +
                                 " has no labels");
        for (const auto& f : l->forces) norms.push_back(f.norm());
    }
    return {mean(norms), pop_std(norms)};
}

}  // namespace ttr
