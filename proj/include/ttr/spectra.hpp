#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ttr/core.hpp"
#include "ttr/graph.hpp"
#include "ttr/jacobi.hpp"

namespace ttr {

// Eigenvalues of the symmetric normalized Laplacian, sorted descending.
struct Spectrum {
    std::vector<double> eigenvalues;
    std::size_t n = 0;

    std::size_t size() const { return eigenvalues.size(); }
};

// L = I - D^{-1/2} A D^{-1/2}. Isolated nodes get L_ii = 0 (not 1), so each
// contributes eigenvalue 0 and the zero-multiplicity still counts components.
inline SymMatrix normalized_laplacian(const RadiusGraph& g) {
    SymMatrix L(g.n);
    std::vector<double> inv_sqrt_deg(g.n, 0.0);
    for (std::size_t i = 0; i < g.n; ++i) {
        if (g.degrees[i] > 0) {
            inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(g.degrees[i]));
            L.at(i, i) = 1.0;
        }
    }
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j : g.neighbors[i])
            L.at(i, j) = -inv_sqrt_deg[i] * inv_sqrt_deg[j];
    return L;
}

inline Spectrum laplacian_spectrum(const RadiusGraph& g) {
    Spectrum s;
    s.n = g.n;
    s.eigenvalues = jacobi_eigen(normalized_laplacian(g)).eigenvalues;
    // L is positive semidefinite; negative values are Jacobi roundoff. Snapping
    // them to 0 keeps zero-padded spectra non-increasing.
    for (double& ev : s.eigenvalues)
        if (ev < 0.0 && ev > -1e-10) ev = 0.0;
    std::sort(s.eigenvalues.begin(), s.eigenvalues.end(), std::greater<double>());
    return s;
}

// Descending eigenvalues followed by trailing zeros, so padding never breaks
// sortedness.
inline std::vector<double> pad_spectrum(const Spectrum& s, std::size_t target_len) {
    if (target_len < s.size())
        throw InputError("pad_spectrum: target_len smaller than spectrum length");
    std::vector<double> out(s.eigenvalues);
    out.resize(target_len, 0.0);
    return out;
}

// Squared spectral distance between two equally padded spectra.
inline double spectral_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw InputError("spectral_distance: length mismatch (caller pads to max)");
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        double diff = a[k] - b[k];
        d += diff * diff;
    }
    return d;
}

inline double spectral_distance(const Spectrum& a, const Spectrum& b) {
    std::size_t len = std::max(a.size(), b.size());
    return spectral_distance(pad_spectrum(a, len), pad_spectrum(b, len));
}

// Connectivity, force-norm, size, and composition statistics of a training set.
// All std fields use the population convention.
struct TrainingProfile {
    std::vector<double> mean_spectrum;   // padded to the max training graph size
    double spectral_distance_mean = 0.0;
    double spectral_distance_std = 0.0;
    double force_norm_mean = 0.0;        // eV/Angstrom, per-atom norms
    double force_norm_std = 0.0;
    double size_mean = 0.0;              // atom counts
    double size_std = 0.0;
    std::set<std::string> seen_elements;
    std::map<std::string, double> composition_mean;  // per-species atom fraction
    std::map<std::string, double> composition_std;
    double train_cutoff = 0.0;
};

// Distance of one spectrum to the profile mean, padding both sides to the
// larger length (test graphs may exceed the training max size).
inline double distance_to_profile(const Spectrum& s, const TrainingProfile& profile) {
    std::size_t len = std::max(s.size(), profile.mean_spectrum.size());
    std::vector<double> mean_padded(profile.mean_spectrum);
    mean_padded.resize(len, 0.0);
    return spectral_distance(pad_spectrum(s, len), mean_padded);
}

inline TrainingProfile build_training_profile(const Dataset& dataset, double cutoff) {
    if (dataset.empty()) throw InputError("build_training_profile: empty dataset");
    for (const auto& ls : dataset) {
        ls.validate();
        if (!ls.reference)
            throw InputError("build_training_profile: structure " + ls.structure.structure_id +
                             " has no reference labels");
    }

    TrainingProfile p;
    p.train_cutoff = cutoff;

    std::vector<Spectrum> spectra;
    spectra.reserve(dataset.size());
    std::size_t max_len = 0;
    for (const auto& ls : dataset) {
        spectra.push_back(laplacian_spectrum(build_radius_graph(ls.structure, cutoff)));
        max_len = std::max(max_len, spectra.back().size());
    }

    p.mean_spectrum.assign(max_len, 0.0);
    for (const auto& s : spectra) {
        auto padded = pad_spectrum(s, max_len);
        for (std::size_t k = 0; k < max_len; ++k) p.mean_spectrum[k] += padded[k];
    }
    for (double& v : p.mean_spectrum) v /= static_cast<double>(spectra.size());

    std::vector<double> dists;
    dists.reserve(spectra.size());
    for (const auto& s : spectra)
        dists.push_back(spectral_distance(pad_spectrum(s, max_len), p.mean_spectrum));
    p.spectral_distance_mean = mean(dists);
    p.spectral_distance_std = pop_std(dists);

    std::vector<double> force_norms;
    std::vector<double> sizes;
    std::map<std::string, std::vector<double>> fractions;
    for (const auto& ls : dataset) {
        for (const auto& f : ls.reference->forces) force_norms.push_back(f.norm());
        sizes.push_back(static_cast<double>(ls.structure.size()));
        for (const auto& sp : ls.structure.species) p.seen_elements.insert(sp);
    }
    for (const auto& ls : dataset) {
        std::map<std::string, double> counts;
        for (const auto& sp : ls.structure.species) counts[sp] += 1.0;
        for (const auto& sp : p.seen_elements)
            fractions[sp].push_back((counts.count(sp) ? counts[sp] : 0.0) /
                                    static_cast<double>(ls.structure.size()));
    }
    p.force_norm_mean = mean(force_norms);
    p.force_norm_std = pop_std(force_norms);
    p.size_mean = mean(sizes);
    p.size_std = pop_std(sizes);
    for (const auto& [sp, fr] : fractions) {
        p.composition_mean[sp] = mean(fr);
        p.composition_std[sp] = pop_std(fr);
    }
    return p;
}

// Number of training spectra within `epsilon` spectral distance of the test
// spectrum, with mutual padding per pair.
inline std::size_t count_within_cutoff(const Spectrum& test,
                                       const std::vector<Spectrum>& training_spectra,
                                       double epsilon) {
    if (!(epsilon >= 0.0)) throw InputError("count_within_cutoff: epsilon must be >= 0");
    std::size_t count = 0;
    for (const auto& tr : training_spectra)
        if (spectral_distance(test, tr) <= epsilon) ++count;
    return count;
}

}  // namespace ttr
