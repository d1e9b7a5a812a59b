#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ttr/core.hpp"
#include "ttr/model.hpp"
#include "ttr/potentials.hpp"
#include "ttr/spectra.hpp"

namespace ttr {

enum class Flag { False, True, Indeterminate };

inline const char* flag_name(Flag f) {
    switch (f) {
        case Flag::False: return "false";
        case Flag::True: return "true";
        default: return "indeterminate";
    }
}

// Per-structure distribution-shift report along the three axes: atomic
// features (unseen element, size, composition), force norm (via the prior
// proxy), and connectivity (spectral distance). Booleans follow the 1-sigma
// rule against the training profile.
struct ShiftReport {
    std::string structure_id;
    bool unseen_element = false;
    bool size_ood = false;
    bool composition_ood = false;
    Flag force_norm_ood = Flag::False;
    bool connectivity_ood = false;
    double spectral_distance = 0.0;
    double prior_force_norm = 0.0;  // mean per-atom prior force norm; NaN if indeterminate
    std::size_t n_atoms = 0;

    bool atomic_feature_ood() const { return unseen_element || size_ood || composition_ood; }
    bool any_ood() const {
        return atomic_feature_ood() || force_norm_ood == Flag::True || connectivity_ood;
    }
};

// Diagnosis needs no reference labels: force norms come from the prior, the
// other axes from the structure alone.
inline ShiftReport diagnose(const Structure& structure, const TrainingProfile& profile,
                            const PairParams& prior) {
    structure.validate();
    ShiftReport rep;
    rep.structure_id = structure.structure_id;
    rep.n_atoms = structure.size();

    for (const auto& sp : structure.species)
        if (!profile.seen_elements.count(sp)) rep.unseen_element = true;

    double n = static_cast<double>(structure.size());
    rep.size_ood = std::abs(n - profile.size_mean) > profile.size_std;

    for (const auto& sp : profile.seen_elements) {
        double count = 0.0;
        for (const auto& s : structure.species)
            if (s == sp) count += 1.0;
        double frac = count / n;
        auto mit = profile.composition_mean.find(sp);
        auto sit = profile.composition_std.find(sp);
        if (mit != profile.composition_mean.end() && sit != profile.composition_std.end() &&
            std::abs(frac - mit->second) > sit->second)
            rep.composition_ood = true;
    }

    bool prior_covers = true;
    for (const auto& sp : structure.species)
        if (!prior.covers(sp)) prior_covers = false;
    if (prior_covers) {
        auto [e, forces] = lj_energy_forces(structure, prior);
        (void)e;
        double acc = 0.0;
        for (const auto& f : forces) acc += f.norm();
        rep.prior_force_norm = acc / n;
        rep.force_norm_ood = std::abs(rep.prior_force_norm - profile.force_norm_mean) >
                                     profile.force_norm_std
                                 ? Flag::True
                                 : Flag::False;
    } else {
        rep.prior_force_norm = std::nan("");
        rep.force_norm_ood = Flag::Indeterminate;
    }

    auto spectrum = laplacian_spectrum(build_radius_graph(structure, profile.train_cutoff));
    rep.spectral_distance = distance_to_profile(spectrum, profile);
    rep.connectivity_ood = rep.spectral_distance >
                           profile.spectral_distance_mean + profile.spectral_distance_std;
    return rep;
}

enum class ShiftAxis { ForceNorm, Connectivity, Size };

inline const char* axis_name(ShiftAxis a) {
    switch (a) {
        case ShiftAxis::ForceNorm: return "force_norm";
        case ShiftAxis::Connectivity: return "connectivity";
        default: return "size";
    }
}

struct ShiftBin {
    ShiftAxis axis;
    int bin = 0;
    double lo = 0.0, hi = 0.0;
    std::size_t count = 0;
    double mean_force_mae = 0.0;
    bool ood_bin = false;  // bin midpoint beyond the 1-sigma band of the profile
};

// The paper-style isolation filter: when studying one axis, drop structures
// that are OOD on any other axis.
inline bool isolates_axis(const ShiftReport& rep, ShiftAxis axis) {
    bool fn = rep.force_norm_ood == Flag::True;
    bool conn = rep.connectivity_ood;
    bool atom = rep.atomic_feature_ood();
    switch (axis) {
        case ShiftAxis::ForceNorm: return !conn && !atom;
        case ShiftAxis::Connectivity: return !fn && !atom;
        case ShiftAxis::Size: return !fn && !conn && !rep.unseen_element && !rep.composition_ood;
    }
    return true;
}

// Bins test structures along each shift axis and reports mean force MAE per
// bin. Requires reference labels; model errors come from the main head.
inline std::vector<ShiftBin> error_vs_shift_table(const ModelParams& model, const Dataset& test,
                                                  const TrainingProfile& profile,
                                                  const PairParams& prior, int n_bins,
                                                  bool isolate_axes = true) {
    if (n_bins < 1) throw InputError("error_vs_shift_table: n_bins must be >= 1");
    if (test.empty()) throw InputError("error_vs_shift_table: empty test set");

    struct Sample {
        ShiftReport rep;
        double mae;
    };
    std::vector<Sample> samples;
    for (const auto& ls : test) {
        if (!ls.reference)
            throw InputError("error_vs_shift_table: reference labels required");
        auto pred = forward_energy_forces(model, ls.structure, Head::Main);
        samples.push_back(
            {diagnose(ls.structure, profile, prior), force_mae(pred.forces, ls.reference->forces)});
    }

    std::vector<ShiftBin> out;
    for (ShiftAxis axis : {ShiftAxis::ForceNorm, ShiftAxis::Connectivity, ShiftAxis::Size}) {
        auto value_of = [&](const Sample& s) {
            switch (axis) {
                case ShiftAxis::ForceNorm: return s.rep.prior_force_norm;
                case ShiftAxis::Connectivity: return s.rep.spectral_distance;
                default: return static_cast<double>(s.rep.n_atoms);
            }
        };
        std::vector<const Sample*> pool;
        for (const auto& s : samples) {
            if (axis == ShiftAxis::ForceNorm && s.rep.force_norm_ood == Flag::Indeterminate)
                continue;
            if (isolate_axes && !isolates_axis(s.rep, axis)) continue;
            pool.push_back(&s);
        }
        if (pool.empty()) continue;

        double lo = value_of(*pool.front()), hi = lo;
        for (const auto* s : pool) {
            lo = std::min(lo, value_of(*s));
            hi = std::max(hi, value_of(*s));
        }
        double width = (hi > lo) ? (hi - lo) / n_bins : 1.0;

        double band_lo, band_hi;
        switch (axis) {
            case ShiftAxis::ForceNorm:
                band_lo = profile.force_norm_mean - profile.force_norm_std;
                band_hi = profile.force_norm_mean + profile.force_norm_std;
                break;
            case ShiftAxis::Connectivity:
                band_lo = 0.0;
                band_hi = profile.spectral_distance_mean + profile.spectral_distance_std;
                break;
            default:
                band_lo = profile.size_mean - profile.size_std;
                band_hi = profile.size_mean + profile.size_std;
                break;
        }

        for (int b = 0; b < n_bins; ++b) {
            ShiftBin bin;
            bin.axis = axis;
            bin.bin = b;
            bin.lo = lo + b * width;
            bin.hi = (b == n_bins - 1) ? hi : lo + (b + 1) * width;
            double mid = 0.5 * (bin.lo + bin.hi);
            bin.ood_bin = mid < band_lo || mid > band_hi;
            double acc = 0.0;
            for (const auto* s : pool) {
                double v = value_of(*s);
                bool inside = (b == n_bins - 1) ? (v >= bin.lo && v <= bin.hi)
                                                : (v >= bin.lo && v < bin.hi);
                if (inside) {
                    ++bin.count;
                    acc += s->mae;
                }
            }
            bin.mean_force_mae = bin.count ? acc / static_cast<double>(bin.count) : 0.0;
            out.push_back(bin);
        }
    }
    return out;
}

}  // namespace ttr
