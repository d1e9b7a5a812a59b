#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "ttr/core.hpp"
#include "ttr/model.hpp"
#include "ttr/spectra.hpp"

namespace ttr {

// Default search grid: 10 cutoffs spanning [0.7, 1.6] x train_cutoff plus the
// training cutoff itself, deduplicated and sorted.
inline std::vector<double> default_rr_candidates(double train_cutoff) {
    if (!(train_cutoff > 0.0)) throw InputError("default_rr_candidates: cutoff must be > 0");
    std::vector<double> out;
    for (int i = 0; i < 10; ++i)
        out.push_back(train_cutoff * (0.7 + 0.9 * static_cast<double>(i) / 9.0));
    out.push_back(train_cutoff);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end(),
                          [](double a, double b) { return std::abs(a - b) < 1e-12; }),
              out.end());
    return out;
}

struct RefineResult {
    double best_cutoff = 0.0;
    double best_distance = 0.0;
    std::vector<double> candidates;
    std::vector<double> distances;  // aligned with candidates
};

// Searches candidate cutoffs for the one whose Laplacian spectrum is closest
// to the training profile. The candidate list must contain train_cutoff so
// the search can always revert to the training graph construction.
inline RefineResult refine_radius(const Structure& structure, const TrainingProfile& profile,
                                  const std::vector<double>& candidates) {
    if (candidates.empty()) throw InputError("refine_radius: empty candidate list");
    bool has_train = false;
    for (double c : candidates) {
        if (!(c > 0.0)) throw InputError("refine_radius: candidates must be > 0");
        if (std::abs(c - profile.train_cutoff) < 1e-12) has_train = true;
    }
    if (!has_train)
        throw InputError("refine_radius: candidate list must contain train_cutoff");

    RefineResult res;
    res.candidates = candidates;
    res.distances.reserve(candidates.size());
    for (double c : candidates) {
        auto spectrum = laplacian_spectrum(build_radius_graph(structure, c));
        res.distances.push_back(distance_to_profile(spectrum, profile));
    }

    // argmin; ties resolved toward the candidate nearest train_cutoff, then
    // toward the smaller radius
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        double di = res.distances[i], db = res.distances[best];
        if (di < db) {
            best = i;
        } else if (di == db) {
            double gi = std::abs(candidates[i] - profile.train_cutoff);
            double gb = std::abs(candidates[best] - profile.train_cutoff);
            if (gi < gb || (gi == gb && candidates[i] < candidates[best])) best = i;
        }
    }
    res.best_cutoff = candidates[best];
    res.best_distance = res.distances[best];
    return res;
}

// Prediction context pinning a refined cutoff: the graph and envelope of all
// subsequent evaluations use best_cutoff. For simulations the cutoff is chosen
// once at the start and held fixed.
class RefinedPredictor {
public:
    RefinedPredictor(const ModelParams& model, double cutoff)
        : model_(model), cutoff_(cutoff) {
        if (!(cutoff > 0.0)) throw InputError("RefinedPredictor: cutoff must be > 0");
    }

    EnergyForces energy_forces(const Structure& s, Head head = Head::Main) const {
        return forward_energy_forces(model_, s, head, cutoff_);
    }

    double cutoff() const { return cutoff_; }
    const ModelParams& model() const { return model_; }

private:
    ModelParams model_;
    double cutoff_;
};

inline RefinedPredictor apply_refined_cutoff(const ModelParams& model, double best_cutoff) {
    return RefinedPredictor(model, best_cutoff);
}

}  // namespace ttr
