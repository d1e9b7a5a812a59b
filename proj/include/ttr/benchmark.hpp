#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "ttr/core.hpp"
#include "ttr/format.hpp"
#include "ttr/md.hpp"
#include "ttr/potentials.hpp"
#include "ttr/rng.hpp"
#include "ttr/spectra.hpp"

namespace ttr {

// Template molecule: "kind:count:species", e.g. "chain:6:C,N" (species cycle
// along the atoms). Kinds: chain (120-degree zigzag), ring (regular polygon),
// branch (central vertex with three arms), tetra (center plus shell).
struct TemplateSpec {
    std::string kind;
    std::size_t n = 0;
    std::vector<std::string> species_cycle;

    std::string name() const {
        // species joined with '-' so the name is safe inside CSV fields
        std::string s = kind + ":" + std::to_string(n) + ":";
        for (std::size_t i = 0; i < species_cycle.size(); ++i)
            s += (i ? "-" : "") + species_cycle[i];
        return s;
    }
};

inline TemplateSpec parse_template(const std::string& text) {
    auto parts = split_char(text, ':');
    if (parts.size() != 3) throw InputError("template must be kind:count:species, got " + text);
    TemplateSpec spec;
    spec.kind = trim(parts[0]);
    spec.n = static_cast<std::size_t>(std::strtoul(parts[1].c_str(), nullptr, 10));
    for (auto& sp : split_char(parts[2], ','))
        if (!trim(sp).empty()) spec.species_cycle.push_back(trim(sp));
    if (spec.n < 2 || spec.n > 64) throw InputError("template atom count out of range: " + text);
    if (spec.species_cycle.empty()) throw InputError("template has no species: " + text);
    if (spec.kind != "chain" && spec.kind != "ring" && spec.kind != "branch" &&
        spec.kind != "tetra")
        throw InputError("unknown template kind: " + spec.kind);
    return spec;
}

inline Structure build_template_structure(const TemplateSpec& spec, double bond) {
    Structure s;
    s.system_id = spec.name();
    s.structure_id = spec.name();
    for (std::size_t i = 0; i < spec.n; ++i)
        s.species.push_back(spec.species_cycle[i % spec.species_cycle.size()]);

    if (spec.kind == "chain") {
        // zigzag with 120-degree internal angles
        Vec3 pos{0, 0, 0};
        for (std::size_t i = 0; i < spec.n; ++i) {
            s.positions.push_back(pos);
            double up = (i % 2 == 0) ? 1.0 : -1.0;
            pos += Vec3{bond * std::cos(M_PI / 6.0), up * bond * std::sin(M_PI / 6.0), 0.0};
        }
    } else if (spec.kind == "ring") {
        double radius = bond / (2.0 * std::sin(M_PI / static_cast<double>(spec.n)));
        for (std::size_t i = 0; i < spec.n; ++i) {
            double ang = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(spec.n);
            s.positions.push_back({radius * std::cos(ang), radius * std::sin(ang), 0.0});
        }
    } else if (spec.kind == "branch") {
        // central vertex with three arms at 120 degrees, atoms dealt round-robin
        s.positions.push_back({0, 0, 0});
        Vec3 dirs[3] = {{1.0, 0.0, 0.0},
                        {std::cos(2.0 * M_PI / 3.0), std::sin(2.0 * M_PI / 3.0), 0.0},
                        {std::cos(4.0 * M_PI / 3.0), std::sin(4.0 * M_PI / 3.0), 0.0}};
        std::size_t depth[3] = {0, 0, 0};
        for (std::size_t i = 1; i < spec.n; ++i) {
            std::size_t arm = (i - 1) % 3;
            ++depth[arm];
            s.positions.push_back(static_cast<double>(depth[arm]) * bond * dirs[arm]);
        }
    } else {  // tetra
        if (spec.n > 5) throw InputError("tetra template supports at most 5 atoms");
        s.positions.push_back({0, 0, 0});
        const double inv_sqrt3 = 1.0 / std::sqrt(3.0);
        Vec3 verts[4] = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
        for (std::size_t i = 1; i < spec.n; ++i)
            s.positions.push_back(bond * inv_sqrt3 * verts[i - 1]);
    }
    return s;
}

struct GeneratorConfig {
    std::vector<TemplateSpec> train_templates;
    TemplateSpec holdout_template;
    TemplateSpec unseen_element_template;
    int train_frames_per_template = 100;
    int id_test_frames_per_template = 25;
    int ood_frames = 32;
    double sample_temperature = 300.0;   // K, training templates
    double holdout_temperature = 150.0;  // K, holdout/unseen templates stay in their basin
    double bond_scale = 1.0;             // bond length = bond_scale * morse_r0
    double compress_forcenorm_lo = 0.90, compress_forcenorm_hi = 0.93;
    double compress_combined_lo = 0.80, compress_combined_hi = 0.86;
    double cutoff = 4.5;
    std::uint64_t seed = 0;
    PairParams prior = default_pair_params();
    ReferenceOracleParams reference;

    static GeneratorConfig defaults() {
        GeneratorConfig g;
        g.train_templates = {parse_template("chain:6:C,N"), parse_template("branch:6:C,N"),
                             parse_template("chain:6:N,C")};
        g.holdout_template = parse_template("ring:6:C,N");
        g.unseen_element_template = parse_template("ring:6:S");
        return g;
    }
};

struct Benchmark {
    Dataset train;             // reference + prior labels
    Dataset id_test;           // held-out frames of the training templates
    Dataset ood_connectivity;  // holdout molecule at its natural geometry
    Dataset ood_forcenorm;     // compressed training-template frames
    Dataset ood_combined;      // compressed holdout frames (connectivity + force norm)
    Dataset ood_element;       // unseen-element variant (diagnostics only)
    TrainingProfile profile;
};

namespace detail {

inline LabeledStructure label_frame(Structure s, const GeneratorConfig& cfg) {
    LabeledStructure ls;
    auto [re, rf] = reference_energy_forces(s, cfg.reference);
    ls.reference = Labels{re, rf};
    auto [pe, pf] = lj_energy_forces(s, cfg.prior);
    ls.prior = Labels{pe, pf};
    ls.structure = std::move(s);
    return ls;
}

// Samples frames from reference-potential Langevin dynamics. On instability
// the temperature is reduced and the run resampled.
inline std::vector<Structure> sample_frames(const TemplateSpec& spec, const GeneratorConfig& cfg,
                                            int n_frames, std::uint64_t seed,
                                            double start_temperature) {
    Structure start = build_template_structure(spec, cfg.bond_scale * cfg.reference.morse_r0);
    ForceProvider force = [&cfg](const Structure& s) {
        auto [e, f] = reference_energy_forces(s, cfg.reference);
        return EnergyForces{e, f};
    };

    const int spacing = 40;       // steps between kept frames (20 fs at dt 0.5)
    const int burn_in_steps = 2000;
    double temperature = start_temperature;
    for (int attempt = 0; attempt < 4; ++attempt) {
        SimConfig sim;
        sim.dt = 0.5;
        sim.temperature = temperature;
        sim.friction = 0.01;
        sim.seed = seed + static_cast<std::uint64_t>(attempt) * 7919;
        sim.record_interval = spacing;
        sim.total_time = (burn_in_steps + spacing * n_frames) * sim.dt / 1000.0;

        Trajectory traj = run_nvt(force, start, sim);
        bool intact = !traj.unstable;
        std::vector<Structure> frames;
        if (intact) {
            int skip = burn_in_steps / spacing;
            int idx = 0;
            for (const auto& fr : traj.frames) {
                if (idx++ < skip) continue;
                if (static_cast<int>(frames.size()) >= n_frames) break;
                Structure s = start;
                s.positions = fr.positions;
                s.structure_id = spec.name() + "#" + std::to_string(frames.size());
                // the molecule must stay in one piece at the working cutoff
                if (connected_components(build_radius_graph(s, cfg.cutoff)) != 1) {
                    intact = false;
                    break;
                }
                frames.push_back(std::move(s));
            }
        }
        if (intact && static_cast<int>(frames.size()) == n_frames) return frames;
        std::cerr << "generate: " << spec.name() << " unstable or fragmented at " << temperature
                  << " K, retrying at " << temperature * 0.7 << " K\n";
        temperature *= 0.7;
    }
    throw NumericError("generate: could not sample stable frames for " + spec.name());
}

inline Structure compress_structure(const Structure& src, double factor, int index,
                                    const std::string& tag) {
    Structure s = src;
    Vec3 center{0, 0, 0};
    for (const auto& p : s.positions) center += p;
    center *= 1.0 / static_cast<double>(s.size());
    for (auto& p : s.positions) p = center + factor * (p - center);
    s.structure_id = src.system_id + "-" + tag + "#" + std::to_string(index);
    s.system_id = src.system_id + "-" + tag;
    return s;
}

inline double mean_force_norm(const Dataset& data) {
    std::vector<double> norms;
    for (const auto& ls : data)
        for (const auto& f : ls.reference->forces) norms.push_back(f.norm());
    return mean(norms);
}

}  // namespace detail

// Builds the full synthetic benchmark: labeled train/ID-test sets from the
// training templates, OOD splits by axis, and the training profile. The
// compressed splits are re-compressed at smaller factors until their mean
// per-atom force norm clears the training mean + 1 std.
inline Benchmark generate_benchmark(const GeneratorConfig& cfg) {
    if (cfg.train_templates.empty()) throw InputError("generate_benchmark: no train templates");
    Benchmark b;
    Rng rng(cfg.seed ^ 0x510E527FADE682D1ull);

    std::vector<std::vector<Structure>> id_frames_per_template;
    for (std::size_t t = 0; t < cfg.train_templates.size(); ++t) {
        int total = cfg.train_frames_per_template + cfg.id_test_frames_per_template;
        auto frames = detail::sample_frames(cfg.train_templates[t], cfg, total,
                                            cfg.seed * 1000003ull + t * 101ull + 1ull,
                                            cfg.sample_temperature);
        // interleave the ID-test frames through the trajectory so both splits
        // cover the same span
        int stride = std::max(1, total / std::max(1, cfg.id_test_frames_per_template));
        std::vector<Structure> id_part;
        for (int i = 0; i < total; ++i) {
            bool to_id = (i % stride == stride - 1) &&
                         static_cast<int>(id_part.size()) < cfg.id_test_frames_per_template;
            if (to_id)
                id_part.push_back(frames[i]);
            else
                b.train.push_back(detail::label_frame(std::move(frames[i]), cfg));
        }
        for (const auto& fr : id_part) b.id_test.push_back(detail::label_frame(fr, cfg));
        id_frames_per_template.push_back(std::move(id_part));
    }
    b.profile = build_training_profile(b.train, cfg.cutoff);

    auto holdout_frames = detail::sample_frames(cfg.holdout_template, cfg, cfg.ood_frames,
                                                cfg.seed * 1000003ull + 777ull,
                                                cfg.holdout_temperature);
    for (const auto& fr : holdout_frames) b.ood_connectivity.push_back(detail::label_frame(fr, cfg));

    double fn_threshold = b.profile.force_norm_mean + b.profile.force_norm_std;

    // force-norm split: compressed training-template frames, same connectivity
    double lo = cfg.compress_forcenorm_lo, hi = cfg.compress_forcenorm_hi;
    for (int attempt = 0; attempt < 5; ++attempt) {
        b.ood_forcenorm.clear();
        Rng crng = rng.child(31 + attempt);
        int idx = 0;
        for (const auto& id_part : id_frames_per_template)
            for (const auto& fr : id_part) {
                if (idx >= cfg.ood_frames * static_cast<int>(id_frames_per_template.size()))
                    break;
                b.ood_forcenorm.push_back(detail::label_frame(
                    detail::compress_structure(fr, crng.uniform(lo, hi), idx, "compressed"),
                    cfg));
                ++idx;
            }
        if (detail::mean_force_norm(b.ood_forcenorm) > fn_threshold) break;
        std::cerr << "generate: force-norm split below threshold, tightening compression\n";
        lo -= 0.02;
        hi -= 0.02;
    }

    // combined split: compressed holdout frames (connectivity + force norm)
    lo = cfg.compress_combined_lo;
    hi = cfg.compress_combined_hi;
    for (int attempt = 0; attempt < 5; ++attempt) {
        b.ood_combined.clear();
        Rng crng = rng.child(57 + attempt);
        for (std::size_t i = 0; i < holdout_frames.size(); ++i)
            b.ood_combined.push_back(detail::label_frame(
                detail::compress_structure(holdout_frames[i], crng.uniform(lo, hi),
                                           static_cast<int>(i), "squeezed"),
                cfg));
        if (detail::mean_force_norm(b.ood_combined) > fn_threshold) break;
        std::cerr << "generate: combined split below threshold, tightening compression\n";
        lo -= 0.02;
        hi -= 0.02;
    }

    auto unseen_frames = detail::sample_frames(cfg.unseen_element_template, cfg, cfg.ood_frames,
                                               cfg.seed * 1000003ull + 991ull,
                                               cfg.holdout_temperature);
    for (const auto& fr : unseen_frames) b.ood_element.push_back(detail::label_frame(fr, cfg));
    return b;
}

}  // namespace ttr
