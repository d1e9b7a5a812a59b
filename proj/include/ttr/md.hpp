#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ttr/core.hpp"
#include "ttr/format.hpp"
#include "ttr/model.hpp"
#include "ttr/rng.hpp"

namespace ttr {

// Standard atomic masses (amu).
inline double atomic_mass(const std::string& species) {
    static const std::map<std::string, double> table = {
        {"H", 1.008},   {"He", 4.0026}, {"Li", 6.94},   {"B", 10.81},   {"C", 12.011},
        {"N", 14.007},  {"O", 15.999},  {"F", 18.998},  {"Na", 22.990}, {"Mg", 24.305},
        {"Si", 28.085}, {"P", 30.974},  {"S", 32.06},   {"Cl", 35.45},  {"Ar", 39.948},
        {"K", 39.098},  {"Ca", 40.078}, {"Fe", 55.845}, {"Cu", 63.546}, {"Zn", 65.38},
        {"Br", 79.904}, {"I", 126.90}};
    auto it = table.find(species);
    if (it == table.end()) throw InputError("no atomic mass for species " + species);
    return it->second;
}

using ForceProvider = std::function<EnergyForces(const Structure&)>;

struct SimConfig {
    double dt = 0.5;                 // fs
    double total_time = 10.0;        // ps
    double temperature = 500.0;      // K
    double friction = 0.01;          // 1/fs (NVT only)
    double equilibration_time = 0.0; // ps of NVT before an NVE run
    std::uint64_t seed = 0;
    int record_interval = 10;        // steps between recorded frames

    void validate() const {
        if (!(dt > 0.0)) throw InputError("SimConfig: dt must be > 0");
        if (!(total_time > 0.0)) throw InputError("SimConfig: total_time must be > 0");
        if (record_interval < 1) throw InputError("SimConfig: record_interval must be >= 1");
        if (temperature < 0.0 || friction < 0.0)
            throw InputError("SimConfig: negative temperature or friction");
    }
};

struct Frame {
    double time = 0.0;  // ps
    std::vector<Vec3> positions;
    std::vector<Vec3> velocities;  // Angstrom/fs
    double potential_energy = 0.0;
    double total_energy = 0.0;
};

struct Trajectory {
    std::vector<Frame> frames;
    Structure initial;
    SimConfig config;
    std::string ensemble;  // "nvt" | "nve"
    bool unstable = false;
    std::string instability_reason;

    double duration() const { return frames.empty() ? 0.0 : frames.back().time; }
};

namespace detail {

inline double kinetic_energy(const std::vector<double>& masses, const std::vector<Vec3>& v) {
    double ke = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) ke += 0.5 * masses[i] * v[i].norm2();
    return ke / kForceAccel;
}

inline bool forces_unstable(const EnergyForces& ef) {
    if (!std::isfinite(ef.energy)) return true;
    for (const auto& f : ef.forces)
        if (!f.finite()) return true;
    return false;
}

inline bool too_close(const std::vector<Vec3>& pos) {
    for (std::size_t i = 0; i < pos.size(); ++i)
        for (std::size_t j = i + 1; j < pos.size(); ++j)
            if (distance(pos[i], pos[j]) < 0.3) return true;
    return false;
}

inline std::vector<Vec3> maxwell_boltzmann(const std::vector<double>& masses, double temperature,
                                           Rng& rng) {
    std::vector<Vec3> v(masses.size());
    if (temperature <= 0.0) return v;
    for (std::size_t i = 0; i < masses.size(); ++i) {
        double sigma = std::sqrt(kBoltzmann * temperature * kForceAccel / masses[i]);
        v[i] = {rng.normal(0.0, sigma), rng.normal(0.0, sigma), rng.normal(0.0, sigma)};
    }
    return v;
}

// Shared BAOAB integrator. friction 0 and temperature 0 reduce it exactly to
// velocity Verlet, which is how run_nve uses it.
inline Trajectory integrate(const ForceProvider& force, const Structure& structure,
                            const SimConfig& config, const std::string& ensemble,
                            bool thermostat, std::optional<std::vector<Vec3>> init_velocities) {
    config.validate();
    structure.validate();

    Trajectory traj;
    traj.initial = structure;
    traj.config = config;
    traj.ensemble = ensemble;

    std::vector<double> masses;
    for (const auto& sp : structure.species) masses.push_back(atomic_mass(sp));

    Structure state = structure;
    Rng rng(config.seed ^ 0x6A09E667F3BCC909ull);
    std::vector<Vec3> vel = init_velocities
                                ? *init_velocities
                                : maxwell_boltzmann(masses, thermostat ? config.temperature : 0.0,
                                                    rng);
    if (vel.size() != structure.size()) throw InputError("integrate: velocity size mismatch");

    const double dt = config.dt;
    const long n_steps = static_cast<long>(std::llround(config.total_time * 1000.0 / dt));
    const double c1 = thermostat ? std::exp(-config.friction * dt) : 1.0;
    const double c2 = std::sqrt(std::max(0.0, 1.0 - c1 * c1));

    EnergyForces ef = force(state);
    if (detail::forces_unstable(ef)) {
        traj.unstable = true;
        traj.instability_reason = "non-finite forces at start";
        return traj;
    }

    auto record = [&](long step) {
        Frame fr;
        fr.time = static_cast<double>(step) * dt / 1000.0;
        fr.positions = state.positions;
        fr.velocities = vel;
        fr.potential_energy = ef.energy;
        fr.total_energy = ef.energy + kinetic_energy(masses, vel);
        traj.frames.push_back(std::move(fr));
    };
    record(0);

    for (long step = 1; step <= n_steps; ++step) {
        // B
        for (std::size_t i = 0; i < state.size(); ++i)
            vel[i] += (0.5 * dt * kForceAccel / masses[i]) * ef.forces[i];
        // A
        for (std::size_t i = 0; i < state.size(); ++i) state.positions[i] += (0.5 * dt) * vel[i];
        // O
        if (thermostat && config.temperature > 0.0) {
            for (std::size_t i = 0; i < state.size(); ++i) {
                double sigma =
                    std::sqrt(kBoltzmann * config.temperature * kForceAccel / masses[i]);
                Vec3 xi{rng.normal(), rng.normal(), rng.normal()};
                vel[i] = c1 * vel[i] + (c2 * sigma) * xi;
            }
        } else if (thermostat) {
            for (std::size_t i = 0; i < state.size(); ++i) vel[i] = c1 * vel[i];
        }
        // A
        for (std::size_t i = 0; i < state.size(); ++i) state.positions[i] += (0.5 * dt) * vel[i];
        // B with fresh forces
        ef = force(state);
        if (detail::forces_unstable(ef) || detail::too_close(state.positions)) {
            traj.unstable = true;
            traj.instability_reason = detail::forces_unstable(ef)
                                          ? "non-finite forces"
                                          : "pair distance below 0.3 A";
            record(step);
            return traj;
        }
        for (std::size_t i = 0; i < state.size(); ++i)
            vel[i] += (0.5 * dt * kForceAccel / masses[i]) * ef.forces[i];

        if (step % config.record_interval == 0 || step == n_steps) record(step);
    }
    return traj;
}

}  // namespace detail

// Langevin dynamics (BAOAB splitting) at the target temperature.
inline Trajectory run_nvt(const ForceProvider& force, const Structure& structure,
                          const SimConfig& config,
                          std::optional<std::vector<Vec3>> init_velocities = std::nullopt) {
    return detail::integrate(force, structure, config, "nvt", true, std::move(init_velocities));
}

// Velocity Verlet. Without explicit initial velocities, the run starts from a
// short Langevin equilibration segment (config.equilibration_time) or from a
// Maxwell-Boltzmann draw when that is zero.
inline Trajectory run_nve(const ForceProvider& force, const Structure& structure,
                          const SimConfig& config,
                          std::optional<std::vector<Vec3>> init_velocities = std::nullopt) {
    Structure start = structure;
    std::optional<std::vector<Vec3>> vel = std::move(init_velocities);
    if (!vel && config.equilibration_time > 0.0) {
        SimConfig eq = config;
        eq.total_time = config.equilibration_time;
        eq.record_interval = 1;
        Trajectory warm = run_nvt(force, structure, eq);
        if (warm.unstable) {
            Trajectory traj;
            traj.initial = structure;
            traj.config = config;
            traj.ensemble = "nve";
            traj.unstable = true;
            traj.instability_reason = "equilibration: " + warm.instability_reason;
            return traj;
        }
        start.positions = warm.frames.back().positions;
        vel = warm.frames.back().velocities;
    } else if (!vel) {
        std::vector<double> masses;
        for (const auto& sp : structure.species) masses.push_back(atomic_mass(sp));
        Rng rng(config.seed ^ 0xBB67AE8584CAA73Bull);
        vel = detail::maxwell_boltzmann(masses, config.temperature, rng);
    }
    return detail::integrate(force, start, config, "nve", false, std::move(vel));
}

struct Bond {
    std::size_t i = 0, j = 0;
    double length = 0.0;
};

inline std::vector<Bond> bonds_at_cutoff(const Structure& structure, double cutoff) {
    std::vector<Bond> bonds;
    for (std::size_t i = 0; i < structure.size(); ++i)
        for (std::size_t j = i + 1; j < structure.size(); ++j) {
            double r = distance(structure.positions[i], structure.positions[j]);
            if (r <= cutoff) bonds.push_back({i, j, r});
        }
    return bonds;
}

// Time of the first frame where any reference bond deviates from its initial
// length by more than `tolerance`; full duration when none does.
inline double stability_time(const Trajectory& traj, const std::vector<Bond>& reference_bonds,
                             double tolerance = 0.5) {
    for (const auto& fr : traj.frames) {
        for (const auto& b : reference_bonds) {
            double r = distance(fr.positions[b.i], fr.positions[b.j]);
            if (std::abs(r - b.length) > tolerance) return fr.time;
        }
    }
    return traj.duration();
}

// Time-averaged normalized distribution of interatomic distances, stored as a
// density: sum(values) * bin_width == 1. Distances beyond r_max land in the
// last bin so no mass is lost.
struct DistanceHistogram {
    double r_max = 0.0;
    std::vector<double> values;

    double bin_width() const { return r_max / static_cast<double>(values.size()); }
    double mass() const {
        double m = 0.0;
        for (double v : values) m += v;
        return m * bin_width();
    }
};

inline DistanceHistogram h_of_r(const Trajectory& traj, double r_max, int n_bins) {
    if (traj.frames.empty()) throw InputError("h_of_r: empty trajectory");
    std::size_t n = traj.frames.front().positions.size();
    if (n < 2) throw InputError("h_of_r: need at least 2 atoms");
    if (!(r_max > 0.0) || n_bins < 1) throw InputError("h_of_r: bad binning");

    DistanceHistogram h;
    h.r_max = r_max;
    h.values.assign(static_cast<std::size_t>(n_bins), 0.0);
    double dw = h.bin_width();
    double pair_weight = 1.0 / static_cast<double>(n * (n - 1));

    for (const auto& fr : traj.frames) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                double r = distance(fr.positions[i], fr.positions[j]);
                auto bin = static_cast<std::size_t>(r / dw);
                if (bin >= h.values.size()) bin = h.values.size() - 1;
                h.values[bin] += pair_weight;
            }
    }
    double inv_frames = 1.0 / static_cast<double>(traj.frames.size());
    for (double& v : h.values) v *= inv_frames / dw;
    return h;
}

// Discretized integral of |<h> - <h_hat>| dr.
inline double h_of_r_mae(const DistanceHistogram& predicted, const DistanceHistogram& reference) {
    if (predicted.values.size() != reference.values.size() ||
        predicted.r_max != reference.r_max)
        throw InputError("h_of_r_mae: histogram binning mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < predicted.values.size(); ++i)
        acc += std::abs(predicted.values[i] - reference.values[i]);
    return acc * predicted.bin_width();
}

// Max |E_total(t) - E_total(0)| over the trajectory.
inline double nve_energy_deviation(const Trajectory& traj) {
    if (traj.frames.empty()) throw InputError("nve_energy_deviation: empty trajectory");
    double e0 = traj.frames.front().total_energy;
    double dev = 0.0;
    for (const auto& fr : traj.frames) dev = std::max(dev, std::abs(fr.total_energy - e0));
    return dev;
}

// Multi-frame extended-XYZ trajectory dump with velocity columns.
inline void write_trajectory_extxyz(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write trajectory " + path);
    for (const auto& fr : traj.frames) {
        out << traj.initial.size() << "\n";
        out << "system_id=" << traj.initial.system_id << " ensemble=" << traj.ensemble
            << " time_ps=" << fmt_g17(fr.time)
            << " potential_energy=" << fmt_g17(fr.potential_energy)
            << " total_energy=" << fmt_g17(fr.total_energy) << "\n";
        for (std::size_t i = 0; i < traj.initial.size(); ++i) {
            const Vec3& p = fr.positions[i];
            const Vec3& v = fr.velocities[i];
            out << traj.initial.species[i] << " " << fmt_g17(p.x) << " " << fmt_g17(p.y) << " "
                << fmt_g17(p.z) << " " << fmt_g17(v.x) << " " << fmt_g17(v.y) << " "
                << fmt_g17(v.z) << "\n";
        }
    }
}

}  // namespace ttr
