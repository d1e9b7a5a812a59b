#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttr/benchmark.hpp"
#include "ttr/config.hpp"
#include "ttr/diagnostics.hpp"
#include "ttr/extxyz.hpp"
#include "ttr/md.hpp"
#include "ttr/rr.hpp"
#include "ttr/serialize.hpp"
#include "ttr/training.hpp"
#include "ttr/ttt.hpp"

namespace ttr {

// Desk-scale experiment configuration: generation, model, training, test-time
// refinement, and simulation settings for the named pipelines.
struct ExperimentConfig {
    GeneratorConfig gen = GeneratorConfig::defaults();
    ArchConfig arch;
    TrainConfig pretrain_cfg;
    TrainConfig finetune_cfg;
    TrainConfig ftcurve_cfg;  // budget-limited fine-tune for data-efficiency curves
    bool align_heads = true;
    TTTConfig ttt_cfg;
    SimConfig md_cfg;
    int n_seeds = 3;
    std::uint64_t base_seed = 1;
    std::vector<double> finetune_fractions = {0.05, 0.25, 1.0};
    int ft_eval_count = 12;  // held-out eval slice of the fine-tune system
    int error_table_bins = 10;

    static ExperimentConfig defaults() {
        ExperimentConfig c;

        c.arch.n_radial_basis = 6;
        c.arch.hidden_width = 16;
        c.arch.repr_blocks = 1;
        c.arch.head_blocks = 2;
        c.arch.cutoff = c.gen.cutoff;

        c.pretrain_cfg.optimizer = Optimizer::Adam;
        c.pretrain_cfg.learning_rate = 3e-3;
        c.pretrain_cfg.weight_decay = 0.0;
        c.pretrain_cfg.batch_size = 8;
        c.pretrain_cfg.epochs = 25;
        c.finetune_cfg = c.pretrain_cfg;
        c.ftcurve_cfg = c.pretrain_cfg;
        c.ftcurve_cfg.epochs = 2;
        c.ftcurve_cfg.learning_rate = 1e-3;

        c.ttt_cfg.use_adam = true;
        c.ttt_cfg.steps = 50;
        c.ttt_cfg.learning_rate = 1e-4;
        c.ttt_cfg.weight_decay = 0.0;
        c.ttt_cfg.early_stop_patience = 10;

        c.md_cfg.dt = 0.5;
        c.md_cfg.total_time = 10.0;
        c.md_cfg.temperature = 300.0;
        c.md_cfg.friction = 0.01;
        c.md_cfg.equilibration_time = 0.2;
        c.md_cfg.record_interval = 10;
        return c;
    }

    // File overrides on top of the defaults; every key is optional.
    static ExperimentConfig from_config(const Config& f) {
        ExperimentConfig c = defaults();
        auto tmpl = f.get_list("generate.train_templates");
        if (!tmpl.empty()) {
            c.gen.train_templates.clear();
            for (const auto& t : tmpl) c.gen.train_templates.push_back(parse_template(t));
        }
        if (f.has("generate.holdout_template"))
            c.gen.holdout_template = parse_template(f.require_string("generate.holdout_template"));
        if (f.has("generate.unseen_element_template"))
            c.gen.unseen_element_template =
                parse_template(f.require_string("generate.unseen_element_template"));
        c.gen.train_frames_per_template = static_cast<int>(
            f.get_int("generate.train_frames_per_template", c.gen.train_frames_per_template));
        c.gen.id_test_frames_per_template = static_cast<int>(f.get_int(
            "generate.id_test_frames_per_template", c.gen.id_test_frames_per_template));
        c.gen.ood_frames = static_cast<int>(f.get_int("generate.ood_frames", c.gen.ood_frames));
        c.gen.sample_temperature =
            f.get_double("generate.sample_temperature", c.gen.sample_temperature);
        c.gen.holdout_temperature =
            f.get_double("generate.holdout_temperature", c.gen.holdout_temperature);
        c.gen.cutoff = f.get_double("generate.cutoff", c.gen.cutoff);

        for (const auto& sp : {"H", "C", "N", "O", "S"}) {
            std::string eps_key = std::string("prior.epsilon_") + sp;
            std::string sig_key = std::string("prior.sigma_") + sp;
            if (f.has(eps_key)) c.gen.prior.epsilon[sp] = f.get_double(eps_key, 0.0);
            if (f.has(sig_key)) c.gen.prior.sigma[sp] = f.get_double(sig_key, 0.0);
        }
        c.gen.reference.morse_depth =
            f.get_double("reference.morse_depth", c.gen.reference.morse_depth);
        c.gen.reference.morse_width =
            f.get_double("reference.morse_width", c.gen.reference.morse_width);
        c.gen.reference.morse_r0 = f.get_double("reference.morse_r0", c.gen.reference.morse_r0);
        c.gen.reference.three_body_strength =
            f.get_double("reference.three_body_strength", c.gen.reference.three_body_strength);
        c.gen.reference.three_body_cos0 =
            f.get_double("reference.three_body_cos0", c.gen.reference.three_body_cos0);

        c.arch.n_radial_basis =
            static_cast<int>(f.get_int("arch.n_radial_basis", c.arch.n_radial_basis));
        c.arch.hidden_width = static_cast<int>(f.get_int("arch.hidden_width", c.arch.hidden_width));
        c.arch.repr_blocks = static_cast<int>(f.get_int("arch.repr_blocks", c.arch.repr_blocks));
        c.arch.head_blocks = static_cast<int>(f.get_int("arch.head_blocks", c.arch.head_blocks));
        c.arch.cutoff = c.gen.cutoff;

        c.pretrain_cfg.learning_rate =
            f.get_double("train.learning_rate", c.pretrain_cfg.learning_rate);
        c.pretrain_cfg.epochs = static_cast<int>(f.get_int("train.epochs", c.pretrain_cfg.epochs));
        c.pretrain_cfg.batch_size =
            static_cast<int>(f.get_int("train.batch_size", c.pretrain_cfg.batch_size));
        if (f.get_string("train.optimizer", "adam") == "sgd_momentum")
            c.pretrain_cfg.optimizer = Optimizer::SgdMomentum;
        c.finetune_cfg = c.pretrain_cfg;

        c.ttt_cfg.steps = static_cast<int>(f.get_int("ttt.steps", c.ttt_cfg.steps));
        c.ttt_cfg.learning_rate = f.get_double("ttt.learning_rate", c.ttt_cfg.learning_rate);
        c.ttt_cfg.use_adam = f.get_string("ttt.optimizer", "adam") != "sgd_momentum";
        c.ttt_cfg.momentum = f.get_double("ttt.momentum", c.ttt_cfg.momentum);
        c.ttt_cfg.weight_decay = f.get_double("ttt.weight_decay", c.ttt_cfg.weight_decay);
        c.ttt_cfg.early_stop_patience =
            static_cast<int>(f.get_int("ttt.early_stop_patience", c.ttt_cfg.early_stop_patience));

        c.md_cfg.dt = f.get_double("md.dt", c.md_cfg.dt);
        c.md_cfg.total_time = f.get_double("md.total_time", c.md_cfg.total_time);
        c.md_cfg.temperature = f.get_double("md.temperature", c.md_cfg.temperature);
        c.md_cfg.friction = f.get_double("md.friction", c.md_cfg.friction);

        c.n_seeds = static_cast<int>(f.get_int("experiment.seeds", c.n_seeds));
        c.base_seed = static_cast<std::uint64_t>(f.get_int("experiment.base_seed",
                                                           static_cast<long long>(c.base_seed)));
        auto fr = f.get_doubles("experiment.finetune_fractions");
        if (!fr.empty()) c.finetune_fractions = fr;
        c.error_table_bins =
            static_cast<int>(f.get_int("experiment.error_table_bins", c.error_table_bins));
        return c;
    }
};

// Everything derived from one seed: datasets, the trained baseline, the ID
// prior-loss target, and the adaptation for the held-out system.
struct SeedArtifacts {
    std::uint64_t seed = 0;
    Benchmark bench;
    ModelParams baseline;
    ModelParams adapted;  // TTT on the combined-shift holdout
    double id_prior_loss = 0.0;
    TTTResult ttt;
};

inline std::vector<std::string> species_of(const Dataset& data) {
    std::set<std::string> sp;
    for (const auto& ls : data)
        for (const auto& s : ls.structure.species) sp.insert(s);
    return {sp.begin(), sp.end()};
}

inline double mean_prior_loss(const ModelParams& model, const Dataset& data,
                              const LossWeights& w) {
    double acc = 0.0;
    for (const auto& ls : data)
        acc += loss_eval(model, ls.structure, *ls.prior, Head::Prior, w);
    return acc / static_cast<double>(data.size());
}

inline std::vector<Structure> structures_of(const Dataset& data) {
    std::vector<Structure> out;
    out.reserve(data.size());
    for (const auto& ls : data) out.push_back(ls.structure);
    return out;
}

inline SeedArtifacts prepare_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    SeedArtifacts art;
    art.seed = seed;

    GeneratorConfig gen = cfg.gen;
    gen.seed = seed;
    art.bench = generate_benchmark(gen);

    ArchConfig arch = cfg.arch;
    arch.seed = seed;
    art.baseline = init_model(arch, species_of(art.bench.train));

    TrainConfig pre = cfg.pretrain_cfg;
    TrainConfig ft = cfg.finetune_cfg;
    pre.seed = seed;
    ft.seed = seed ^ 0x9E3779B97F4A7C15ull;
    pretrain_freeze_finetune(art.baseline, art.bench.train, art.bench.train, pre, ft,
                             cfg.align_heads);

    art.id_prior_loss = mean_prior_loss(art.baseline, art.bench.train, cfg.ttt_cfg.loss_weights);

    TTTConfig tcfg = cfg.ttt_cfg;
    tcfg.seed = seed;
    tcfg.early_stop_target_loss = art.id_prior_loss;
    art.ttt = ttt_adapt(art.baseline, structures_of(art.bench.ood_combined), gen.prior, tcfg);
    art.adapted = art.ttt.adapted;
    return art;
}

// Per-system test-time training: groups structures by system_id, adapts a
// fresh copy of the base model per system (the adaptation granularity used
// throughout), and keeps the adapted models for split-level evaluation.
struct SystemAdaptation {
    std::string system_id;
    double mae_before = 0.0;
    double mae_after = 0.0;
    int steps_taken = 0;
    std::string stop_reason;
    ModelParams adapted;
};

inline std::map<std::string, SystemAdaptation> ttt_per_system(const ModelParams& model,
                                                              const Dataset& test,
                                                              const PairParams& prior,
                                                              TTTConfig cfg,
                                                              double id_prior_loss) {
    std::map<std::string, Dataset> systems;
    for (const auto& ls : test) systems[ls.structure.system_id].push_back(ls);

    cfg.early_stop_target_loss = id_prior_loss;
    std::map<std::string, SystemAdaptation> out;
    for (const auto& [sys, data] : systems) {
        SystemAdaptation rec;
        rec.system_id = sys;
        rec.mae_before = dataset_force_mae(model, data);
        auto res = ttt_adapt(model, structures_of(data), prior, cfg);
        rec.mae_after = dataset_force_mae(res.adapted, data);
        rec.steps_taken = res.steps_taken;
        rec.stop_reason = res.stop_reason;
        rec.adapted = std::move(res.adapted);
        out.emplace(sys, std::move(rec));
    }
    return out;
}

// Pooled force MAE of a split where each structure is predicted by its own
// system's adapted model.
inline double split_mae_per_system(const std::map<std::string, SystemAdaptation>& adapted,
                                   const Dataset& split) {
    double acc = 0.0;
    std::size_t comps = 0;
    for (const auto& ls : split) {
        const auto& model = adapted.at(ls.structure.system_id).adapted;
        auto pred = forward_energy_forces(model, ls.structure, Head::Main);
        for (std::size_t i = 0; i < ls.structure.size(); ++i) {
            acc += std::abs(pred.forces[i].x - ls.reference->forces[i].x) +
                   std::abs(pred.forces[i].y - ls.reference->forces[i].y) +
                   std::abs(pred.forces[i].z - ls.reference->forces[i].z);
            comps += 3;
        }
    }
    return acc / static_cast<double>(comps);
}

inline double median(std::vector<double> xs) {
    if (xs.empty()) throw InputError("median of empty vector");
    std::sort(xs.begin(), xs.end());
    std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

namespace detail {

inline void ensure_dir(const std::string& dir) {
    std::filesystem::create_directories(dir);
}

inline void write_summary(const nlohmann::json& j, const std::string& out_dir) {
    std::ofstream out(out_dir + "/summary.json");
    if (!out) throw InputError("cannot write summary.json in " + out_dir);
    out << j.dump(2) << "\n";
}

inline const char* split_name(int idx) {
    switch (idx) {
        case 0: return "id_test";
        case 1: return "ood_connectivity";
        case 2: return "ood_forcenorm";
        case 3: return "ood_combined";
        default: return "ood_element";
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// shift-benchmark: train -> diagnose -> mitigate, the paper-style evaluation.

inline nlohmann::json run_shift_benchmark(const ExperimentConfig& cfg,
                                          const std::string& out_dir) {
    detail::ensure_dir(out_dir);
    CsvWriter agg(out_dir + "/aggregated_mae.csv",
                  {"seed", "split", "model", "force_mae"});
    CsvWriter diag(out_dir + "/diagnostics.csv",
                   {"seed", "split", "structure_id", "n_atoms", "unseen_element", "size_ood",
                    "composition_ood", "force_norm_ood", "connectivity_ood",
                    "spectral_distance", "prior_force_norm"});
    CsvWriter table(out_dir + "/error_vs_shift.csv",
                    {"seed", "model", "axis", "bin", "lo", "hi", "ood_bin", "count",
                     "mean_force_mae"});
    CsvWriter systems(out_dir + "/ttt_per_system.csv",
                      {"seed", "system_id", "mae_before", "mae_after", "steps", "stop_reason"});

    std::vector<double> before_medians, after_medians;
    nlohmann::json axis_checks = nlohmann::json::array();

    for (int si = 0; si < cfg.n_seeds; ++si) {
        std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(si);
        auto art = prepare_seed(cfg, seed);
        const auto& b = art.bench;

        // per-system adaptation over the full evaluable test pool
        Dataset pool = b.id_test;
        for (const auto* d : {&b.ood_connectivity, &b.ood_forcenorm, &b.ood_combined})
            pool.insert(pool.end(), d->begin(), d->end());
        auto adapted_map =
            ttt_per_system(art.baseline, pool, cfg.gen.prior, cfg.ttt_cfg, art.id_prior_loss);
        for (const auto& [sys, rec] : adapted_map)
            systems.row({CsvWriter::cell(seed), rec.system_id, CsvWriter::cell(rec.mae_before),
                         CsvWriter::cell(rec.mae_after), CsvWriter::cell(rec.steps_taken),
                         rec.stop_reason});

        const Dataset* splits[5] = {&b.id_test, &b.ood_connectivity, &b.ood_forcenorm,
                                    &b.ood_combined, &b.ood_element};
        for (int k = 0; k < 5; ++k) {
            for (const auto& ls : *splits[k]) {
                auto rep = diagnose(ls.structure, b.profile, cfg.gen.prior);
                diag.row({CsvWriter::cell(seed), detail::split_name(k), rep.structure_id,
                          CsvWriter::cell(rep.n_atoms), rep.unseen_element ? "1" : "0",
                          rep.size_ood ? "1" : "0", rep.composition_ood ? "1" : "0",
                          flag_name(rep.force_norm_ood), rep.connectivity_ood ? "1" : "0",
                          CsvWriter::cell(rep.spectral_distance),
                          std::isnan(rep.prior_force_norm)
                              ? "nan"
                              : CsvWriter::cell(rep.prior_force_norm)});
            }
            if (k == 4) continue;  // unseen element: model evaluation impossible
            agg.row({CsvWriter::cell(seed), detail::split_name(k), "baseline",
                     CsvWriter::cell(dataset_force_mae(art.baseline, *splits[k]))});
            agg.row({CsvWriter::cell(seed), detail::split_name(k), "ttt",
                     CsvWriter::cell(split_mae_per_system(adapted_map, *splits[k]))});
        }

        before_medians.push_back(dataset_force_mae(art.baseline, b.ood_combined));
        after_medians.push_back(dataset_force_mae(art.adapted, b.ood_combined));

        // binned error-vs-shift tables for both models
        for (const char* which : {"baseline", "ttt"}) {
            const ModelParams& m = which == std::string("baseline") ? art.baseline : art.adapted;
            auto bins = error_vs_shift_table(m, pool, b.profile, cfg.gen.prior,
                                             cfg.error_table_bins);
            for (const auto& bin : bins)
                table.row({CsvWriter::cell(seed), which, axis_name(bin.axis),
                           CsvWriter::cell(bin.bin), CsvWriter::cell(bin.lo),
                           CsvWriter::cell(bin.hi), bin.ood_bin ? "1" : "0",
                           CsvWriter::cell(bin.count), CsvWriter::cell(bin.mean_force_mae)});

            if (which == std::string("baseline")) {
                for (ShiftAxis axis : {ShiftAxis::ForceNorm, ShiftAxis::Connectivity}) {
                    double id_acc = 0.0, ood_acc = 0.0;
                    std::size_t id_n = 0, ood_n = 0;
                    for (const auto& bin : bins) {
                        if (bin.axis != axis || bin.count == 0) continue;
                        if (bin.ood_bin) {
                            ood_acc += bin.mean_force_mae * bin.count;
                            ood_n += bin.count;
                        } else {
                            id_acc += bin.mean_force_mae * bin.count;
                            id_n += bin.count;
                        }
                    }
                    axis_checks.push_back({{"seed", seed},
                                           {"axis", axis_name(axis)},
                                           {"id_bin_mae", id_n ? id_acc / id_n : 0.0},
                                           {"ood_bin_mae", ood_n ? ood_acc / ood_n : 0.0}});
                }
            }
        }
    }

    nlohmann::json summary;
    summary["pipeline"] = "shift-benchmark";
    summary["seeds"] = cfg.n_seeds;
    summary["combined_mae_before_median"] = median(before_medians);
    summary["combined_mae_after_median"] = median(after_medians);
    summary["combined_improvement"] =
        1.0 - median(after_medians) / median(before_medians);
    summary["axis_checks"] = axis_checks;
    detail::write_summary(summary, out_dir);
    return summary;
}

// ---------------------------------------------------------------------------
// ttt-vs-finetune: data efficiency of fine-tuning with and without TTT first.

inline nlohmann::json run_ttt_vs_finetune(const ExperimentConfig& cfg,
                                          const std::string& out_dir) {
    detail::ensure_dir(out_dir);
    CsvWriter csv(out_dir + "/ttt_vs_finetune.csv",
                  {"seed", "branch", "fraction", "force_mae"});

    std::map<double, std::vector<double>> plain_by_fraction, ttt_by_fraction;
    for (int si = 0; si < cfg.n_seeds; ++si) {
        std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(si);
        auto art = prepare_seed(cfg, seed);

        // split the held-out system into an eval slice and a fine-tune pool
        Dataset shuffled = art.bench.ood_combined;
        Rng rng(seed ^ 0x2545F4914F6CDD1Dull);
        std::vector<std::size_t> order(shuffled.size());
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        Dataset eval_set, ft_pool;
        for (std::size_t i = 0; i < order.size(); ++i) {
            if (i < static_cast<std::size_t>(cfg.ft_eval_count))
                eval_set.push_back(shuffled[order[i]]);
            else
                ft_pool.push_back(shuffled[order[i]]);
        }

        TrainConfig ft = cfg.ftcurve_cfg;
        ft.seed = seed ^ 0xDA3E39CB94B95BDBull;
        ft.freeze.repr = true;
        ft.freeze.prior_head = true;

        auto plain = fine_tune(art.baseline, ft_pool, ft, cfg.finetune_fractions, eval_set);
        auto with_ttt = fine_tune(art.adapted, ft_pool, ft, cfg.finetune_fractions, eval_set);
        for (const auto& pt : plain) {
            csv.row({CsvWriter::cell(seed), "finetune", CsvWriter::cell(pt.fraction),
                     CsvWriter::cell(pt.force_mae)});
            plain_by_fraction[pt.fraction].push_back(pt.force_mae);
        }
        for (const auto& pt : with_ttt) {
            csv.row({CsvWriter::cell(seed), "ttt_then_finetune", CsvWriter::cell(pt.fraction),
                     CsvWriter::cell(pt.force_mae)});
            ttt_by_fraction[pt.fraction].push_back(pt.force_mae);
        }
    }

    nlohmann::json summary;
    summary["pipeline"] = "ttt-vs-finetune";
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [fraction, maes] : plain_by_fraction) {
        rows.push_back({{"fraction", fraction},
                        {"finetune_median", median(maes)},
                        {"ttt_then_finetune_median", median(ttt_by_fraction[fraction])}});
    }
    summary["fractions"] = rows;
    detail::write_summary(summary, out_dir);
    return summary;
}

// ---------------------------------------------------------------------------
// rr-sweep: radius refinement over the connectivity-shift suite.

inline nlohmann::json run_rr_sweep(const ExperimentConfig& cfg, const std::string& out_dir) {
    detail::ensure_dir(out_dir);
    CsvWriter csv(out_dir + "/rr_sweep.csv",
                  {"seed", "structure_id", "best_cutoff", "dist_train_cutoff", "dist_best",
                   "mae_baseline", "mae_rr"});

    std::vector<double> mae_base_all, mae_rr_all;
    bool argmin_ok = true;
    for (int si = 0; si < cfg.n_seeds; ++si) {
        std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(si);
        auto art = prepare_seed(cfg, seed);
        const auto& profile = art.bench.profile;
        auto candidates = default_rr_candidates(profile.train_cutoff);

        std::vector<double> mae_base_seed, mae_rr_seed;
        for (const auto& ls : art.bench.ood_combined) {
            auto res = refine_radius(ls.structure, profile, candidates);
            double dist_train = 0.0;
            for (std::size_t i = 0; i < res.candidates.size(); ++i)
                if (std::abs(res.candidates[i] - profile.train_cutoff) < 1e-12)
                    dist_train = res.distances[i];
            if (res.best_distance > dist_train) argmin_ok = false;

            auto base_pred = forward_energy_forces(art.baseline, ls.structure, Head::Main);
            auto rr_pred =
                forward_energy_forces(art.baseline, ls.structure, Head::Main, res.best_cutoff);
            double mb = force_mae(base_pred.forces, ls.reference->forces);
            double mr = force_mae(rr_pred.forces, ls.reference->forces);
            csv.row({CsvWriter::cell(seed), ls.structure.structure_id,
                     CsvWriter::cell(res.best_cutoff), CsvWriter::cell(dist_train),
                     CsvWriter::cell(res.best_distance), CsvWriter::cell(mb),
                     CsvWriter::cell(mr)});
            mae_base_seed.push_back(mb);
            mae_rr_seed.push_back(mr);
        }
        mae_base_all.push_back(mean(mae_base_seed));
        mae_rr_all.push_back(mean(mae_rr_seed));
    }

    nlohmann::json summary;
    summary["pipeline"] = "rr-sweep";
    summary["argmin_never_worse"] = argmin_ok;
    summary["mae_baseline_median"] = median(mae_base_all);
    summary["mae_rr_median"] = median(mae_rr_all);
    detail::write_summary(summary, out_dir);
    return summary;
}

// ---------------------------------------------------------------------------
// md-transfer: simulation quality on the held-out molecule.

inline nlohmann::json run_md_transfer(const ExperimentConfig& cfg, const std::string& out_dir) {
    detail::ensure_dir(out_dir);
    CsvWriter csv(out_dir + "/md_transfer.csv",
                  {"seed", "model", "stability_ps", "hr_mae", "unstable"});
    CsvWriter nve_csv(out_dir + "/nve_deviation.csv",
                      {"seed", "model", "dt_fs", "energy_deviation_ev"});

    const double hr_rmax = 9.0;
    const int hr_bins = 90;
    std::vector<double> stab_base, stab_ttt, hr_base, hr_ttt;

    for (int si = 0; si < cfg.n_seeds; ++si) {
        std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(si);
        auto art = prepare_seed(cfg, seed);
        Structure start = art.bench.ood_connectivity.front().structure;
        auto ref_bonds = bonds_at_cutoff(start, art.bench.profile.train_cutoff);

        ForceProvider ref_force = [&](const Structure& s) {
            auto [e, f] = reference_energy_forces(s, cfg.gen.reference);
            return EnergyForces{e, f};
        };
        ForceProvider base_force = [&](const Structure& s) {
            return forward_energy_forces(art.baseline, s, Head::Main);
        };
        ForceProvider ttt_force = [&](const Structure& s) {
            return forward_energy_forces(art.adapted, s, Head::Main);
        };

        SimConfig sim = cfg.md_cfg;
        sim.seed = seed;

        auto ref_traj = run_nvt(ref_force, start, sim);
        auto base_traj = run_nvt(base_force, start, sim);
        auto ttt_traj = run_nvt(ttt_force, start, sim);
        auto ref_hr = h_of_r(ref_traj, hr_rmax, hr_bins);

        struct Row {
            const char* name;
            Trajectory* traj;
        } rows[] = {{"reference", &ref_traj}, {"baseline", &base_traj}, {"ttt", &ttt_traj}};
        for (auto& r : rows) {
            double stab = stability_time(*r.traj, ref_bonds);
            double hr_mae_val =
                r.traj->frames.empty() ? 2.0 : h_of_r_mae(h_of_r(*r.traj, hr_rmax, hr_bins), ref_hr);
            csv.row({CsvWriter::cell(seed), r.name, CsvWriter::cell(stab),
                     CsvWriter::cell(hr_mae_val), r.traj->unstable ? "1" : "0"});
            if (r.name == std::string("baseline")) {
                stab_base.push_back(stab);
                hr_base.push_back(hr_mae_val);
            } else if (r.name == std::string("ttt")) {
                stab_ttt.push_back(stab);
                hr_ttt.push_back(hr_mae_val);
            }
        }
        write_trajectory_extxyz(ttt_traj, out_dir + "/ttt_traj_seed" + std::to_string(seed) +
                                              ".extxyz");

        // NVE conservation with the conservative model, full and half step
        for (double dt : {cfg.md_cfg.dt, cfg.md_cfg.dt / 2.0}) {
            SimConfig nve = cfg.md_cfg;
            nve.dt = dt;
            nve.seed = seed;
            auto traj = run_nve(ttt_force, start, nve);
            nve_csv.row({CsvWriter::cell(seed), "ttt", CsvWriter::cell(dt),
                         CsvWriter::cell(traj.frames.empty() ? std::nan("")
                                                             : nve_energy_deviation(traj))});
        }
    }

    nlohmann::json summary;
    summary["pipeline"] = "md-transfer";
    summary["stability_baseline_median"] = median(stab_base);
    summary["stability_ttt_median"] = median(stab_ttt);
    summary["hr_mae_baseline_median"] = median(hr_base);
    summary["hr_mae_ttt_median"] = median(hr_ttt);
    detail::write_summary(summary, out_dir);
    return summary;
}

inline nlohmann::json run_experiment(const std::string& name, const ExperimentConfig& cfg,
                                     const std::string& out_dir) {
    try {
        if (name == "shift-benchmark") return run_shift_benchmark(cfg, out_dir);
        if (name == "ttt-vs-finetune") return run_ttt_vs_finetune(cfg, out_dir);
        if (name == "rr-sweep") return run_rr_sweep(cfg, out_dir);
        if (name == "md-transfer") return run_md_transfer(cfg, out_dir);
    } catch (const std::exception& e) {
        throw NumericError("pipeline " + name + " failed: " + e.what() +
                           " (partial outputs retained in " + out_dir + ")");
    }
    throw InputError("unknown pipeline: " + name +
                     " (expected shift-benchmark, ttt-vs-finetune, rr-sweep, md-transfer)");
}

}  // namespace ttr
