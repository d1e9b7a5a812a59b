#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ttr/benchmark.hpp"
#include "ttr/diagnostics.hpp"
#include "ttr/experiment.hpp"
#include "ttr/extxyz.hpp"
#include "ttr/linear_ttt.hpp"
#include "ttr/md.hpp"
#include "ttr/rr.hpp"
#include "ttr/serialize.hpp"
#include "ttr/training.hpp"
#include "ttr/ttt.hpp"

namespace {

using namespace ttr;

struct GlobalOpts {
    std::uint64_t seed = 1;
    std::string config_path;
    std::string out_dir = ".";
};

ExperimentConfig load_experiment_config(const GlobalOpts& g) {
    ExperimentConfig cfg = g.config_path.empty()
                               ? ExperimentConfig::defaults()
                               : ExperimentConfig::from_config(Config::from_file(g.config_path));
    cfg.base_seed = g.seed;
    return cfg;
}

std::string out_path(const GlobalOpts& g, const std::string& name) {
    std::filesystem::create_directories(g.out_dir);
    return (std::filesystem::path(g.out_dir) / name).string();
}

int cmd_generate(const GlobalOpts& g) {
    auto cfg = load_experiment_config(g);
    GeneratorConfig gen = cfg.gen;
    gen.seed = g.seed;
    auto b = generate_benchmark(gen);
    write_extxyz(b.train, out_path(g, "train.extxyz"));
    write_extxyz(b.id_test, out_path(g, "id_test.extxyz"));
    write_extxyz(b.ood_connectivity, out_path(g, "ood_connectivity.extxyz"));
    write_extxyz(b.ood_forcenorm, out_path(g, "ood_forcenorm.extxyz"));
    write_extxyz(b.ood_combined, out_path(g, "ood_combined.extxyz"));
    write_extxyz(b.ood_element, out_path(g, "ood_element.extxyz"));
    save_profile(b.profile, out_path(g, "profile.txt"));
    std::cout << "wrote benchmark datasets and profile to " << g.out_dir << "\n";
    return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& train_path, const std::string& task_name,
              const std::string& ckpt_out) {
    auto cfg = load_experiment_config(g);
    Dataset train_set = parse_extxyz(train_path);

    ArchConfig arch = cfg.arch;
    arch.seed = g.seed;
    auto model = init_model(arch, species_of(train_set));

    TrainConfig pre = cfg.pretrain_cfg;
    pre.seed = g.seed;
    TrainConfig ft = cfg.finetune_cfg;
    ft.seed = g.seed ^ 0x9E3779B97F4A7C15ull;

    TrainLog log;
    if (task_name == "pretrain-freeze-finetune") {
        auto res = pretrain_freeze_finetune(model, train_set, train_set, pre, ft,
                                            cfg.align_heads);
        log = res.pretrain_log;
        log.insert(log.end(), res.finetune_log.begin(), res.finetune_log.end());
    } else {
        Task task = task_name == "main"    ? Task::Main
                    : task_name == "prior" ? Task::Prior
                    : task_name == "joint" ? Task::Joint
                                           : throw InputError("unknown task " + task_name);
        if (task != Task::Prior)
            model.set_output_bias(Head::Main, mean_per_atom_energy(train_set, Task::Main));
        if (task != Task::Main)
            model.set_output_bias(Head::Prior, mean_per_atom_energy(train_set, Task::Prior));
        log = train(model, train_set, task, pre);
    }

    CsvWriter csv(out_path(g, "train_log.csv"), {"step", "loss_main", "loss_prior", "force_mae"});
    for (const auto& row : log)
        csv.row({CsvWriter::cell(row.step), CsvWriter::cell(row.loss_main),
                 CsvWriter::cell(row.loss_prior), CsvWriter::cell(row.force_mae)});
    save_checkpoint(model, ckpt_out);
    std::cout << "checkpoint written to " << ckpt_out << "\n";
    return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& ckpt, const std::string& data_path,
             const std::string& head_name) {
    auto model = load_checkpoint(ckpt);
    auto data = parse_extxyz(data_path);
    Head head = head_name == "prior" ? Head::Prior : Head::Main;
    CsvWriter csv(out_path(g, "eval.csv"),
                  {"structure_id", "energy", "atom", "fx", "fy", "fz"});
    for (const auto& ls : data) {
        auto out = forward_energy_forces(model, ls.structure, head);
        for (std::size_t i = 0; i < ls.structure.size(); ++i)
            csv.row({ls.structure.structure_id, CsvWriter::cell(out.energy),
                     CsvWriter::cell(i), CsvWriter::cell(out.forces[i].x),
                     CsvWriter::cell(out.forces[i].y), CsvWriter::cell(out.forces[i].z)});
    }
    std::cout << "wrote eval.csv for " << data.size() << " structures\n";
    return 0;
}

int cmd_ttt(const GlobalOpts& g, const std::string& ckpt, const std::string& test_path,
            const std::string& preset, const std::string& ckpt_out) {
    auto cfg = load_experiment_config(g);
    auto model = load_checkpoint(ckpt);
    auto test_set = parse_extxyz(test_path);

    TTTConfig tcfg = preset.empty() ? cfg.ttt_cfg : ttt_preset(preset);
    tcfg.seed = g.seed;
    auto res = ttt_adapt(model, structures_of(test_set), cfg.gen.prior, tcfg);
    save_checkpoint(res.adapted, ckpt_out);

    CsvWriter hist(out_path(g, "ttt_loss_history.csv"), {"step", "prior_loss"});
    for (std::size_t i = 0; i < res.loss_history.size(); ++i)
        hist.row({CsvWriter::cell(i), CsvWriter::cell(res.loss_history[i])});

    bool labeled = true;
    for (const auto& ls : test_set)
        if (!ls.reference) labeled = false;
    CsvWriter metrics(out_path(g, "ttt_metrics.csv"), {"metric", "before", "after"});
    if (labeled) {
        metrics.row({"force_mae", CsvWriter::cell(dataset_force_mae(model, test_set)),
                     CsvWriter::cell(dataset_force_mae(res.adapted, test_set))});
    }
    metrics.row({"prior_loss", CsvWriter::cell(res.loss_history.front()),
                 CsvWriter::cell(res.loss_history.back())});
    std::cout << "adapted checkpoint written to " << ckpt_out << " (" << res.steps_taken
              << " steps, stop: " << res.stop_reason << ")\n";
    return 0;
}

int cmd_rr(const GlobalOpts& g, const std::string& profile_path,
           const std::string& structure_path) {
    auto profile = load_profile(profile_path);
    auto data = parse_extxyz(structure_path);
    auto candidates = default_rr_candidates(profile.train_cutoff);
    CsvWriter csv(out_path(g, "rr.csv"),
                  {"structure_id", "candidate", "distance", "chosen"});
    for (const auto& ls : data) {
        auto res = refine_radius(ls.structure, profile, candidates);
        for (std::size_t i = 0; i < res.candidates.size(); ++i)
            csv.row({ls.structure.structure_id, CsvWriter::cell(res.candidates[i]),
                     CsvWriter::cell(res.distances[i]),
                     res.candidates[i] == res.best_cutoff ? "1" : "0"});
        std::cout << ls.structure.structure_id << ": best cutoff " << fmt_g12(res.best_cutoff)
                  << " (distance " << fmt_g12(res.best_distance) << ")\n";
    }
    return 0;
}

int cmd_diagnose(const GlobalOpts& g, const std::string& profile_path,
                 const std::string& structure_path) {
    auto cfg = load_experiment_config(g);
    auto profile = load_profile(profile_path);
    auto data = parse_extxyz(structure_path);
    CsvWriter csv(out_path(g, "diagnose.csv"),
                  {"structure_id", "n_atoms", "unseen_element", "size_ood", "composition_ood",
                   "force_norm_ood", "connectivity_ood", "spectral_distance",
                   "prior_force_norm"});
    for (const auto& ls : data) {
        auto rep = diagnose(ls.structure, profile, cfg.gen.prior);
        csv.row({rep.structure_id, CsvWriter::cell(rep.n_atoms),
                 rep.unseen_element ? "1" : "0", rep.size_ood ? "1" : "0",
                 rep.composition_ood ? "1" : "0", flag_name(rep.force_norm_ood),
                 rep.connectivity_ood ? "1" : "0", CsvWriter::cell(rep.spectral_distance),
                 std::isnan(rep.prior_force_norm) ? "nan"
                                                  : CsvWriter::cell(rep.prior_force_norm)});
    }
    std::cout << "wrote diagnose.csv for " << data.size() << " structures\n";
    return 0;
}

int cmd_simulate(const GlobalOpts& g, const std::string& ckpt, const std::string& structure_path,
                 const std::string& ensemble, bool use_rr, const std::string& profile_path) {
    auto cfg = load_experiment_config(g);
    auto model = load_checkpoint(ckpt);
    auto data = parse_extxyz(structure_path);
    if (data.empty()) throw InputError("simulate: no structures in " + structure_path);
    Structure start = data.front().structure;

    std::optional<double> cutoff_override;
    if (use_rr) {
        if (profile_path.empty()) throw InputError("simulate: --rr requires --profile");
        auto profile = load_profile(profile_path);
        auto res = refine_radius(start, profile, default_rr_candidates(profile.train_cutoff));
        cutoff_override = res.best_cutoff;
        std::cout << "radius refinement: cutoff " << fmt_g12(res.best_cutoff) << "\n";
    }
    ForceProvider force = [&](const Structure& s) {
        return forward_energy_forces(model, s, Head::Main, cutoff_override);
    };

    SimConfig sim = cfg.md_cfg;
    sim.seed = g.seed;
    Trajectory traj = ensemble == "nve" ? run_nve(force, start, sim)
                                        : run_nvt(force, start, sim);
    write_trajectory_extxyz(traj, out_path(g, "trajectory.extxyz"));

    auto bonds = bonds_at_cutoff(start, model.arch.cutoff);
    CsvWriter csv(out_path(g, "simulation_metrics.csv"), {"metric", "value"});
    csv.row({"stability_ps", CsvWriter::cell(stability_time(traj, bonds))});
    csv.row({"energy_deviation_ev", CsvWriter::cell(nve_energy_deviation(traj))});
    csv.row({"unstable", traj.unstable ? "1" : "0"});
    std::cout << "trajectory written (" << traj.frames.size() << " frames, "
              << (traj.unstable ? "unstable" : "stable") << ")\n";
    return traj.unstable ? 1 : 0;
}

int cmd_spectra(const GlobalOpts& g, const std::string& structure_path, double cutoff) {
    auto data = parse_extxyz(structure_path);
    CsvWriter csv(out_path(g, "spectra.csv"),
                  {"structure_id", "eigenvalue_index", "value"});
    for (const auto& ls : data) {
        auto sp = laplacian_spectrum(build_radius_graph(ls.structure, cutoff));
        for (std::size_t k = 0; k < sp.eigenvalues.size(); ++k)
            csv.row({ls.structure.structure_id, CsvWriter::cell(k),
                     CsvWriter::cell(sp.eigenvalues[k])});
    }
    std::cout << "wrote spectra.csv for " << data.size() << " structures\n";
    return 0;
}

int cmd_theorem_demo(const GlobalOpts& g, std::size_t trials) {
    TheoremGenConfig cfg;
    cfg.seed = g.seed;
    auto report = verify_theorem(cfg, trials);
    CsvWriter csv(out_path(g, "theorem_trials.csv"),
                  {"trial", "inconclusive", "cond_sign", "cond_inner", "test_distance",
                   "loss_before", "loss_after", "decreased"});
    for (std::size_t i = 0; i < report.trials.size(); ++i) {
        const auto& t = report.trials[i];
        csv.row({CsvWriter::cell(i), t.inconclusive ? "1" : "0", t.cond_sign ? "1" : "0",
                 t.cond_inner ? "1" : "0", CsvWriter::cell(t.test_distance),
                 CsvWriter::cell(t.loss_before), CsvWriter::cell(t.loss_after),
                 t.decreased ? "1" : "0"});
    }
    std::printf(
        "trials %zu | condition-satisfying %zu | main-loss decreased %zu (%.1f%%) | "
        "inconclusive %zu\n",
        report.trials.size(), report.satisfying, report.decreased,
        100.0 * report.success_fraction(), report.inconclusive);
    return 0;
}

int cmd_experiment(const GlobalOpts& g, const std::string& pipeline) {
    auto cfg = load_experiment_config(g);
    auto summary = run_experiment(pipeline, cfg, g.out_dir);
    std::cout << summary.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"test-time refinement toolkit for machine-learned force fields"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--seed", g.seed, "global random seed");
    app.add_option("--config", g.config_path, "experiment config file");
    app.add_option("--out-dir", g.out_dir, "output directory");

    auto* generate = app.add_subcommand("generate", "generate the synthetic benchmark");

    std::string train_path, task_name = "pretrain-freeze-finetune", ckpt_out = "model.ckpt";
    auto* train_cmd = app.add_subcommand("train", "train a model");
    train_cmd->add_option("data", train_path, "training extxyz")->required();
    train_cmd->add_option("--task", task_name,
                          "main | prior | joint | pretrain-freeze-finetune");
    train_cmd->add_option("--ckpt-out", ckpt_out, "checkpoint output path");

    std::string eval_ckpt, eval_data, eval_head = "main";
    auto* eval_cmd = app.add_subcommand("eval", "print energies and forces as CSV");
    eval_cmd->add_option("checkpoint", eval_ckpt)->required();
    eval_cmd->add_option("data", eval_data)->required();
    eval_cmd->add_option("--head", eval_head, "main | prior");

    std::string ttt_ckpt, ttt_data, ttt_preset_name, ttt_out = "adapted.ckpt";
    auto* ttt_cmd = app.add_subcommand("ttt", "test-time training on a test set");
    ttt_cmd->add_option("checkpoint", ttt_ckpt)->required();
    ttt_cmd->add_option("data", ttt_data)->required();
    ttt_cmd->add_option("--preset", ttt_preset_name, "spice | md17 | md22");
    ttt_cmd->add_option("--ckpt-out", ttt_out, "adapted checkpoint path");

    std::string rr_profile, rr_data;
    auto* rr_cmd = app.add_subcommand("rr", "test-time radius refinement");
    rr_cmd->add_option("profile", rr_profile)->required();
    rr_cmd->add_option("data", rr_data)->required();

    std::string diag_profile, diag_data;
    auto* diag_cmd = app.add_subcommand("diagnose", "distribution-shift reports");
    diag_cmd->add_option("profile", diag_profile)->required();
    diag_cmd->add_option("data", diag_data)->required();

    std::string sim_ckpt, sim_data, sim_ensemble = "nvt", sim_profile;
    bool sim_rr = false;
    auto* sim_cmd = app.add_subcommand("simulate", "run molecular dynamics with a model");
    sim_cmd->add_option("checkpoint", sim_ckpt)->required();
    sim_cmd->add_option("data", sim_data)->required();
    sim_cmd->add_option("--ensemble", sim_ensemble, "nvt | nve");
    sim_cmd->add_flag("--rr", sim_rr, "apply radius refinement first");
    sim_cmd->add_option("--profile", sim_profile, "training profile (for --rr)");

    std::string spec_data;
    double spec_cutoff = 4.5;
    auto* spec_cmd = app.add_subcommand("spectra", "Laplacian spectra as CSV");
    spec_cmd->add_option("data", spec_data)->required();
    spec_cmd->add_option("--cutoff", spec_cutoff, "radius cutoff (Angstrom)");

    std::size_t trials = 1000;
    auto* thm_cmd = app.add_subcommand("theorem-demo", "linear-model TTT theorem verification");
    thm_cmd->add_option("--trials", trials, "number of generated trials");

    std::string pipeline;
    auto* exp_cmd = app.add_subcommand("experiment", "run a named pipeline");
    exp_cmd->add_option("pipeline", pipeline,
                        "shift-benchmark | ttt-vs-finetune | rr-sweep | md-transfer")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) return cmd_generate(g);
        if (train_cmd->parsed()) return cmd_train(g, train_path, task_name, ckpt_out);
        if (eval_cmd->parsed()) return cmd_eval(g, eval_ckpt, eval_data, eval_head);
        if (ttt_cmd->parsed()) return cmd_ttt(g, ttt_ckpt, ttt_data, ttt_preset_name, ttt_out);
        if (rr_cmd->parsed()) return cmd_rr(g, rr_profile, rr_data);
        if (diag_cmd->parsed()) return cmd_diagnose(g, diag_profile, diag_data);
        if (sim_cmd->parsed())
            return cmd_simulate(g, sim_ckpt, sim_data, sim_ensemble, sim_rr, sim_profile);
        if (spec_cmd->parsed()) return cmd_spectra(g, spec_data, spec_cutoff);
        if (thm_cmd->parsed()) return cmd_theorem_demo(g, trials);
        if (exp_cmd->parsed()) return cmd_experiment(g, pipeline);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
