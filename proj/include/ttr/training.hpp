#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "ttr/core.hpp"
#include "ttr/model.hpp"
#include "ttr/rng.hpp"

namespace ttr {

enum class Task { Main, Prior, Joint };
enum class Optimizer { SgdMomentum, Adam };

struct FreezeMask {
    bool repr = false;
    bool main_head = false;
    bool prior_head = false;

    bool all() const { return repr && main_head && prior_head; }
};

struct TrainConfig {
    Optimizer optimizer = Optimizer::SgdMomentum;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double weight_decay = 0.0;
    int batch_size = 8;
    int epochs = 1;
    int steps = 0;  // when > 0 runs exactly this many batch steps instead of epochs
    LossWeights loss_weights;
    std::uint64_t seed = 0;
    FreezeMask freeze;

    void validate() const {
        // lr 0 is legal so an optimizer step can be proven to be a no-op
        if (!(learning_rate >= 0.0)) throw InputError("TrainConfig: learning_rate must be >= 0");
        if (batch_size < 1) throw InputError("TrainConfig: batch_size must be >= 1");
        if (freeze.all()) throw InputError("TrainConfig: cannot freeze every partition");
        if (epochs < 0 || steps < 0) throw InputError("TrainConfig: negative step counts");
    }
};

struct TrainStepLog {
    int step = 0;
    double loss_main = 0.0;
    double loss_prior = 0.0;
    double force_mae = 0.0;  // batch MAE on the task's labeled forces
};

using TrainLog = std::vector<TrainStepLog>;

namespace detail {

// Indices that both receive gradient from the task and are not frozen.
// Weight decay (decoupled L2) applies to exactly these.
inline std::vector<std::pair<std::size_t, std::size_t>> active_ranges(
    const ModelParams& p, Task task, const FreezeMask& freeze) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    bool repr_active = !freeze.repr;
    bool main_active = !freeze.main_head && (task == Task::Main || task == Task::Joint);
    bool prior_active = !freeze.prior_head && (task == Task::Prior || task == Task::Joint);
    if (repr_active) out.push_back({p.repr_span().offset, p.repr_span().size});
    if (main_active) out.push_back({p.main_span().offset, p.main_span().size});
    if (prior_active) out.push_back({p.prior_span().offset, p.prior_span().size});
    if (out.empty()) throw InputError("train: no active partition for this task/freeze mask");
    return out;
}

struct OptimizerState {
    std::vector<double> velocity;   // SGD momentum
    std::vector<double> adam_m, adam_v;
    long t = 0;

    void init(std::size_t n) {
        velocity.assign(n, 0.0);
        adam_m.assign(n, 0.0);
        adam_v.assign(n, 0.0);
        t = 0;
    }

    void apply(ModelParams& params, const std::vector<double>& grad, const TrainConfig& cfg,
               const std::vector<std::pair<std::size_t, std::size_t>>& ranges) {
        ++t;
        for (auto [off, len] : ranges) {
            for (std::size_t i = off; i < off + len; ++i) {
                double g = grad[i];
                double& th = params.values[i];
                if (cfg.optimizer == Optimizer::SgdMomentum) {
                    velocity[i] = cfg.momentum * velocity[i] + g;
                    th -= cfg.learning_rate * velocity[i];
                } else {
                    adam_m[i] = 0.9 * adam_m[i] + 0.1 * g;
                    adam_v[i] = 0.999 * adam_v[i] + 0.001 * g * g;
                    double mhat = adam_m[i] / (1.0 - std::pow(0.9, static_cast<double>(t)));
                    double vhat = adam_v[i] / (1.0 - std::pow(0.999, static_cast<double>(t)));
                    th -= cfg.learning_rate * mhat / (std::sqrt(vhat) + 1e-8);
                }
                if (cfg.weight_decay > 0.0) th -= cfg.learning_rate * cfg.weight_decay * th;
            }
        }
    }
};

inline void check_task_labels(const Dataset& data, Task task) {
    if (data.empty()) throw InputError("train: empty dataset");
    for (const auto& ls : data) {
        ls.validate();
        bool need_main = task == Task::Main || task == Task::Joint;
        bool need_prior = task == Task::Prior || task == Task::Joint;
        if (need_main && !ls.reference)
            throw InputError("train: structure " + ls.structure.structure_id +
                             " lacks reference labels for the main task");
        if (need_prior && !ls.prior)
            throw InputError("train: structure " + ls.structure.structure_id +
                             " lacks prior labels");
    }
}

}  // namespace detail

// Mini-batch gradient descent on L_M, L_P, or L_M + L_P. Batch gradients are
// averaged; batch order is a seeded shuffle per epoch; frozen partitions are
// left bit-identical.
inline TrainLog train(ModelParams& model, const Dataset& data, Task task,
                      const TrainConfig& cfg) {
    cfg.validate();
    detail::check_task_labels(data, task);

    auto ranges = detail::active_ranges(model, task, cfg.freeze);
    detail::OptimizerState opt;
    opt.init(model.values.size());

    TrainLog log;
    Rng rng(cfg.seed ^ 0xA02BDBF7BB3C0A7ull);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    const long total_steps =
        cfg.steps > 0
            ? cfg.steps
            : static_cast<long>(cfg.epochs) *
                  ((static_cast<long>(data.size()) + cfg.batch_size - 1) / cfg.batch_size);

    long step = 0;
    std::size_t cursor = 0;
    rng.shuffle(order);
    std::vector<double> grad_sum(model.values.size());
    while (step < total_steps) {
        if (cursor >= order.size()) {
            cursor = 0;
            rng.shuffle(order);
        }
        std::size_t batch_end = std::min(cursor + static_cast<std::size_t>(cfg.batch_size),
                                         order.size());
        std::fill(grad_sum.begin(), grad_sum.end(), 0.0);
        double loss_main = 0.0, loss_prior = 0.0, mae_acc = 0.0;
        std::size_t batch_n = batch_end - cursor;
        for (std::size_t b = cursor; b < batch_end; ++b) {
            const auto& ls = data[order[b]];
            LossGrad lg;
            if (task == Task::Main)
                lg = grad_params(model, ls.structure, *ls.reference, Head::Main,
                                 cfg.loss_weights);
            else if (task == Task::Prior)
                lg = grad_params(model, ls.structure, *ls.prior, Head::Prior, cfg.loss_weights);
            else
                lg = grad_params_joint(model, ls.structure, *ls.reference, *ls.prior,
                                       cfg.loss_weights);
            for (std::size_t i = 0; i < grad_sum.size(); ++i) grad_sum[i] += lg.grad[i];
            loss_main += lg.loss_main;
            loss_prior += lg.loss_prior;

            Head mae_head = task == Task::Prior ? Head::Prior : Head::Main;
            const Labels& mae_lab = task == Task::Prior ? *ls.prior : *ls.reference;
            auto pred = forward_energy_forces(model, ls.structure, mae_head);
            mae_acc += force_mae(pred.forces, mae_lab.forces);
        }
        double inv = 1.0 / static_cast<double>(batch_n);
        for (double& g : grad_sum) g *= inv;
        opt.apply(model, grad_sum, cfg, ranges);

        log.push_back({static_cast<int>(step), loss_main * inv, loss_prior * inv,
                       mae_acc * inv});
        cursor = batch_end;
        ++step;
    }
    return log;
}

// Mean per-atom energy of a label set; used to initialize readout biases.
inline double mean_per_atom_energy(const Dataset& data, Task task) {
    std::vector<double> vals;
    for (const auto& ls : data) {
        const auto& lab = task == Task::Prior ? ls.prior : ls.reference;
        if (lab) vals.push_back(lab->energy / static_cast<double>(ls.structure.size()));
    }
    if (vals.empty()) throw InputError("mean_per_atom_energy: no labels of requested kind");
    return mean(vals);
}

struct PretrainResult {
    TrainLog pretrain_log;
    TrainLog finetune_log;
};

// Phase 1: train {repr, prior head} on the prior task. Phase 2: train the
// main head on reference labels with repr and prior head frozen; the returned
// representation is bit-identical to the phase-1 output. With align_heads the
// main head starts phase 2 as a copy of the trained prior head, which keeps
// the two heads reading the shared features the same way and makes test-time
// feature updates transfer to the main task.
inline PretrainResult pretrain_freeze_finetune(ModelParams& model, const Dataset& prior_data,
                                               const Dataset& ref_data, TrainConfig cfg_pre,
                                               TrainConfig cfg_ft, bool align_heads = false) {
    PretrainResult res;
    model.set_output_bias(Head::Prior, mean_per_atom_energy(prior_data, Task::Prior));
    cfg_pre.freeze.main_head = true;
    res.pretrain_log = train(model, prior_data, Task::Prior, cfg_pre);

    if (align_heads) {
        auto mspan = model.main_span();
        auto pspan = model.prior_span();
        for (std::size_t i = 0; i < mspan.size; ++i)
            model.values[mspan.offset + i] = model.values[pspan.offset + i];
    }
    model.set_output_bias(Head::Main, mean_per_atom_energy(ref_data, Task::Main));
    cfg_ft.freeze.repr = true;
    cfg_ft.freeze.prior_head = true;
    res.finetune_log = train(model, ref_data, Task::Main, cfg_ft);
    return res;
}

// Pooled component-wise force MAE of main-head predictions over a dataset.
inline double dataset_force_mae(const ModelParams& model, const Dataset& data,
                                Head head = Head::Main,
                                std::optional<double> cutoff_override = std::nullopt) {
    if (data.empty()) throw InputError("dataset_force_mae: empty dataset");
    double acc = 0.0;
    std::size_t comps = 0;
    for (const auto& ls : data) {
        const auto& lab = head == Head::Prior ? ls.prior : ls.reference;
        if (!lab) throw InputError("dataset_force_mae: missing labels");
        auto pred = forward_energy_forces(model, ls.structure, head, cutoff_override);
        for (std::size_t i = 0; i < ls.structure.size(); ++i) {
            acc += std::abs(pred.forces[i].x - lab->forces[i].x) +
                   std::abs(pred.forces[i].y - lab->forces[i].y) +
                   std::abs(pred.forces[i].z - lab->forces[i].z);
            comps += 3;
        }
    }
    return acc / static_cast<double>(comps);
}

struct FineTunePoint {
    double fraction = 0.0;
    double force_mae = 0.0;
};

// Fine-tunes a copy of the model per budget fraction on nested, seed-chosen
// subsets of new_ref_data and reports held-out force MAE on eval_data.
inline std::vector<FineTunePoint> fine_tune(const ModelParams& model,
                                            const Dataset& new_ref_data,
                                            const TrainConfig& config,
                                            const std::vector<double>& budget_fractions,
                                            const Dataset& eval_data) {
    detail::check_task_labels(new_ref_data, Task::Main);
    for (double f : budget_fractions)
        if (!(f > 0.0 && f <= 1.0))
            throw InputError("fine_tune: budget fractions must lie in (0, 1]");

    std::vector<std::size_t> order(new_ref_data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(config.seed ^ 0x94D049BB133111EBull);
    rng.shuffle(order);

    std::vector<FineTunePoint> curve;
    for (double f : budget_fractions) {
        std::size_t k = static_cast<std::size_t>(
            std::llround(f * static_cast<double>(new_ref_data.size())));
        if (k == 0) {
            std::cerr << "fine_tune: fraction " << f << " rounds to an empty subset, skipped\n";
            continue;
        }
        Dataset subset;
        for (std::size_t i = 0; i < k; ++i) subset.push_back(new_ref_data[order[i]]);
        ModelParams copy = model;
        train(copy, subset, Task::Main, config);
        curve.push_back({f, dataset_force_mae(copy, eval_data, Head::Main)});
    }
    return curve;
}

}  // namespace ttr
