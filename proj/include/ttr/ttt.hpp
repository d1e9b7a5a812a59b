#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ttr/core.hpp"
#include "ttr/model.hpp"
#include "ttr/potentials.hpp"

namespace ttr {

// Test-time training configuration. Steps run full-batch gradient descent on
// the pooled adaptation set, so the loss history is the exact objective.
// SGD with momentum matches the molecular presets; Adam is the OC20-style
// alternative whose per-coordinate scaling is robust to the loss magnitude.
struct TTTConfig {
    int steps = 250;
    double learning_rate = 1e-4;
    double momentum = 0.9;
    double weight_decay = 0.001;
    bool use_adam = false;
    int early_stop_patience = 10;
    double early_stop_min_delta = 1e-6;
    std::optional<double> early_stop_target_loss;  // in-distribution prior loss
    LossWeights loss_weights;
    std::uint64_t seed = 0;

    void validate() const {
        if (steps < 0) throw InputError("TTTConfig: steps must be >= 0");
        if (early_stop_patience < 1) throw InputError("TTTConfig: patience must be >= 1");
        if (!(learning_rate >= 0.0)) throw InputError("TTTConfig: learning_rate must be >= 0");
    }
};

// Step/learning-rate presets named after the benchmarks they were tuned on;
// all use SGD with momentum 0.9 and weight decay 0.001.
inline TTTConfig ttt_preset(const std::string& name) {
    TTTConfig cfg;
    if (name == "spice") {
        cfg.steps = 250;
        cfg.learning_rate = 1e-4;
    } else if (name == "md17") {
        cfg.steps = 3000;
        cfg.learning_rate = 1e-3;
    } else if (name == "md22") {
        cfg.steps = 50;
        cfg.learning_rate = 1e-5;
    } else {
        throw InputError("unknown ttt preset: " + name);
    }
    return cfg;
}

struct TTTResult {
    ModelParams adapted;
    std::vector<double> loss_history;  // mean prior loss per evaluation
    int steps_taken = 0;
    std::string stop_reason;  // "budget" | "plateau" | "target"
};

// Adapts only the representation parameters by descending the prior loss on
// the test structures (labeled here with the prior potential). The two head
// partitions stay bit-identical.
inline TTTResult ttt_adapt(const ModelParams& model, const std::vector<Structure>& test_structures,
                           const PairParams& prior, const TTTConfig& config) {
    config.validate();
    if (test_structures.empty()) throw InputError("ttt_adapt: no test structures");

    std::vector<Labels> prior_labels;
    prior_labels.reserve(test_structures.size());
    for (const auto& s : test_structures) {
        auto [e, f] = lj_energy_forces(s, prior);  // unknown species -> InputError
        prior_labels.push_back(Labels{e, std::move(f)});
    }

    TTTResult res;
    res.adapted = model;
    auto span = res.adapted.repr_span();
    std::vector<double> velocity(span.size, 0.0);
    std::vector<double> adam_m(span.size, 0.0), adam_v(span.size, 0.0);

    const double inv_n = 1.0 / static_cast<double>(test_structures.size());
    std::vector<double> grad(model.values.size());

    auto eval_loss_and_grad = [&](bool want_grad) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        for (std::size_t i = 0; i < test_structures.size(); ++i) {
            if (want_grad) {
                auto lg = grad_params(res.adapted, test_structures[i], prior_labels[i],
                                      Head::Prior, config.loss_weights);
                loss += lg.loss;
                for (std::size_t k = span.offset; k < span.offset + span.size; ++k)
                    grad[k] += lg.grad[k];
            } else {
                loss += loss_eval(res.adapted, test_structures[i], prior_labels[i], Head::Prior,
                                  config.loss_weights);
            }
        }
        return loss * inv_n;
    };

    double best = std::numeric_limits<double>::infinity();
    int since_best = 0;
    res.stop_reason = "budget";
    for (int step = 0; step < config.steps; ++step) {
        double loss = eval_loss_and_grad(true);
        res.loss_history.push_back(loss);

        if (config.early_stop_target_loss && loss <= *config.early_stop_target_loss) {
            res.stop_reason = "target";
            return res;
        }
        if (loss < best - config.early_stop_min_delta) {
            best = loss;
            since_best = 0;
        } else if (++since_best >= config.early_stop_patience) {
            res.stop_reason = "plateau";
            return res;
        }

        for (std::size_t k = 0; k < span.size; ++k) {
            std::size_t idx = span.offset + k;
            double g = grad[idx] * inv_n;
            double& th = res.adapted.values[idx];
            if (config.use_adam) {
                adam_m[k] = 0.9 * adam_m[k] + 0.1 * g;
                adam_v[k] = 0.999 * adam_v[k] + 0.001 * g * g;
                double mhat = adam_m[k] / (1.0 - std::pow(0.9, step + 1.0));
                double vhat = adam_v[k] / (1.0 - std::pow(0.999, step + 1.0));
                th -= config.learning_rate * mhat / (std::sqrt(vhat) + 1e-8);
            } else {
                velocity[k] = config.momentum * velocity[k] + g;
                th -= config.learning_rate * velocity[k];
            }
            if (config.weight_decay > 0.0)
                th -= config.learning_rate * config.weight_decay * th;
        }
        res.steps_taken = step + 1;
    }
    res.loss_history.push_back(eval_loss_and_grad(false));
    return res;
}

// Main-head predictions with the adapted representation.
inline std::vector<EnergyForces> predict_after_ttt(const ModelParams& adapted,
                                                   const std::vector<Structure>& structures,
                                                   std::optional<double> cutoff_override =
                                                       std::nullopt) {
    std::vector<EnergyForces> out;
    out.reserve(structures.size());
    for (const auto& s : structures)
        out.push_back(forward_energy_forces(adapted, s, Head::Main, cutoff_override));
    return out;
}

}  // namespace ttr
