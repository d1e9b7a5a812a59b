#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ttr/core.hpp"
#include "ttr/graph.hpp"
#include "ttr/rng.hpp"
#include "ttr/tape.hpp"

namespace ttr {

// Architecture hyperparameters. The species embedding width equals
// n_radial_basis; the activation is shifted softplus, ln(1+e^x) - ln 2,
// so the energy is smooth in the positions.
struct ArchConfig {
    int n_radial_basis = 6;
    int hidden_width = 16;
    int repr_blocks = 1;
    int head_blocks = 2;
    double cutoff = 4.5;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_radial_basis < 1 || hidden_width < 1 || repr_blocks < 1 || head_blocks < 1)
            throw InputError("ArchConfig counts must be >= 1");
        if (!(cutoff > 0.0)) throw InputError("ArchConfig cutoff must be > 0");
    }
};

enum class Head { Main, Prior };

struct LossWeights {
    double energy = 1.0;
    double force = 100.0;
};

// Flat parameter vector partitioned into representation, main head, and prior
// head slices (contiguous, disjoint, exhaustive).
struct ModelParams {
    ArchConfig arch;
    std::vector<std::string> species;  // sorted vocabulary
    std::vector<double> values;

    struct Span {
        std::size_t offset, size;
    };

    std::size_t embed_dim() const { return static_cast<std::size_t>(arch.n_radial_basis); }

    std::size_t repr_param_count() const {
        std::size_t h = arch.hidden_width, k = arch.n_radial_basis, e = embed_dim();
        return species.size() * e + h * (e + k) + h +
               static_cast<std::size_t>(arch.repr_blocks) * (2 * h * h + h);
    }
    std::size_t head_param_count() const {
        std::size_t h = arch.hidden_width;
        return static_cast<std::size_t>(arch.head_blocks - 1) * (h * h + h) + h + 1;
    }

    Span repr_span() const { return {0, repr_param_count()}; }
    Span main_span() const { return {repr_param_count(), head_param_count()}; }
    Span prior_span() const { return {repr_param_count() + head_param_count(), head_param_count()}; }
    Span head_span(Head head) const { return head == Head::Main ? main_span() : prior_span(); }

    std::size_t total_param_count() const { return repr_param_count() + 2 * head_param_count(); }

    int species_index(const std::string& sp) const {
        auto it = std::lower_bound(species.begin(), species.end(), sp);
        if (it == species.end() || *it != sp)
            throw InputError("unknown species for model: " + sp);
        return static_cast<int>(it - species.begin());
    }

    // The per-atom energy offset is the last parameter of a head's readout.
    double output_bias(Head head) const {
        auto s = head_span(head);
        return values[s.offset + s.size - 1];
    }
    void set_output_bias(Head head, double b) {
        auto s = head_span(head);
        values[s.offset + s.size - 1] = b;
    }
};

// Smooth polynomial cutoff: (1 - (r/rc)^2)^2 inside, identically 0 beyond.
// Value 1 at r=0; value and first derivative 0 at r=rc.
inline double envelope(double r, double r_cut) {
    if (!(r_cut > 0.0)) throw InputError("envelope: r_cut must be > 0");
    if (r >= r_cut) return 0.0;
    double u = r / r_cut;
    double t = 1.0 - u * u;
    return t * t;
}

inline double envelope_derivative(double r, double r_cut) {
    if (r >= r_cut) return 0.0;
    double u = r / r_cut;
    return 2.0 * (1.0 - u * u) * (-2.0 * u) / r_cut;
}

inline ModelParams init_model(const ArchConfig& arch, std::vector<std::string> species_vocab) {
    arch.validate();
    if (species_vocab.empty()) throw InputError("init_model: empty species vocabulary");
    std::sort(species_vocab.begin(), species_vocab.end());
    species_vocab.erase(std::unique(species_vocab.begin(), species_vocab.end()),
                        species_vocab.end());

    ModelParams p;
    p.arch = arch;
    p.species = std::move(species_vocab);
    p.values.assign(p.total_param_count(), 0.0);

    Rng rng(arch.seed ^ 0xD1B54A32D192ED03ull);
    std::size_t h = arch.hidden_width, k = arch.n_radial_basis, e = p.embed_dim();
    std::size_t idx = 0;

    auto fill_uniform = [&](std::size_t count, double scale) {
        for (std::size_t i = 0; i < count; ++i) p.values[idx++] = rng.uniform(-scale, scale);
    };
    auto fill_zero = [&](std::size_t count) { idx += count; };

    // representation: embedding, mixing layer, interaction blocks
    fill_uniform(p.species.size() * e, 1.0);
    fill_uniform(h * (e + k), 1.0 / std::sqrt(static_cast<double>(e + k)));
    fill_zero(h);
    for (int b = 0; b < arch.repr_blocks; ++b) {
        fill_uniform(2 * h * h, 1.0 / std::sqrt(static_cast<double>(h)));
        fill_zero(h);
    }
    // heads
    for (int head = 0; head < 2; ++head) {
        for (int l = 0; l < arch.head_blocks - 1; ++l) {
            fill_uniform(h * h, 1.0 / std::sqrt(static_cast<double>(h)));
            fill_zero(h);
        }
        fill_uniform(h, 1.0 / std::sqrt(static_cast<double>(h)));
        fill_zero(1);  // readout bias
    }
    if (idx != p.values.size()) throw NumericError("init_model: parameter layout mismatch");
    return p;
}

namespace detail {

using Var = ad::Tape::Var;

// Tape-side view of the flat parameter vector.
struct ParamVars {
    std::vector<Var> vars;
    std::size_t cursor = 0;
    Var next() { return vars[cursor++]; }
};

struct ModelGraph {
    ad::Tape tape;
    std::vector<Var> param_vars;  // aligned with ModelParams::values
    std::vector<Var> pos_vars;    // 3n, atom-major
    Var energy = ad::Tape::kNone;
};

inline Var taped_envelope(ad::Tape& t, Var r, double r_cut) {
    Var u = t.div(r, t.constant(r_cut));
    Var tt = t.sub(t.constant(1.0), t.mul(u, u));
    return t.mul(tt, tt);
}

inline Var taped_act(ad::Tape& t, Var x) {
    return t.sub(t.softplus(x), t.constant(0.6931471805599453094));
}

// Builds the full energy graph for one head (or both). Positions are leaves;
// parameters are leaves aligned with the flat vector.
class ForwardBuilder {
public:
    ForwardBuilder(const ModelParams& params, const Structure& structure,
                   const RadiusGraph& graph)
        : p_(params), s_(structure), g_(graph) {
        if (graph.n != structure.size())
            throw InputError("forward: graph/structure size mismatch");
        s_.validate();
        for (const auto& sp : s_.species) p_.species_index(sp);  // unknown species -> error

        tape_.reserve(40000 + 3000 * structure.size());
        pv_.vars.reserve(p_.values.size());
        for (double v : p_.values) pv_.vars.push_back(tape_.leaf(v));
        pos_.reserve(3 * s_.size());
        for (const auto& r : s_.positions) {
            pos_.push_back(tape_.leaf(r.x));
            pos_.push_back(tape_.leaf(r.y));
            pos_.push_back(tape_.leaf(r.z));
        }
        build_representation();
    }

    Var energy(Head head) {
        std::size_t h = static_cast<std::size_t>(p_.arch.hidden_width);
        Var total = ad::Tape::kNone;
        for (std::size_t i = 0; i < s_.size(); ++i) {
            pv_.cursor = p_.head_span(head).offset;
            std::vector<Var> t = repr_[i];
            for (int l = 0; l < p_.arch.head_blocks - 1; ++l)
                t = dense_layer(t, h, true);
            Var e = dot_with_params(t);
            e = tape_.add(e, pv_.next());  // readout bias
            total = (total == ad::Tape::kNone) ? e : tape_.add(total, e);
        }
        return total;
    }

    ad::Tape& tape() { return tape_; }
    const std::vector<Var>& param_vars() const { return pv_.vars; }
    const std::vector<Var>& pos_vars() const { return pos_; }

private:
    const ModelParams& p_;
    Structure s_;
    const RadiusGraph& g_;
    ad::Tape tape_;
    ParamVars pv_;
    std::vector<Var> pos_;
    std::vector<std::vector<Var>> repr_;       // per-atom representation
    std::vector<std::vector<Var>> edge_env_;   // per atom: envelope per neighbor

    Var coord(std::size_t atom, int axis) const { return pos_[3 * atom + axis]; }

    Var edge_distance(std::size_t i, std::size_t j) {
        Var dx = tape_.sub(coord(i, 0), coord(j, 0));
        Var dy = tape_.sub(coord(i, 1), coord(j, 1));
        Var dz = tape_.sub(coord(i, 2), coord(j, 2));
        Var d2 = tape_.add(tape_.add(tape_.mul(dx, dx), tape_.mul(dy, dy)),
                           tape_.mul(dz, dz));
        return tape_.sqrt(d2);
    }

    // W x + b with W,b read from the parameter cursor; optionally activated.
    std::vector<Var> dense_layer(const std::vector<Var>& x, std::size_t out_dim,
                                 bool activate) {
        std::vector<Var> pre(out_dim, ad::Tape::kNone);
        for (std::size_t o = 0; o < out_dim; ++o) {
            Var acc = ad::Tape::kNone;
            for (std::size_t ii = 0; ii < x.size(); ++ii) {
                Var term = tape_.mul(pv_.next(), x[ii]);
                acc = (acc == ad::Tape::kNone) ? term : tape_.add(acc, term);
            }
            pre[o] = acc;
        }
        for (std::size_t o = 0; o < out_dim; ++o) {
            pre[o] = tape_.add(pre[o], pv_.next());
            if (activate) pre[o] = taped_act(tape_, pre[o]);
        }
        return pre;
    }

    Var dot_with_params(const std::vector<Var>& x) {
        Var acc = ad::Tape::kNone;
        for (std::size_t ii = 0; ii < x.size(); ++ii) {
            Var term = tape_.mul(pv_.next(), x[ii]);
            acc = (acc == ad::Tape::kNone) ? term : tape_.add(acc, term);
        }
        return acc;
    }

    void build_representation() {
        const std::size_t n = s_.size();
        const std::size_t k = static_cast<std::size_t>(p_.arch.n_radial_basis);
        const std::size_t e = p_.embed_dim();
        const std::size_t h = static_cast<std::size_t>(p_.arch.hidden_width);
        const double rc = g_.cutoff;
        const double spacing = (k > 1) ? rc / static_cast<double>(k - 1) : rc;
        const double gamma = 1.0 / (2.0 * spacing * spacing);

        // envelope-weighted Gaussian radial sums per atom
        edge_env_.assign(n, {});
        std::vector<std::vector<Var>> radial(n, std::vector<Var>(k, ad::Tape::kNone));
        Var zero = tape_.constant(0.0);
        for (std::size_t i = 0; i < n; ++i) {
            edge_env_[i].reserve(g_.neighbors[i].size());
            for (std::size_t j : g_.neighbors[i]) {
                Var r = edge_distance(i, j);
                Var env = taped_envelope(tape_, r, rc);
                edge_env_[i].push_back(env);
                for (std::size_t b = 0; b < k; ++b) {
                    double mu = static_cast<double>(b) * spacing;
                    Var d = tape_.sub(r, tape_.constant(mu));
                    Var gauss = tape_.exp(tape_.neg(tape_.mul(tape_.constant(gamma),
                                                              tape_.mul(d, d))));
                    Var basis = tape_.mul(env, gauss);
                    radial[i][b] = (radial[i][b] == ad::Tape::kNone)
                                       ? basis
                                       : tape_.add(radial[i][b], basis);
                }
            }
            for (std::size_t b = 0; b < k; ++b)
                if (radial[i][b] == ad::Tape::kNone) radial[i][b] = zero;
        }

        // descriptor = [species embedding ; radial sums] -> mixing layer
        std::vector<std::vector<Var>> hvec(n);
        const std::size_t mix_offset = p_.species.size() * e;
        for (std::size_t i = 0; i < n; ++i) {
            int zi = p_.species_index(s_.species[i]);
            std::vector<Var> x;
            x.reserve(e + k);
            for (std::size_t c = 0; c < e; ++c)
                x.push_back(pv_.vars[static_cast<std::size_t>(zi) * e + c]);
            for (std::size_t b = 0; b < k; ++b) x.push_back(radial[i][b]);
            pv_.cursor = mix_offset;
            hvec[i] = dense_layer(x, h, true);
        }

        // interaction blocks: h_i <- act(W h_i + U m_i + b) with envelope-
        // weighted neighbor message m_i
        std::size_t block_offset = mix_offset + h * (e + k) + h;
        for (int blk = 0; blk < p_.arch.repr_blocks; ++blk) {
            std::vector<std::vector<Var>> msg(n, std::vector<Var>(h, ad::Tape::kNone));
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t jn = 0; jn < g_.neighbors[i].size(); ++jn) {
                    std::size_t j = g_.neighbors[i][jn];
                    Var env = edge_env_[i][jn];
                    for (std::size_t c = 0; c < h; ++c) {
                        Var term = tape_.mul(env, hvec[j][c]);
                        msg[i][c] = (msg[i][c] == ad::Tape::kNone)
                                        ? term
                                        : tape_.add(msg[i][c], term);
                    }
                }
                for (std::size_t c = 0; c < h; ++c)
                    if (msg[i][c] == ad::Tape::kNone) msg[i][c] = zero;
            }
            std::vector<std::vector<Var>> next(n);
            for (std::size_t i = 0; i < n; ++i) {
                pv_.cursor = block_offset;
                std::vector<Var> self_part(h), msg_part(h);
                // W h_i
                for (std::size_t o = 0; o < h; ++o) {
                    Var acc = ad::Tape::kNone;
                    for (std::size_t c = 0; c < h; ++c) {
                        Var term = tape_.mul(pv_.next(), hvec[i][c]);
                        acc = (acc == ad::Tape::kNone) ? term : tape_.add(acc, term);
                    }
                    self_part[o] = acc;
                }
                // U m_i
                for (std::size_t o = 0; o < h; ++o) {
                    Var acc = ad::Tape::kNone;
                    for (std::size_t c = 0; c < h; ++c) {
                        Var term = tape_.mul(pv_.next(), msg[i][c]);
                        acc = (acc == ad::Tape::kNone) ? term : tape_.add(acc, term);
                    }
                    msg_part[o] = acc;
                }
                next[i].resize(h);
                for (std::size_t o = 0; o < h; ++o) {
                    Var pre = tape_.add(tape_.add(self_part[o], msg_part[o]), pv_.next());
                    next[i][o] = taped_act(tape_, pre);
                }
            }
            hvec = std::move(next);
            block_offset += 2 * h * h + h;
        }
        repr_ = std::move(hvec);
    }
};

}  // namespace detail

// Per-atom descriptors: species embedding concatenated with envelope-weighted
// Gaussian radial sums over graph neighbors.
inline std::vector<std::vector<double>> featurize(const ModelParams& params,
                                                  const Structure& structure,
                                                  const RadiusGraph& graph) {
    if (graph.n != structure.size()) throw InputError("featurize: graph/structure size mismatch");
    structure.validate();
    const std::size_t k = static_cast<std::size_t>(params.arch.n_radial_basis);
    const std::size_t e = params.embed_dim();
    const double rc = graph.cutoff;
    const double spacing = (k > 1) ? rc / static_cast<double>(k - 1) : rc;
    const double gamma = 1.0 / (2.0 * spacing * spacing);

    std::vector<std::vector<double>> out(structure.size(), std::vector<double>(e + k, 0.0));
    for (std::size_t i = 0; i < structure.size(); ++i) {
        int zi = params.species_index(structure.species[i]);
        for (std::size_t c = 0; c < e; ++c)
            out[i][c] = params.values[static_cast<std::size_t>(zi) * e + c];
        for (std::size_t j : graph.neighbors[i]) {
            double r = distance(structure.positions[i], structure.positions[j]);
            double env = envelope(r, rc);
            for (std::size_t b = 0; b < k; ++b) {
                double mu = static_cast<double>(b) * spacing;
                out[i][e + b] += env * std::exp(-gamma * (r - mu) * (r - mu));
            }
        }
    }
    return out;
}

struct EnergyForces {
    double energy = 0.0;
    std::vector<Vec3> forces;
};

// E from the selected head; F = -dE/dpositions by reverse-mode differentiation
// through the same graph (conservative by construction). An explicit cutoff
// overrides the architecture cutoff (radius refinement).
inline EnergyForces forward_energy_forces(const ModelParams& params, const Structure& structure,
                                          Head head,
                                          std::optional<double> cutoff_override = std::nullopt) {
    double rc = cutoff_override.value_or(params.arch.cutoff);
    RadiusGraph graph = build_radius_graph(structure, rc);
    detail::ForwardBuilder fb(params, structure, graph);
    detail::Var e = fb.energy(head);

    std::vector<double> adj;
    fb.tape().backward_numeric(e, adj);

    EnergyForces out;
    out.energy = fb.tape().val(e);
    out.forces.resize(structure.size());
    const auto& pos = fb.pos_vars();
    for (std::size_t i = 0; i < structure.size(); ++i) {
        out.forces[i] = Vec3{-adj[pos[3 * i]], -adj[pos[3 * i + 1]], -adj[pos[3 * i + 2]]};
    }
    return out;
}

struct LossGrad {
    double loss = 0.0;
    double loss_main = 0.0;
    double loss_prior = 0.0;
    std::vector<double> grad;  // aligned with ModelParams::values
};

namespace detail {

// Shared implementation: builds energies + taped forces for the requested
// heads, forms the weighted squared loss, and differentiates it w.r.t. all
// parameters with one numeric backward pass.
inline LossGrad loss_grad_impl(const ModelParams& params, const Structure& structure,
                               const Labels* main_labels, const Labels* prior_labels,
                               const LossWeights& weights, bool want_grad) {
    RadiusGraph graph = build_radius_graph(structure, params.arch.cutoff);
    ForwardBuilder fb(params, structure, graph);
    ad::Tape& t = fb.tape();

    LossGrad out;
    Var total_loss = ad::Tape::kNone;
    auto add_task = [&](Head head, const Labels& lab, double& loss_slot) {
        if (lab.forces.size() != structure.size())
            throw InputError("labels do not match structure size");
        Var e = fb.energy(head);
        std::vector<Var> force_vars = t.backward_taped(e, fb.pos_vars());

        Var de = t.sub(t.constant(lab.energy), e);
        Var task_loss = t.mul(t.constant(weights.energy), t.mul(de, de));
        Var fterm = ad::Tape::kNone;
        for (std::size_t i = 0; i < structure.size(); ++i) {
            const double lf[3] = {lab.forces[i].x, lab.forces[i].y, lab.forces[i].z};
            for (int ax = 0; ax < 3; ++ax) {
                Var g = force_vars[3 * i + ax];
                // predicted force = -dE/dx, so residual = label - (-g) = label + g
                Var resid = (g == ad::Tape::kNone)
                                ? t.constant(lf[ax])
                                : t.add(t.constant(lf[ax]), g);
                Var sq = t.mul(resid, resid);
                fterm = (fterm == ad::Tape::kNone) ? sq : t.add(fterm, sq);
            }
        }
        if (fterm != ad::Tape::kNone)
            task_loss = t.add(task_loss, t.mul(t.constant(weights.force), fterm));
        loss_slot = t.val(task_loss);
        total_loss = (total_loss == ad::Tape::kNone) ? task_loss : t.add(total_loss, task_loss);
    };

    if (prior_labels) add_task(Head::Prior, *prior_labels, out.loss_prior);
    if (main_labels) add_task(Head::Main, *main_labels, out.loss_main);
    if (total_loss == ad::Tape::kNone) throw InputError("loss requires at least one label set");

    out.loss = t.val(total_loss);
    if (want_grad) {
        std::vector<double> adj;
        t.backward_numeric(total_loss, adj);
        out.grad.resize(params.values.size());
        const auto& pv = fb.param_vars();
        for (std::size_t i = 0; i < pv.size(); ++i) out.grad[i] = adj[pv[i]];
    }
    return out;
}

}  // namespace detail

// Gradient of lambda_E ||E - Ehat||^2 + lambda_F sum_i ||F_i - Fhat_i||^2
// w.r.t. the full flat parameter vector. Callers mask partitions via the
// ModelParams spans (freeze = ignore the slice).
inline LossGrad grad_params(const ModelParams& params, const Structure& structure,
                            const Labels& labels, Head head, const LossWeights& weights) {
    return detail::loss_grad_impl(params, structure, head == Head::Main ? &labels : nullptr,
                                  head == Head::Prior ? &labels : nullptr, weights, true);
}

inline LossGrad grad_params_joint(const ModelParams& params, const Structure& structure,
                                  const Labels& main_labels, const Labels& prior_labels,
                                  const LossWeights& weights) {
    return detail::loss_grad_impl(params, structure, &main_labels, &prior_labels, weights, true);
}

inline double loss_eval(const ModelParams& params, const Structure& structure,
                        const Labels& labels, Head head, const LossWeights& weights) {
    return detail::loss_grad_impl(params, structure, head == Head::Main ? &labels : nullptr,
                                  head == Head::Prior ? &labels : nullptr, weights, false)
        .loss;
}

// Mean absolute error over all 3n force components.
inline double force_mae(const std::vector<Vec3>& pred, const std::vector<Vec3>& ref) {
    if (pred.size() != ref.size() || pred.empty()) throw InputError("force_mae: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        s += std::abs(pred[i].x - ref[i].x) + std::abs(pred[i].y - ref[i].y) +
             std::abs(pred[i].z - ref[i].z);
    }
    return s / (3.0 * static_cast<double>(pred.size()));
}

}  // namespace ttr
