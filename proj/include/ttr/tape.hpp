#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ttr/core.hpp"

namespace ttr::ad {

// Scalar reverse-mode tape. backward_taped() emits its adjoint computation as
// new tape nodes, so gradients are themselves differentiable (needed to train
// on force targets, which are already a gradient of the energy).
class Tape {
public:
    using Var = std::int32_t;
    static constexpr Var kNone = -1;

    enum class Op : std::uint8_t {
        Leaf, Add, Sub, Mul, Div, Neg, Exp, Log, Sqrt, Sigmoid, Softplus, PowI
    };

    struct Node {
        double val;
        Var a, b;
        Op op;
        std::int32_t ipow;
    };

    void clear() { nodes_.clear(); }
    void reserve(std::size_t n) { nodes_.reserve(n); }
    std::size_t size() const { return nodes_.size(); }
    double val(Var v) const { return nodes_[static_cast<std::size_t>(v)].val; }
    void set_leaf(Var v, double x) { nodes_[static_cast<std::size_t>(v)].val = x; }

    Var leaf(double v) { return push({v, kNone, kNone, Op::Leaf, 0}); }
    Var constant(double v) { return push({v, kNone, kNone, Op::Leaf, 0}); }

    Var add(Var x, Var y) { return push({val(x) + val(y), x, y, Op::Add, 0}); }
    Var sub(Var x, Var y) { return push({val(x) - val(y), x, y, Op::Sub, 0}); }
    Var mul(Var x, Var y) { return push({val(x) * val(y), x, y, Op::Mul, 0}); }
    Var div(Var x, Var y) { return push({val(x) / val(y), x, y, Op::Div, 0}); }
    Var neg(Var x) { return push({-val(x), x, kNone, Op::Neg, 0}); }
    Var exp(Var x) { return push({std::exp(val(x)), x, kNone, Op::Exp, 0}); }
    Var log(Var x) { return push({std::log(val(x)), x, kNone, Op::Log, 0}); }
    Var sqrt(Var x) { return push({std::sqrt(val(x)), x, kNone, Op::Sqrt, 0}); }
    Var sigmoid(Var x) { return push({stable_sigmoid(val(x)), x, kNone, Op::Sigmoid, 0}); }
    Var softplus(Var x) { return push({stable_softplus(val(x)), x, kNone, Op::Softplus, 0}); }
    Var powi(Var x, int n) {
        return push({std::pow(val(x), n), x, kNone, Op::PowI, n});
    }

    Var square(Var x) { return mul(x, x); }

    // Adjoints of every node up to and including `root`, computed numerically
    // (no new nodes). adj is sized to the current tape.
    void backward_numeric(Var root, std::vector<double>& adj) const {
        adj.assign(nodes_.size(), 0.0);
        adj[static_cast<std::size_t>(root)] = 1.0;
        for (std::size_t k = static_cast<std::size_t>(root) + 1; k-- > 0;) {
            double g = adj[k];
            if (g == 0.0) continue;
            const Node& nd = nodes_[k];
            switch (nd.op) {
                case Op::Leaf: break;
                case Op::Add:
                    adj[nd.a] += g;
                    adj[nd.b] += g;
                    break;
                case Op::Sub:
                    adj[nd.a] += g;
                    adj[nd.b] -= g;
                    break;
                case Op::Mul:
                    adj[nd.a] += g * nodes_[nd.b].val;
                    adj[nd.b] += g * nodes_[nd.a].val;
                    break;
                case Op::Div:
                    adj[nd.a] += g / nodes_[nd.b].val;
                    adj[nd.b] -= g * nd.val / nodes_[nd.b].val;
                    break;
                case Op::Neg: adj[nd.a] -= g; break;
                case Op::Exp: adj[nd.a] += g * nd.val; break;
                case Op::Log: adj[nd.a] += g / nodes_[nd.a].val; break;
                case Op::Sqrt: adj[nd.a] += g * 0.5 / nd.val; break;
                case Op::Sigmoid: adj[nd.a] += g * nd.val * (1.0 - nd.val); break;
                case Op::Softplus: adj[nd.a] += g * stable_sigmoid(nodes_[nd.a].val); break;
                case Op::PowI:
                    adj[nd.a] += g * nd.ipow * std::pow(nodes_[nd.a].val, nd.ipow - 1);
                    break;
            }
        }
    }

    // Adjoints of `wrt` as new tape nodes (kNone entries mean exactly zero).
    // Only nodes present at call time participate; emitted nodes extend the tape.
    std::vector<Var> backward_taped(Var root, const std::vector<Var>& wrt) {
        const std::size_t n0 = nodes_.size();
        std::vector<Var> grad(n0, kNone);
        grad[static_cast<std::size_t>(root)] = constant(1.0);

        auto acc = [&](Var target, Var g) {
            if (target == kNone) return;
            std::size_t t = static_cast<std::size_t>(target);
            grad[t] = (grad[t] == kNone) ? g : add(grad[t], g);
        };

        for (std::size_t k = static_cast<std::size_t>(root) + 1; k-- > 0;) {
            Var g = grad[k];
            if (g == kNone) continue;
            const Node nd = nodes_[k];  // copy: vector may reallocate below
            Var self = static_cast<Var>(k);
            switch (nd.op) {
                case Op::Leaf: break;
                case Op::Add:
                    acc(nd.a, g);
                    acc(nd.b, g);
                    break;
                case Op::Sub:
                    acc(nd.a, g);
                    acc(nd.b, neg(g));
                    break;
                case Op::Mul:
                    acc(nd.a, mul(g, nd.b));
                    acc(nd.b, mul(g, nd.a));
                    break;
                case Op::Div:
                    acc(nd.a, div(g, nd.b));
                    acc(nd.b, neg(mul(g, div(self, nd.b))));
                    break;
                case Op::Neg: acc(nd.a, neg(g)); break;
                case Op::Exp: acc(nd.a, mul(g, self)); break;
                case Op::Log: acc(nd.a, div(g, nd.a)); break;
                case Op::Sqrt: acc(nd.a, div(mul(g, constant(0.5)), self)); break;
                case Op::Sigmoid: {
                    Var one = constant(1.0);
                    acc(nd.a, mul(g, mul(self, sub(one, self))));
                    break;
                }
                case Op::Softplus: acc(nd.a, mul(g, sigmoid(nd.a))); break;
                case Op::PowI:
                    acc(nd.a, mul(g, mul(constant(static_cast<double>(nd.ipow)),
                                         powi(nd.a, nd.ipow - 1))));
                    break;
            }
        }

        std::vector<Var> out(wrt.size(), kNone);
        for (std::size_t i = 0; i < wrt.size(); ++i)
            if (static_cast<std::size_t>(wrt[i]) < n0) out[i] = grad[wrt[i]];
        return out;
    }

private:
    std::vector<Node> nodes_;

    Var push(Node n) {
        nodes_.push_back(n);
        return static_cast<Var>(nodes_.size() - 1);
    }

    static double stable_sigmoid(double x) {
        if (x >= 0.0) {
            double e = std::exp(-x);
            return 1.0 / (1.0 + e);
        }
        double e = std::exp(x);
        return e / (1.0 + e);
    }

    static double stable_softplus(double x) {
        // max(x,0) + log1p(exp(-|x|)): exact rearrangement, no cutoff.
        return (x >= 0.0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }
};

}  // namespace ttr::ad
