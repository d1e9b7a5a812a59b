#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "ttr/model.hpp"
#include "ttr/rng.hpp"

using namespace ttr;

namespace {

Structure random_structure(Rng& rng, std::size_t n, double spread = 5.0) {
    Structure s;
    const char* species[] = {"C", "N", "O"};
    for (std::size_t i = 0; i < n; ++i) {
        s.species.push_back(species[rng.index(3)]);
        for (;;) {
            Vec3 p{rng.uniform(0.0, spread), rng.uniform(0.0, spread), rng.uniform(0.0, spread)};
            bool ok = true;
            for (const auto& q : s.positions)
                if (distance(p, q) < 1.5) ok = false;
            if (ok) {
                s.positions.push_back(p);
                break;
            }
        }
    }
    s.structure_id = "m";
    s.system_id = "m";
    return s;
}

ModelParams make_model(std::uint64_t seed = 0) {
    ArchConfig arch;
    arch.n_radial_basis = 4;
    arch.hidden_width = 8;
    arch.cutoff = 4.0;
    arch.seed = seed;
    return init_model(arch, {"C", "N", "O"});
}

Vec3 rotate_z(const Vec3& v, double ang) {
    return {v.x * std::cos(ang) - v.y * std::sin(ang),
            v.x * std::sin(ang) + v.y * std::cos(ang), v.z};
}

}  // namespace

TEST_CASE("envelope boundary conditions") {
    CHECK(envelope(0.0, 5.0) == Catch::Approx(1.0));
    CHECK(envelope(5.0, 5.0) == Catch::Approx(0.0).margin(1e-15));
    CHECK(envelope(6.0, 5.0) == 0.0);
    CHECK(envelope_derivative(5.0, 5.0) == Catch::Approx(0.0).margin(1e-12));

    // analytic derivative matches finite differences near the cutoff
    for (double r : {0.5, 2.0, 4.0, 4.999}) {
        double h = 1e-7;
        double fd = (envelope(r + h, 5.0) - envelope(r - h, 5.0)) / (2 * h);
        CHECK(envelope_derivative(r, 5.0) == Catch::Approx(fd).margin(1e-6));
    }
    CHECK_THROWS_AS(envelope(1.0, 0.0), InputError);
}

TEST_CASE("featurize isolated atom and descriptors") {
    auto params = make_model();
    Structure s;
    s.species = {"N"};
    s.positions = {{0, 0, 0}};
    s.structure_id = "iso";
    auto g = build_radius_graph(s, params.arch.cutoff);
    auto desc = featurize(params, s, g);
    REQUIRE(desc.size() == 1);
    std::size_t e = params.embed_dim();
    int zi = params.species_index("N");
    for (std::size_t c = 0; c < e; ++c)
        CHECK(desc[0][c] == params.values[static_cast<std::size_t>(zi) * e + c]);
    for (std::size_t b = e; b < desc[0].size(); ++b) CHECK(desc[0][b] == 0.0);
}

TEST_CASE("featurize rotation invariance") {
    auto params = make_model(3);
    Rng rng(17);
    Structure s = random_structure(rng, 5);
    Structure rot = s;
    for (auto& p : rot.positions) p = rotate_z(p, 1.1);

    auto d1 = featurize(params, s, build_radius_graph(s, params.arch.cutoff));
    auto d2 = featurize(params, rot, build_radius_graph(rot, params.arch.cutoff));
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t c = 0; c < d1[i].size(); ++c)
            CHECK(d1[i][c] == Catch::Approx(d2[i][c]).margin(1e-10));
}

TEST_CASE("featurize dimer matches hand-evaluated basis") {
    auto params = make_model();
    double r = 2.7;
    Structure s;
    s.species = {"C", "C"};
    s.positions = {{0, 0, 0}, {r, 0, 0}};
    s.structure_id = "d";
    auto g = build_radius_graph(s, params.arch.cutoff);
    auto desc = featurize(params, s, g);

    std::size_t k = params.arch.n_radial_basis;
    double rc = params.arch.cutoff;
    double spacing = rc / static_cast<double>(k - 1);
    double gamma = 1.0 / (2.0 * spacing * spacing);
    double env = std::pow(1.0 - (r / rc) * (r / rc), 2);
    for (std::size_t b = 0; b < k; ++b) {
        double mu = b * spacing;
        double expect = env * std::exp(-gamma * (r - mu) * (r - mu));
        CHECK(desc[0][params.embed_dim() + b] == Catch::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("featurize size mismatch error") {
    auto params = make_model();
    Rng rng(1);
    Structure a = random_structure(rng, 3);
    Structure b = random_structure(rng, 4);
    auto g = build_radius_graph(b, params.arch.cutoff);
    CHECK_THROWS_AS(featurize(params, a, g), InputError);
}

TEST_CASE("forward translation invariance") {
    auto params = make_model(1);
    Rng rng(19);
    Structure s = random_structure(rng, 6);
    auto out1 = forward_energy_forces(params, s, Head::Main);

    Structure t = s;
    for (auto& p : t.positions) p += Vec3{3.7, -1.2, 9.0};
    auto out2 = forward_energy_forces(params, t, Head::Main);
    CHECK(out1.energy == Catch::Approx(out2.energy).margin(1e-8));
    for (std::size_t i = 0; i < s.size(); ++i)
        CHECK((out1.forces[i] - out2.forces[i]).norm() < 1e-9);
}

TEST_CASE("forward rotation: invariant energy, equivariant forces") {
    auto params = make_model(2);
    Rng rng(23);
    Structure s = random_structure(rng, 6);
    Structure rot = s;
    double ang = 0.7;
    for (auto& p : rot.positions) p = rotate_z(p, ang);

    auto o1 = forward_energy_forces(params, s, Head::Prior);
    auto o2 = forward_energy_forces(params, rot, Head::Prior);
    CHECK(std::abs(o1.energy - o2.energy) < 1e-8);
    for (std::size_t i = 0; i < s.size(); ++i)
        CHECK((rotate_z(o1.forces[i], ang) - o2.forces[i]).norm() < 1e-7);
}

TEST_CASE("forward permutation invariance") {
    auto params = make_model(4);
    Rng rng(29);
    Structure s = random_structure(rng, 5);
    s.species = {"C", "C", "O", "C", "C"};
    Structure p = s;
    std::swap(p.positions[0], p.positions[3]);  // same species, swapped labels
    auto o1 = forward_energy_forces(params, s, Head::Main);
    auto o2 = forward_energy_forces(params, p, Head::Main);
    CHECK(o1.energy == Catch::Approx(o2.energy).margin(1e-10));
}

TEST_CASE("forces are the exact gradient of the energy") {
    Rng rng(31);
    for (int trial = 0; trial < 8; ++trial) {
        auto params = make_model(100 + trial);
        Head head = trial % 2 ? Head::Main : Head::Prior;
        Structure s = random_structure(rng, 4 + rng.index(3));
        auto out = forward_energy_forces(params, s, head);

        double h = 1e-5;
        double max_err = 0.0, max_f = 0.0;
        Structure w = s;
        for (std::size_t i = 0; i < s.size(); ++i) {
            double* comps[3] = {&w.positions[i].x, &w.positions[i].y, &w.positions[i].z};
            const double want[3] = {out.forces[i].x, out.forces[i].y, out.forces[i].z};
            for (int ax = 0; ax < 3; ++ax) {
                double orig = *comps[ax];
                *comps[ax] = orig + h;
                double ep = forward_energy_forces(params, w, head).energy;
                *comps[ax] = orig - h;
                double em = forward_energy_forces(params, w, head).energy;
                *comps[ax] = orig;
                double fd = -(ep - em) / (2 * h);
                max_err = std::max(max_err, std::abs(fd - want[ax]));
                max_f = std::max(max_f, std::abs(fd));
            }
        }
        CHECK(max_err / std::max(max_f, 1e-6) < 1e-5);
    }
}

TEST_CASE("closed-loop line integral of forces vanishes") {
    auto params = make_model(7);
    Rng rng(37);
    Structure s = random_structure(rng, 4);
    // drag atom 0 around a small square loop, trapezoid-integrate F.dx
    const double step = 0.01;
    const int per_side = 20;
    Vec3 dirs[4] = {{1, 0, 0}, {0, 1, 0}, {-1, 0, 0}, {0, -1, 0}};
    double work = 0.0;
    double scale = 0.0;
    Structure w = s;
    auto force0 = [&](const Structure& cfg) {
        return forward_energy_forces(params, cfg, Head::Main).forces[0];
    };
    Vec3 f_prev = force0(w);
    for (const auto& d : dirs) {
        for (int k = 0; k < per_side; ++k) {
            w.positions[0] += step * d;
            Vec3 f_now = force0(w);
            double df = 0.5 * (f_prev + f_now).dot(d) * step;
            work += df;
            scale += std::abs(df);
            f_prev = f_now;
        }
    }
    CHECK(std::abs(work) < 1e-4 * std::max(scale, 1e-8));
}

TEST_CASE("zero readout weights give constant energy and zero forces") {
    auto params = make_model(11);
    for (auto span : {params.main_span(), params.prior_span()})
        for (std::size_t i = 0; i < span.size; ++i) params.values[span.offset + i] = 0.0;
    params.set_output_bias(Head::Main, -1.25);

    Rng rng(41);
    Structure s = random_structure(rng, 5);
    auto out = forward_energy_forces(params, s, Head::Main);
    CHECK(out.energy == Catch::Approx(-1.25 * 5.0));
    for (const auto& f : out.forces) CHECK(f.norm() == 0.0);
}

TEST_CASE("unknown species raises input error") {
    auto params = make_model();
    Structure s;
    s.species = {"Zz"};
    s.positions = {{0, 0, 0}};
    s.structure_id = "u";
    CHECK_THROWS_AS(forward_energy_forces(params, s, Head::Main), InputError);
}

TEST_CASE("parameter partition is a bijection") {
    auto params = make_model();
    auto r = params.repr_span();
    auto m = params.main_span();
    auto p = params.prior_span();
    CHECK(r.offset == 0);
    CHECK(m.offset == r.size);
    CHECK(p.offset == m.offset + m.size);
    CHECK(p.offset + p.size == params.values.size());
    CHECK(params.values.size() == params.total_param_count());
}

TEST_CASE("perfect predictions give zero gradient") {
    auto params = make_model(13);
    Rng rng(43);
    Structure s = random_structure(rng, 4);
    auto out = forward_energy_forces(params, s, Head::Main);
    Labels lab{out.energy, out.forces};
    auto lg = grad_params(params, s, lab, Head::Main, LossWeights{});
    CHECK(lg.loss < 1e-18);
    for (double g : lg.grad) CHECK(std::abs(g) < 1e-9);
}

TEST_CASE("parameter gradient matches finite differences") {
    auto params = make_model(17);
    Rng rng(47);
    Structure s = random_structure(rng, 4);
    Labels lab;
    lab.energy = -1.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        lab.forces.push_back({rng.normal(0, 0.3), rng.normal(0, 0.3), rng.normal(0, 0.3)});

    LossWeights w;
    auto lg = grad_params(params, s, lab, Head::Main, w);

    ModelParams pert = params;
    double h = 1e-6;
    for (int probe = 0; probe < 20; ++probe) {
        std::size_t idx = rng.index(params.values.size());
        double orig = pert.values[idx];
        pert.values[idx] = orig + h;
        double lp = loss_eval(pert, s, lab, Head::Main, w);
        pert.values[idx] = orig - h;
        double lm = loss_eval(pert, s, lab, Head::Main, w);
        pert.values[idx] = orig;
        double fd = (lp - lm) / (2 * h);
        double scale = std::max({std::abs(fd), std::abs(lg.grad[idx]), 1e-4});
        CHECK(std::abs(lg.grad[idx] - fd) / scale < 1e-4);
    }
}

TEST_CASE("prior-head gradient leaves main head untouched") {
    auto params = make_model(19);
    Rng rng(53);
    Structure s = random_structure(rng, 4);
    Labels lab;
    lab.energy = 0.5;
    lab.forces.assign(s.size(), Vec3{0.1, 0, 0});
    auto lg = grad_params(params, s, lab, Head::Prior, LossWeights{});

    auto m = params.main_span();
    for (std::size_t i = 0; i < m.size; ++i) CHECK(lg.grad[m.offset + i] == 0.0);
    // representation must receive gradient (prior head depends on it)
    auto r = params.repr_span();
    double rsum = 0.0;
    for (std::size_t i = 0; i < r.size; ++i) rsum += std::abs(lg.grad[r.offset + i]);
    CHECK(rsum > 0.0);
}

TEST_CASE("joint loss equals sum of task losses") {
    auto params = make_model(23);
    Rng rng(59);
    Structure s = random_structure(rng, 5);
    Labels main_lab{-0.4, std::vector<Vec3>(s.size(), Vec3{0.05, 0, 0})};
    Labels prior_lab{-0.2, std::vector<Vec3>(s.size(), Vec3{0, 0.02, 0})};
    LossWeights w;
    auto joint = grad_params_joint(params, s, main_lab, prior_lab, w);
    double lm = loss_eval(params, s, main_lab, Head::Main, w);
    double lp = loss_eval(params, s, prior_lab, Head::Prior, w);
    CHECK(joint.loss == Catch::Approx(lm + lp).margin(1e-10));
    CHECK(joint.loss_main == Catch::Approx(lm).margin(1e-10));
    CHECK(joint.loss_prior == Catch::Approx(lp).margin(1e-10));
}
