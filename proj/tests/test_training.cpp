#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ttr/potentials.hpp"
#include "ttr/rng.hpp"
#include "ttr/training.hpp"

using namespace ttr;

namespace {

// Small bonded clusters labeled by both potentials.
Dataset make_dataset(std::uint64_t seed, int count, std::size_t n_atoms = 4) {
    Rng rng(seed);
    auto pair = default_pair_params();
    ReferenceOracleParams ref;
    Dataset out;
    for (int i = 0; i < count; ++i) {
        Structure s;
        for (std::size_t a = 0; a < n_atoms; ++a) {
            s.species.push_back(a % 2 ? "N" : "C");
            s.positions.push_back({ref.morse_r0 * 0.9 * static_cast<double>(a) +
                                       rng.normal(0.0, 0.15),
                                   rng.normal(0.0, 0.35), rng.normal(0.0, 0.35)});
        }
        s.structure_id = "train" + std::to_string(i);
        s.system_id = "fixture";
        LabeledStructure ls;
        ls.structure = s;
        auto [re, rf] = reference_energy_forces(s, ref);
        ls.reference = Labels{re, rf};
        auto [pe, pf] = lj_energy_forces(s, pair);
        ls.prior = Labels{pe, pf};
        out.push_back(ls);
    }
    return out;
}

ModelParams fixture_model(std::uint64_t seed = 5) {
    ArchConfig arch;
    arch.n_radial_basis = 4;
    arch.hidden_width = 8;
    arch.cutoff = 4.5;
    arch.seed = seed;
    return init_model(arch, {"C", "N"});
}

bool spans_equal(const ModelParams& a, const ModelParams& b, ModelParams::Span s) {
    for (std::size_t i = s.offset; i < s.offset + s.size; ++i)
        if (a.values[i] != b.values[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("zero steps leave parameters unchanged") {
    auto model = fixture_model();
    auto before = model;
    auto data = make_dataset(1, 6);
    TrainConfig cfg;
    cfg.epochs = 0;
    auto log = train(model, data, Task::Main, cfg);
    CHECK(log.empty());
    CHECK(model.values == before.values);
}

TEST_CASE("lr 0 and weight decay 0 is a fixed point") {
    auto model = fixture_model();
    auto before = model;
    auto data = make_dataset(2, 6);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.weight_decay = 0.0;
    cfg.epochs = 2;
    train(model, data, Task::Prior, cfg);
    CHECK(model.values == before.values);
}

TEST_CASE("freeze mask keeps partitions bit-identical") {
    auto model = fixture_model();
    auto before = model;
    auto data = make_dataset(3, 8);
    TrainConfig cfg;
    cfg.learning_rate = 1e-4;
    cfg.epochs = 2;
    cfg.freeze.repr = true;
    train(model, data, Task::Joint, cfg);
    CHECK(spans_equal(model, before, model.repr_span()));
    CHECK_FALSE(spans_equal(model, before, model.main_span()));
    CHECK_FALSE(spans_equal(model, before, model.prior_span()));
}

TEST_CASE("training rejects bad configs and missing labels") {
    auto model = fixture_model();
    auto data = make_dataset(4, 4);
    TrainConfig cfg;
    cfg.freeze = {true, true, true};
    CHECK_THROWS_AS(train(model, data, Task::Main, cfg), InputError);

    TrainConfig cfg2;
    cfg2.batch_size = 0;
    CHECK_THROWS_AS(train(model, data, Task::Main, cfg2), InputError);

    Dataset no_prior = data;
    for (auto& ls : no_prior) ls.prior.reset();
    TrainConfig cfg3;
    CHECK_THROWS_AS(train(model, no_prior, Task::Prior, cfg3), InputError);
    CHECK_THROWS_AS(train(model, no_prior, Task::Joint, cfg3), InputError);
    CHECK_NOTHROW(train(model, no_prior, Task::Main, cfg3));
}

TEST_CASE("loss decreases over first 10 sgd steps on a tiny batch") {
    auto model = fixture_model(7);
    auto data = make_dataset(5, 2);
    model.set_output_bias(Head::Main, mean_per_atom_energy(data, Task::Main));
    TrainConfig cfg;
    cfg.learning_rate = 2e-6;
    cfg.momentum = 0.0;
    cfg.batch_size = 2;
    cfg.steps = 10;
    cfg.seed = 3;
    auto log = train(model, data, Task::Main, cfg);
    REQUIRE(log.size() == 10);
    for (std::size_t i = 1; i < log.size(); ++i)
        CHECK(log[i].loss_main < log[i - 1].loss_main);
}

TEST_CASE("training is deterministic given seed and config") {
    auto data = make_dataset(6, 10);
    TrainConfig cfg;
    cfg.learning_rate = 1e-4;
    cfg.epochs = 2;
    cfg.seed = 11;

    auto m1 = fixture_model(9);
    auto m2 = fixture_model(9);
    auto l1 = train(m1, data, Task::Joint, cfg);
    auto l2 = train(m2, data, Task::Joint, cfg);
    CHECK(m1.values == m2.values);
    REQUIRE(l1.size() == l2.size());
    for (std::size_t i = 0; i < l1.size(); ++i) {
        CHECK(l1[i].loss_main == l2[i].loss_main);
        CHECK(l1[i].loss_prior == l2[i].loss_prior);
    }
}

TEST_CASE("adam optimizer runs and changes parameters") {
    auto model = fixture_model(21);
    auto before = model;
    auto data = make_dataset(8, 6);
    TrainConfig cfg;
    cfg.optimizer = Optimizer::Adam;
    cfg.learning_rate = 1e-4;
    cfg.weight_decay = 0.001;
    cfg.epochs = 1;
    train(model, data, Task::Joint, cfg);
    CHECK_FALSE(spans_equal(model, before, model.repr_span()));
}

TEST_CASE("pretrain-freeze-finetune contract") {
    auto model = fixture_model(13);
    auto data = make_dataset(7, 12);

    TrainConfig cfg_pre;
    cfg_pre.learning_rate = 1e-5;
    cfg_pre.epochs = 3;
    cfg_pre.batch_size = 4;
    cfg_pre.seed = 1;
    TrainConfig cfg_ft = cfg_pre;
    cfg_ft.epochs = 3;

    // initial prior loss for comparison
    double loss_before = 0.0;
    {
        auto probe = model;
        probe.set_output_bias(Head::Prior, mean_per_atom_energy(data, Task::Prior));
        for (const auto& ls : data)
            loss_before += loss_eval(probe, ls.structure, *ls.prior, Head::Prior, LossWeights{});
    }

    auto res = pretrain_freeze_finetune(model, data, data, cfg_pre, cfg_ft);
    REQUIRE_FALSE(res.pretrain_log.empty());
    REQUIRE_FALSE(res.finetune_log.empty());

    double loss_after = 0.0;
    for (const auto& ls : data)
        loss_after += loss_eval(model, ls.structure, *ls.prior, Head::Prior, LossWeights{});
    CHECK(loss_after <= loss_before);

    // phase 2 with zero steps: main head keeps its (bias-initialized) values
    auto model2 = fixture_model(13);
    TrainConfig cfg_ft0 = cfg_ft;
    cfg_ft0.epochs = 0;
    auto res2 = pretrain_freeze_finetune(model2, data, data, cfg_pre, cfg_ft0);
    CHECK(res2.finetune_log.empty());
    auto expect_bias = mean_per_atom_energy(data, Task::Main);
    CHECK(model2.output_bias(Head::Main) == Catch::Approx(expect_bias));
    // and the repr of both runs matches phase-1 output exactly
    CHECK(spans_equal(model, model2, model.repr_span()));
}

TEST_CASE("fine_tune determinism and nesting") {
    auto model = fixture_model(15);
    auto data = make_dataset(9, 10);
    auto eval_set = make_dataset(10, 5);
    TrainConfig cfg;
    cfg.learning_rate = 1e-5;
    cfg.epochs = 2;
    cfg.seed = 21;
    cfg.freeze.repr = true;
    cfg.freeze.prior_head = true;

    auto c1 = fine_tune(model, data, cfg, {1.0}, eval_set);
    auto c2 = fine_tune(model, data, cfg, {1.0}, eval_set);
    REQUIRE(c1.size() == 1);
    CHECK(c1[0].force_mae == c2[0].force_mae);

    // fraction 1.0 reduces to plain train on the whole set
    auto copy = model;
    train(copy, [&] {
        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(cfg.seed ^ 0x94D049BB133111EBull);
        rng.shuffle(order);
        Dataset d;
        for (auto i : order) d.push_back(data[i]);
        return d;
    }(), Task::Main, cfg);
    CHECK(dataset_force_mae(copy, eval_set) == Catch::Approx(c1[0].force_mae).margin(1e-12));

    CHECK_THROWS_AS(fine_tune(model, data, cfg, {1.5}, eval_set), InputError);
}
