#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "ttr/config.hpp"
#include "ttr/extxyz.hpp"
#include "ttr/rng.hpp"
#include "ttr/serialize.hpp"

using namespace ttr;

namespace {

std::filesystem::path tmpdir() {
    auto p = std::filesystem::temp_directory_path() / "ttr_io_test";
    std::filesystem::create_directories(p);
    return p;
}

LabeledStructure sample_structure(Rng& rng, int id, bool ref, bool prior) {
    LabeledStructure ls;
    std::size_t n = 2 + rng.index(4);
    const char* sp[] = {"C", "N", "O", "H"};
    for (std::size_t i = 0; i < n; ++i) {
        ls.structure.species.push_back(sp[rng.index(4)]);
        ls.structure.positions.push_back(
            {rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(-8, 8)});
    }
    ls.structure.structure_id = "s" + std::to_string(id);
    ls.structure.system_id = "sys" + std::to_string(id % 3);
    if (ref) {
        Labels lab{rng.uniform(-5, 0), {}};
        for (std::size_t i = 0; i < n; ++i)
            lab.forces.push_back({rng.normal(), rng.normal(), rng.normal()});
        ls.reference = lab;
    }
    if (prior) {
        Labels lab{rng.uniform(-3, 0), {}};
        for (std::size_t i = 0; i < n; ++i)
            lab.forces.push_back({rng.normal(), rng.normal(), rng.normal()});
        ls.prior = lab;
    }
    return ls;
}

bool equal_labels(const std::optional<Labels>& a, const std::optional<Labels>& b) {
    if (a.has_value() != b.has_value()) return false;
    if (!a) return true;
    if (a->energy != b->energy || a->forces.size() != b->forces.size()) return false;
    for (std::size_t i = 0; i < a->forces.size(); ++i)
        if ((a->forces[i] - b->forces[i]).norm() != 0.0) return false;
    return true;
}

}  // namespace

TEST_CASE("extxyz round trip is lossless") {
    Rng rng(101);
    Dataset data;
    data.push_back(sample_structure(rng, 0, true, true));
    data.push_back(sample_structure(rng, 1, true, false));
    data.push_back(sample_structure(rng, 2, false, true));
    data.push_back(sample_structure(rng, 3, false, false));

    auto path = (tmpdir() / "roundtrip.extxyz").string();
    write_extxyz(data, path);
    auto back = parse_extxyz(path);
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(back[i].structure.species == data[i].structure.species);
        CHECK(back[i].structure.structure_id == data[i].structure.structure_id);
        CHECK(back[i].structure.system_id == data[i].structure.system_id);
        for (std::size_t a = 0; a < data[i].structure.size(); ++a)
            CHECK((back[i].structure.positions[a] - data[i].structure.positions[a]).norm() ==
                  0.0);
        CHECK(equal_labels(back[i].reference, data[i].reference));
        CHECK(equal_labels(back[i].prior, data[i].prior));
    }
}

TEST_CASE("extxyz corpus round trip stable") {
    Rng rng(202);
    Dataset data;
    for (int i = 0; i < 300; ++i) data.push_back(sample_structure(rng, i, true, i % 2 == 0));

    std::ostringstream first;
    write_extxyz_stream(first, data);
    std::istringstream in(first.str());
    auto back = parse_extxyz_stream(in, "mem");
    std::ostringstream second;
    write_extxyz_stream(second, back);
    CHECK(first.str() == second.str());
}

TEST_CASE("extxyz parse errors carry line numbers") {
    std::istringstream bad1("2\nstructure_id=a system_id=a label_source=none\nC 0 0 0\n");
    try {
        parse_extxyz_stream(bad1, "mem");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == 4);
    }

    std::istringstream bad2("1\nstructure_id=a label_source=none\nC 0 zero 0\n");
    CHECK_THROWS_AS(parse_extxyz_stream(bad2, "mem"), ParseError);

    std::istringstream bad3("x\n");
    CHECK_THROWS_AS(parse_extxyz_stream(bad3, "mem"), ParseError);

    std::istringstream bad4("1\nstructure_id=a label_source=reference energy=1\nC 0 0 0\n");
    CHECK_THROWS_AS(parse_extxyz_stream(bad4, "mem"), ParseError);
}

TEST_CASE("config parsing") {
    std::istringstream in(
        "schema_version = 1\n"
        "# comment\n"
        "[train]\n"
        "learning_rate = 1e-3\n"
        "steps = 250\n"
        "fractions = 0.05, 0.25, 1.0\n"
        "[generate]\n"
        "templates = chain:6:C | ring:6:C\n");
    auto cfg = Config::from_stream(in, "mem");
    CHECK(cfg.get_double("train.learning_rate", 0) == Catch::Approx(1e-3));
    CHECK(cfg.get_int("train.steps", 0) == 250);
    CHECK(cfg.get_doubles("train.fractions") == std::vector<double>{0.05, 0.25, 1.0});
    auto templates = cfg.get_list("generate.templates");
    REQUIRE(templates.size() == 2);
    CHECK(templates[0] == "chain:6:C");
    CHECK(templates[1] == "ring:6:C");
    CHECK(cfg.get_string("missing.key", "dflt") == "dflt");
    CHECK_THROWS_AS(cfg.require_string("missing.key"), InputError);

    std::istringstream noversion("[a]\nb = 1\n");
    CHECK_THROWS_AS(Config::from_stream(noversion, "mem"), InputError);

    std::istringstream badline("schema_version = 1\njust a line\n");
    CHECK_THROWS_AS(Config::from_stream(badline, "mem"), ParseError);
}

TEST_CASE("profile round trip") {
    Rng rng(303);
    Dataset data;
    for (int i = 0; i < 20; ++i) data.push_back(sample_structure(rng, i, true, false));
    auto p = build_training_profile(data, 3.0);
    auto path = (tmpdir() / "profile.txt").string();
    save_profile(p, path);
    auto q = load_profile(path);

    CHECK(q.train_cutoff == p.train_cutoff);
    CHECK(q.mean_spectrum == p.mean_spectrum);
    CHECK(q.spectral_distance_mean == p.spectral_distance_mean);
    CHECK(q.spectral_distance_std == p.spectral_distance_std);
    CHECK(q.force_norm_mean == p.force_norm_mean);
    CHECK(q.force_norm_std == p.force_norm_std);
    CHECK(q.size_mean == p.size_mean);
    CHECK(q.size_std == p.size_std);
    CHECK(q.seen_elements == p.seen_elements);
    CHECK(q.composition_mean == p.composition_mean);
    CHECK(q.composition_std == p.composition_std);
}

TEST_CASE("checkpoint round trip") {
    ArchConfig arch;
    arch.n_radial_basis = 5;
    arch.hidden_width = 12;
    arch.cutoff = 3.7;
    arch.seed = 99;
    auto params = init_model(arch, {"C", "H"});
    auto path = (tmpdir() / "model.ckpt").string();
    save_checkpoint(params, path);
    auto back = load_checkpoint(path);

    CHECK(back.arch.n_radial_basis == params.arch.n_radial_basis);
    CHECK(back.arch.hidden_width == params.arch.hidden_width);
    CHECK(back.arch.cutoff == params.arch.cutoff);
    CHECK(back.species == params.species);
    REQUIRE(back.values.size() == params.values.size());
    for (std::size_t i = 0; i < params.values.size(); ++i)
        CHECK(back.values[i] == params.values[i]);  // bit-exact via %.17g
}
