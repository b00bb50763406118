#include <cmath>
#include <vector>

#include "cspcl/alignment.hpp"
#include "cspcl/errors.hpp"
#include "cspcl/layered.hpp"
#include "cspcl/rng.hpp"
#include "cspcl/sim.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cspcl;

TEST_CASE("group_queries: shapes, row mapping and policies") {
    Rng rng(11);
    EmbeddingMatrix q = oracle::random_unit_matrix(rng, 30, 4);

    GroupedQueries g = group_queries(q, 5);
    CHECK(g.k == 5);
    CHECK(g.n == 6);
    CHECK(g.dropped_rows == 0);
    // Row r belongs to class r / n, in the original order and bitwise intact.
    for (std::size_t cls = 0; cls < 5; ++cls)
        for (std::size_t j = 0; j < 6; ++j) {
            auto got = g.query(cls, j);
            auto want = q.row(cls * 6 + j);
            for (std::size_t d = 0; d < 4; ++d) CHECK(got[d] == want[d]);
        }

    GroupedQueries one_each = group_queries(q, 30);
    CHECK(one_each.k == 30);
    CHECK(one_each.n == 1);

    EmbeddingMatrix q31 = oracle::random_unit_matrix(rng, 31, 4);
    CHECK_THROWS_AS(group_queries(q31, 5, RemainderPolicy::Strict), IndivisibleCount);
    GroupedQueries dropped = group_queries(q31, 5, RemainderPolicy::Drop);
    CHECK(dropped.k == 5);
    CHECK(dropped.n == 6);
    CHECK(dropped.dropped_rows == 1);
    CHECK(dropped.queries.rows == 30);
    for (std::size_t r = 0; r < 30; ++r)
        for (std::size_t d = 0; d < 4; ++d)
            CHECK(dropped.queries.at(r, d) == q31.at(r, d));

    EmbeddingMatrix q3 = oracle::random_unit_matrix(rng, 3, 4);
    CHECK_THROWS_AS(group_queries(q3, 5), TooFewQueries);
    CHECK_THROWS_AS(group_queries(q3, 0), DomainError);
}

TEST_CASE("tile_prototypes: every class row repeated n times, bitwise") {
    Rng rng(12);
    EmbeddingMatrix w = oracle::random_unit_matrix(rng, 3, 5);
    PrototypeBank bank = tile_prototypes(w, 4);
    CHECK(bank.k() == 3);
    CHECK(bank.n == 4);
    CHECK(bank.tiled.rows == 12);
    for (std::size_t cls = 0; cls < 3; ++cls)
        for (std::size_t i = 0; i < 4; ++i) {
            auto got = bank.prototype(cls, i);
            auto want = w.row(cls);
            for (std::size_t d = 0; d < 5; ++d) CHECK(got[d] == want[d]);
        }
    // Tiling is a pure function of its inputs.
    PrototypeBank again = tile_prototypes(w, 4);
    CHECK(again.tiled.data == bank.tiled.data);

    CHECK_THROWS_AS(tile_prototypes(w, 0), DomainError);
    CHECK_THROWS_AS(tile_prototypes(EmbeddingMatrix(0, 5), 2), DegenerateGroup);
}

TEST_CASE("validate_target_set: sorted unique in-range indices") {
    CHECK_NOTHROW(validate_target_set({0, 2, 5}, 6));
    CHECK_NOTHROW(validate_target_set({}, 6));
    CHECK_NOTHROW(validate_target_set({0, 1, 2, 3, 4, 5}, 6));
    CHECK_THROWS_AS(validate_target_set({5, 2}, 6), DomainError);
    CHECK_THROWS_AS(validate_target_set({1, 1}, 6), DomainError);
    CHECK_THROWS_AS(validate_target_set({6}, 6), DomainError);
}

TEST_CASE("layered_loss: additivity over identical layers") {
    Rng rng(21);
    EmbeddingMatrix w = oracle::random_unit_matrix(rng, 4, 8);
    EmbeddingMatrix q = oracle::random_unit_matrix(rng, 12, 8);
    PrototypeBank protos = tile_prototypes(w, 3);
    CspConfig cfg;

    GroupedQueries single = group_queries(q, 4);
    double one = csp_loss(protos, single, cfg).total;

    for (std::size_t L : {std::size_t{3}, std::size_t{6}}) {
        LayerBank bank;
        for (std::size_t l = 0; l < L; ++l) bank.layers.push_back(q);
        for (std::size_t l = 0; l < L; ++l) bank.target_set.push_back(l);
        LayeredResult res = layered_loss(bank, protos, LossKind::Csp, cfg);
        CHECK(std::abs(res.total - static_cast<double>(L) * one) <= 1e-12);
        CHECK(res.per_layer.size() == L);
        // Identical inputs give identical per-layer evaluations.
        for (std::size_t l = 0; l < L; ++l) CHECK(res.per_layer[l].total == one);
    }
}

TEST_CASE("layered_loss: target_set selects contributing layers") {
    Rng rng(22);
    EmbeddingMatrix w = oracle::random_unit_matrix(rng, 3, 6);
    PrototypeBank protos = tile_prototypes(w, 2);
    CspConfig cfg;

    LayerBank bank;
    for (int l = 0; l < 4; ++l)
        bank.layers.push_back(oracle::random_unit_matrix(rng, 6, 6));

    SUBCASE("empty target set: zero loss, zero gradients") {
        bank.target_set = {};
        LayeredResult res = layered_loss(bank, protos, LossKind::Csp, cfg);
        CHECK(res.total == 0.0);
        CHECK(res.total_ita == 0.0);
        CHECK(res.total_iar == 0.0);
        for (const LossReport& rep : res.per_layer) {
            CHECK(rep.total == 0.0);
            for (double g : rep.grad_queries.data) CHECK(g == 0.0);
        }
    }

    SUBCASE("single layer: total equals that layer's standalone loss") {
        bank.target_set = {0};
        LayeredResult res = layered_loss(bank, protos, LossKind::Csp, cfg);
        GroupedQueries layer0 = group_queries(bank.layers[0], 3);
        LossReport standalone = csp_loss(protos, layer0, cfg);
        CHECK(res.total == standalone.total);
        CHECK(res.per_layer[0].grad_queries.data == standalone.grad_queries.data);
        for (std::size_t l = 1; l < 4; ++l) CHECK(res.per_layer[l].total == 0.0);
    }

    SUBCASE("subset: total is the sum over exactly the targeted layers") {
        bank.target_set = {1, 3};
        LayeredResult res = layered_loss(bank, protos, LossKind::Csp, cfg);
        double sum = 0.0;
        for (std::size_t l : {std::size_t{1}, std::size_t{3}})
            sum += csp_loss(protos, group_queries(bank.layers[l], 3), cfg).total;
        CHECK(std::abs(res.total - sum) <= 1e-12);
        CHECK(res.per_layer[0].total == 0.0);
        CHECK(res.per_layer[2].total == 0.0);
    }

    SUBCASE("out-of-range target set is rejected") {
        bank.target_set = {4};
        CHECK_THROWS_AS(layered_loss(bank, protos, LossKind::Csp, cfg), DomainError);
    }
}

TEST_CASE("layered_loss: component totals track the per-layer reports") {
    Rng rng(23);
    EmbeddingMatrix w = oracle::random_unit_matrix(rng, 3, 6);
    PrototypeBank protos = tile_prototypes(w, 2);
    CspConfig cfg;
    LayerBank bank;
    for (int l = 0; l < 3; ++l)
        bank.layers.push_back(oracle::random_unit_matrix(rng, 6, 6));
    bank.target_set = {0, 1, 2};
    LayeredResult res = layered_loss(bank, protos, LossKind::Csp, cfg);
    double ita = 0.0, iar = 0.0;
    for (const LossReport& rep : res.per_layer) {
        ita += rep.ita_value;
        iar += rep.iar_value;
    }
    CHECK(res.total_ita == doctest::Approx(ita).epsilon(1e-15));
    CHECK(res.total_iar == doctest::Approx(iar).epsilon(1e-15));
}

TEST_CASE("loss kind names round-trip") {
    for (LossKind kind : {LossKind::Csp, LossKind::ItaOnly, LossKind::IarOnly, LossKind::NPair,
                          LossKind::InfoNce})
        CHECK(parse_loss_kind(loss_kind_name(kind)) == kind);
    CHECK_THROWS_AS(parse_loss_kind("bogus"), ConfigError);
}

TEST_CASE("ita-only and iar-only are the csp loss with one side muted") {
    GradCheckInstance inst = make_gradcheck_instance(88, 1);
    CspConfig cfg = inst.cfg;
    LossReport ita_only = evaluate_loss(LossKind::ItaOnly, inst.protos, inst.queries, cfg);
    LossReport iar_only = evaluate_loss(LossKind::IarOnly, inst.protos, inst.queries, cfg);
    LossReport ita = ita_loss(inst.protos, inst.queries, cfg);
    LossReport iar = iar_loss(inst.protos, inst.queries, cfg);
    CHECK(ita_only.total == cfg.alpha * ita.total);
    CHECK(iar_only.total == cfg.beta * iar.total);
    CHECK(ita_only.iar_value == 0.0);
    CHECK(iar_only.ita_value == 0.0);
}
