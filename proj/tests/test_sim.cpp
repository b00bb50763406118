#include <cmath>
#include <string>
#include <vector>

#include "cspcl/errors.hpp"
#include "cspcl/geometry.hpp"
#include "cspcl/sim.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cspcl;

namespace {

SyntheticScenario standard_scenario() { return SyntheticScenario{}; }

EmbeddingMatrix matrix(std::size_t rows, std::size_t dim, std::initializer_list<double> xs) {
    EmbeddingMatrix m(rows, dim);
    std::copy(xs.begin(), xs.end(), m.data.begin());
    return m;
}

}  // namespace

TEST_CASE("generate_prototypes: orthogonal geometry") {
    SyntheticScenario scn;
    scn.k = 3;
    scn.dim = 8;
    scn.seed = 41;
    EmbeddingMatrix p = generate_prototypes(scn);
    CHECK(p.rows == 3);
    CHECK(p.dim == 8);
    for (std::size_t r = 0; r < 3; ++r)
        CHECK(std::abs(vector_norm(p.row(r)) - 1.0) <= 1e-14);
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = a + 1; b < 3; ++b)
            CHECK(std::abs(cosine_sim(p.row(a), p.row(b))) <= 1e-12);

    EmbeddingMatrix p2 = generate_prototypes(scn);
    CHECK(p2.data == p.data);  // same seed, same bits

    scn.seed = 42;
    EmbeddingMatrix p3 = generate_prototypes(scn);
    CHECK(p3.data != p.data);
}

TEST_CASE("generate_prototypes: paired similarity targets") {
    SyntheticScenario scn;
    scn.k = 3;
    scn.dim = 16;
    scn.proto_geometry = ProtoGeometry::PairedSimilar;
    scn.paired_sims = {{0, 1, 0.9}};
    scn.seed = 7;
    EmbeddingMatrix p = generate_prototypes(scn);
    CHECK(std::abs(cosine_sim(p.row(0), p.row(1)) - 0.9) <= 1e-6);
    CHECK(std::abs(cosine_sim(p.row(0), p.row(2))) <= 0.1);
    CHECK(std::abs(cosine_sim(p.row(1), p.row(2))) <= 0.1);
    for (std::size_t r = 0; r < 3; ++r)
        CHECK(std::abs(vector_norm(p.row(r)) - 1.0) <= 1e-12);

    SyntheticScenario multi;
    multi.k = 5;
    multi.dim = 12;
    multi.proto_geometry = ProtoGeometry::PairedSimilar;
    multi.paired_sims = {{0, 1, 0.9}, {2, 3, -0.5}};
    multi.seed = 9;
    EmbeddingMatrix m = generate_prototypes(multi);
    CHECK(std::abs(cosine_sim(m.row(0), m.row(1)) - 0.9) <= 1e-6);
    CHECK(std::abs(cosine_sim(m.row(2), m.row(3)) + 0.5) <= 1e-6);
    CHECK(std::abs(cosine_sim(m.row(0), m.row(4))) <= 0.1);
    CHECK(std::abs(cosine_sim(m.row(1), m.row(2))) <= 0.1);
}

TEST_CASE("scenario validation rejects impossible geometries") {
    SyntheticScenario scn;
    scn.k = 5;
    scn.dim = 3;  // fewer dimensions than orthogonal directions
    CHECK_THROWS_AS(scn.validate(), InfeasibleGeometry);

    scn = SyntheticScenario{};
    scn.proto_geometry = ProtoGeometry::PairedSimilar;
    scn.paired_sims = {{0, 1, 1.5}};
    CHECK_THROWS_AS(scn.validate(), InfeasibleGeometry);

    scn.paired_sims = {{0, 1, 0.5}, {1, 2, 0.5}};  // class 1 appears twice
    CHECK_THROWS_AS(scn.validate(), InfeasibleGeometry);

    scn.paired_sims = {{0, 0, 0.5}};
    CHECK_THROWS_AS(scn.validate(), DomainError);

    scn.paired_sims = {{0, 9, 0.5}};
    CHECK_THROWS_AS(scn.validate(), DomainError);

    scn = SyntheticScenario{};
    scn.k = 0;
    CHECK_THROWS_AS(scn.validate(), DomainError);

    scn = SyntheticScenario{};
    scn.noise_scale = -0.1;
    CHECK_THROWS_AS(scn.validate(), DomainError);

    // RandomUnit prototypes have no dimension constraint.
    scn = SyntheticScenario{};
    scn.k = 5;
    scn.dim = 3;
    scn.proto_geometry = ProtoGeometry::RandomUnit;
    CHECK_NOTHROW(scn.validate());
}

TEST_CASE("init_queries: noiseless near-prototype start is an exact copy") {
    SyntheticScenario scn;
    scn.k = 4;
    scn.n = 3;
    scn.dim = 8;
    scn.query_init = QueryInit::NearPrototype;
    scn.noise_scale = 0.0;
    EmbeddingMatrix protos = generate_prototypes(scn);
    std::vector<EmbeddingMatrix> layers = init_queries(scn, protos, 2);
    REQUIRE(layers.size() == 2);
    for (const EmbeddingMatrix& q : layers)
        for (std::size_t cls = 0; cls < 4; ++cls)
            for (std::size_t j = 0; j < 3; ++j)
                for (std::size_t d = 0; d < 8; ++d)
                    CHECK(q.at(cls * 3 + j, d) == protos.at(cls, d));

    LayerBank bank;
    bank.layers = layers;
    bank.target_set = {0, 1};
    MetricsReport m = compute_metrics(tile_prototypes(protos, 3), bank);
    CHECK(m.intra_pq_sim_mean == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(m.intra_qq_sim_var <= 1e-28);
    CHECK(m.nearest_proto_accuracy == 1.0);
}

TEST_CASE("init_queries: random start scores near chance accuracy") {
    SyntheticScenario scn;
    scn.k = 5;
    scn.n = 30;
    scn.dim = 64;
    scn.seed = 7;
    EmbeddingMatrix protos = generate_prototypes(scn);
    std::vector<EmbeddingMatrix> layers = init_queries(scn, protos, 1);
    LayerBank bank;
    bank.layers = layers;
    bank.target_set = {0};
    MetricsReport m = compute_metrics(tile_prototypes(protos, 30), bank);
    CHECK(m.nearest_proto_accuracy >= 0.05);
    CHECK(m.nearest_proto_accuracy <= 0.45);
    CHECK(std::abs(m.intra_pq_sim_mean) <= 0.3);
}

TEST_CASE("init_queries: deterministic per seed, independent per layer") {
    SyntheticScenario scn;
    scn.k = 3;
    scn.n = 2;
    scn.dim = 6;
    scn.seed = 99;
    EmbeddingMatrix protos = generate_prototypes(scn);
    std::vector<EmbeddingMatrix> a = init_queries(scn, protos, 3);
    std::vector<EmbeddingMatrix> b = init_queries(scn, protos, 3);
    REQUIRE(a.size() == b.size());
    for (std::size_t l = 0; l < a.size(); ++l) CHECK(a[l].data == b[l].data);
    CHECK(a[0].data != a[1].data);
    CHECK(a[1].data != a[2].data);
}

TEST_CASE("run_alignment: zero learning rate is a fixed point") {
    SyntheticScenario scn = standard_scenario();
    OptimizerParams opt;
    opt.lr = 0.0;
    opt.steps = 30;
    opt.record_every = 10;
    LayerSpec layers = LayerSpec::all_layers(2);
    Trajectory traj = run_alignment(scn, LossKind::Csp, CspConfig{}, opt, layers);
    REQUIRE(traj.steps.size() == 4);
    const MetricsReport& first = traj.steps.front();
    for (const MetricsReport& m : traj.steps) {
        CHECK(m.loss_total == first.loss_total);
        CHECK(m.intra_pq_sim_mean == first.intra_pq_sim_mean);
        CHECK(m.intra_qq_sim_var == first.intra_qq_sim_var);
        CHECK(m.nearest_proto_accuracy == first.nearest_proto_accuracy);
    }
    // The queries never moved: they are bitwise the initial draw.
    EmbeddingMatrix protos = generate_prototypes(scn);
    std::vector<EmbeddingMatrix> init = init_queries(scn, protos, 2);
    for (std::size_t l = 0; l < 2; ++l)
        CHECK(traj.final_queries.layers[l].data == init[l].data);
}

TEST_CASE("run_alignment: empty target set never moves the queries") {
    SyntheticScenario scn = standard_scenario();
    OptimizerParams opt;
    opt.steps = 30;
    opt.record_every = 10;

    LayerSpec no_targets;
    no_targets.count = 2;
    no_targets.target_set = {};
    Trajectory frozen = run_alignment(scn, LossKind::Csp, CspConfig{}, opt, no_targets);

    OptimizerParams still = opt;
    still.lr = 0.0;
    Trajectory lr0 = run_alignment(scn, LossKind::Csp, CspConfig{}, still,
                                   LayerSpec::all_layers(2));

    REQUIRE(frozen.steps.size() == lr0.steps.size());
    for (std::size_t i = 0; i < frozen.steps.size(); ++i) {
        const MetricsReport& a = frozen.steps[i];
        const MetricsReport& b = lr0.steps[i];
        CHECK(a.loss_total == 0.0);  // no layer receives the loss
        CHECK(a.intra_pq_sim_mean == b.intra_pq_sim_mean);
        CHECK(a.intra_pq_sim_var == b.intra_pq_sim_var);
        CHECK(a.intra_qq_sim_var == b.intra_qq_sim_var);
        CHECK(a.nearest_proto_accuracy == b.nearest_proto_accuracy);
        CHECK(a.inter_pq_sim.data.size() == b.inter_pq_sim.data.size());
        for (std::size_t c = 0; c < a.inter_pq_sim.data.size(); ++c) {
            bool both_nan = std::isnan(a.inter_pq_sim.data[c]) &&
                            std::isnan(b.inter_pq_sim.data[c]);
            CHECK((both_nan || a.inter_pq_sim.data[c] == b.inter_pq_sim.data[c]));
        }
    }
    for (std::size_t l = 0; l < 2; ++l)
        CHECK(frozen.final_queries.layers[l].data == lr0.final_queries.layers[l].data);
}

TEST_CASE("run_alignment: loss descends and the recording schedule is honored") {
    SyntheticScenario scn = standard_scenario();
    OptimizerParams opt;
    opt.steps = 300;
    opt.record_every = 10;
    LayerSpec layers = LayerSpec::all_layers(2);
    Trajectory traj = run_alignment(scn, LossKind::Csp, CspConfig{}, opt, layers);

    REQUIRE(traj.steps.size() == 31);
    for (std::size_t i = 1; i < traj.steps.size(); ++i)
        CHECK(traj.steps[i].step > traj.steps[i - 1].step);
    CHECK(traj.steps.front().step == 0);
    CHECK(traj.steps.back().step == 300);

    CHECK(traj.steps.back().loss_total < traj.steps.front().loss_total);
    for (std::size_t i = 1; i < traj.steps.size(); ++i)
        if (traj.steps[i - 1].step >= 10)
            CHECK(traj.steps[i].loss_total <= traj.steps[i - 1].loss_total + 1e-12);
}

TEST_CASE("run_alignment: odd step counts still record the final step") {
    SyntheticScenario scn = standard_scenario();
    OptimizerParams opt;
    opt.steps = 250;
    opt.record_every = 100;
    Trajectory traj =
        run_alignment(scn, LossKind::Csp, CspConfig{}, opt, LayerSpec::all_layers(1));
    REQUIRE(traj.steps.size() == 4);
    CHECK(traj.steps[0].step == 0);
    CHECK(traj.steps[1].step == 100);
    CHECK(traj.steps[2].step == 200);
    CHECK(traj.steps[3].step == 250);

    opt.steps = 5;
    Trajectory tiny =
        run_alignment(scn, LossKind::Csp, CspConfig{}, opt, LayerSpec::all_layers(1));
    REQUIRE(tiny.steps.size() == 2);
    CHECK(tiny.steps[0].step == 0);
    CHECK(tiny.steps[1].step == 5);
}

TEST_CASE("run_alignment: bitwise deterministic") {
    SyntheticScenario scn = standard_scenario();
    OptimizerParams opt;
    opt.steps = 120;
    opt.record_every = 40;
    LayerSpec layers = LayerSpec::all_layers(2);
    Trajectory a = run_alignment(scn, LossKind::Csp, CspConfig{}, opt, layers);
    Trajectory b = run_alignment(scn, LossKind::Csp, CspConfig{}, opt, layers);
    REQUIRE(a.steps.size() == b.steps.size());
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
        CHECK(a.steps[i].loss_total == b.steps[i].loss_total);
        CHECK(a.steps[i].intra_pq_sim_mean == b.steps[i].intra_pq_sim_mean);
        CHECK(a.steps[i].intra_qq_sim_var == b.steps[i].intra_qq_sim_var);
    }
    for (std::size_t l = 0; l < 2; ++l)
        CHECK(a.final_queries.layers[l].data == b.final_queries.layers[l].data);
}

TEST_CASE("run_alignment: a diverging iterate is reported with its step") {
    SyntheticScenario scn = standard_scenario();
    OptimizerParams opt;
    opt.lr = 1e308;
    opt.steps = 10;
    opt.record_every = 5;
    try {
        run_alignment(scn, LossKind::Csp, CspConfig{}, opt, LayerSpec::all_layers(1));
        FAIL("expected NonFiniteLoss");
    } catch (const NonFiniteLoss& e) {
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("run_alignment: parameter validation") {
    SyntheticScenario scn = standard_scenario();
    OptimizerParams opt;
    opt.steps = 0;
    CHECK_THROWS_AS(run_alignment(scn, LossKind::Csp, CspConfig{}, opt, LayerSpec{}),
                    DomainError);
    opt = OptimizerParams{};
    opt.record_every = 0;
    CHECK_THROWS_AS(run_alignment(scn, LossKind::Csp, CspConfig{}, opt, LayerSpec{}),
                    DomainError);
    opt = OptimizerParams{};
    opt.lr = -0.5;
    CHECK_THROWS_AS(run_alignment(scn, LossKind::Csp, CspConfig{}, opt, LayerSpec{}),
                    DomainError);
    LayerSpec bad;
    bad.count = 2;
    bad.target_set = {0, 1, 2};
    CHECK_THROWS_AS(run_alignment(scn, LossKind::Csp, CspConfig{}, OptimizerParams{}, bad),
                    DomainError);
}

TEST_CASE("finite difference checker: quadratic self-test") {
    Rng rng(3);
    EmbeddingMatrix at = oracle::random_unit_matrix(rng, 2, 3);
    EmbeddingMatrix grad(2, 3);
    for (std::size_t c = 0; c < at.data.size(); ++c) grad.data[c] = 2.0 * at.data[c];
    auto value = [](const EmbeddingMatrix& x) {
        double s = 0.0;
        for (double v : x.data) s += v * v;
        return s;
    };
    CHECK(finite_diff_max_rel_error(value, at, grad, 1e-6) <= 1e-9);
}

TEST_CASE("finite difference checker: refuses branch-boundary instances") {
    // Intra similarity exactly at the truncation threshold 1 - gamma.
    CspConfig cfg;
    double s = 1.0 - cfg.gamma;
    EmbeddingMatrix w = matrix(2, 3, {1, 0, 0, 0, 1, 0});
    EmbeddingMatrix q(4, 3);
    q.at(0, 0) = s;
    q.at(0, 1) = std::sqrt(1.0 - s * s);
    q.at(1, 0) = 0.6;
    q.at(1, 1) = 0.8;
    q.at(2, 1) = 0.6;
    q.at(2, 2) = 0.8;
    q.at(3, 1) = 0.8;
    q.at(3, 2) = 0.6;
    GroupedQueries queries = group_queries(q, 2);
    PrototypeBank protos = tile_prototypes(w, 2);
    CHECK_THROWS_AS(finite_diff_check(LossKind::ItaOnly, protos, queries, cfg, 1e-6),
                    BoundaryProximity);

    // Inter similarity of exactly 1: the repulsion log sits on its floor.
    EmbeddingMatrix q2(4, 3);
    q2.at(0, 0) = 0.6;
    q2.at(0, 1) = 0.8;  // class 0 query aligned with prototype 1's direction
    q2.at(1, 1) = 1.0;
    q2.at(2, 1) = 0.6;
    q2.at(2, 2) = 0.8;
    q2.at(3, 1) = 0.8;
    q2.at(3, 2) = 0.6;
    GroupedQueries queries2 = group_queries(q2, 2);
    CHECK_THROWS_AS(finite_diff_check(LossKind::IarOnly, protos, queries2, cfg, 1e-6),
                    BoundaryProximity);
}

TEST_CASE("make_gradcheck_instance: documented shape ranges, deterministic") {
    for (int i = 0; i < 50; ++i) {
        GradCheckInstance inst = make_gradcheck_instance(55, static_cast<std::uint64_t>(i));
        CHECK(inst.queries.k >= 2);
        CHECK(inst.queries.k <= 5);
        CHECK(inst.queries.n >= 2);
        CHECK(inst.queries.n <= 4);
        CHECK(inst.queries.dim() >= inst.queries.k);
        CHECK(inst.queries.dim() <= 16);
        CHECK(inst.protos.k() == inst.queries.k);
        GradCheckInstance again = make_gradcheck_instance(55, static_cast<std::uint64_t>(i));
        CHECK(again.queries.queries.data == inst.queries.queries.data);
        CHECK(again.protos.weights.data == inst.protos.weights.data);
    }
}

TEST_CASE("compute_metrics: swapped classes score zero accuracy") {
    EmbeddingMatrix w = matrix(2, 2, {1, 0, 0, 1});
    EmbeddingMatrix q = matrix(2, 2, {0, 1, 1, 0});  // each query on the wrong prototype
    LayerBank bank;
    bank.layers.push_back(q);
    bank.target_set = {0};
    MetricsReport m = compute_metrics(tile_prototypes(w, 1), bank);
    CHECK(m.nearest_proto_accuracy == 0.0);
    CHECK(m.intra_pq_sim_mean == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(m.inter_pq_sim.at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(m.inter_pq_sim.at(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::isnan(m.inter_pq_sim.at(0, 0)));
    CHECK(std::isnan(m.inter_pq_sim.at(1, 1)));
}

TEST_CASE("compute_metrics: pools only over the target set, all layers when empty") {
    Rng rng(17);
    EmbeddingMatrix w = oracle::random_unit_matrix(rng, 3, 6);
    PrototypeBank protos = tile_prototypes(w, 2);
    LayerBank two;
    two.layers.push_back(oracle::random_unit_matrix(rng, 6, 6));
    two.layers.push_back(oracle::random_unit_matrix(rng, 6, 6));
    two.target_set = {0};

    LayerBank only_first;
    only_first.layers.push_back(two.layers[0]);
    only_first.target_set = {0};

    MetricsReport a = compute_metrics(protos, two);
    MetricsReport b = compute_metrics(protos, only_first);
    CHECK(a.intra_pq_sim_mean == b.intra_pq_sim_mean);
    CHECK(a.intra_qq_sim_var == b.intra_qq_sim_var);
    CHECK(a.nearest_proto_accuracy == b.nearest_proto_accuracy);

    // Empty target set: measurements cover every layer.
    two.target_set = {};
    LayerBank both = two;
    both.target_set = {0, 1};
    MetricsReport c = compute_metrics(protos, two);
    MetricsReport d = compute_metrics(protos, both);
    CHECK(c.intra_pq_sim_mean == d.intra_pq_sim_mean);
    CHECK(c.intra_qq_sim_var == d.intra_qq_sim_var);
    CHECK(c.nearest_proto_accuracy == d.nearest_proto_accuracy);
}

TEST_CASE("gradcheck_suite: deterministic worst error within tolerance") {
    double a = gradcheck_suite(LossKind::Csp, 123, 10, 1e-6);
    double b = gradcheck_suite(LossKind::Csp, 123, 10, 1e-6);
    CHECK(a == b);
    CHECK(a <= 1e-6);
}
