#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cspcl/alignment.hpp"
#include "cspcl/config.hpp"
#include "cspcl/layered.hpp"
#include "cspcl/matrix.hpp"

namespace cspcl {

// How the synthetic class prototypes are laid out on the sphere.
enum class ProtoGeometry { Orthogonal, RandomUnit, PairedSimilar };

// How the initial queries are drawn.
enum class QueryInit { RandomUnit, NearPrototype };

// A requested pairwise prototype similarity.
struct PairedSim {
    std::size_t k1 = 0;
    std::size_t k2 = 0;
    double target = 0.0;  // in (-1, 1)
};

struct SyntheticScenario {
    std::size_t k = 5;
    std::size_t n = 6;
    std::size_t dim = 32;
    ProtoGeometry proto_geometry = ProtoGeometry::Orthogonal;
    std::vector<PairedSim> paired_sims;  // used when proto_geometry == PairedSimilar
    QueryInit query_init = QueryInit::RandomUnit;
    double noise_scale = 0.1;  // used when query_init == NearPrototype
    std::uint64_t seed = 7;

    void validate() const;  // throws DomainError / InfeasibleGeometry
};

// Number of emulated decoder layers and which of them receive the loss.
struct LayerSpec {
    std::size_t count = 6;
    std::vector<std::size_t> target_set = {0, 1, 2, 3, 4, 5};  // default: all

    static LayerSpec all_layers(std::size_t count);
};

struct OptimizerParams {
    double lr = 0.5;
    std::int64_t steps = 2000;
    std::int64_t record_every = 100;
};

// Cluster-structure measurements of one query state.
struct MetricsReport {
    std::int64_t step = 0;
    double loss_total = 0.0;
    double loss_ita = 0.0;
    double loss_iar = 0.0;
    double intra_pq_sim_mean = 0.0;  // pooled over target layers
    double intra_pq_sim_var = 0.0;
    std::vector<double> intra_pq_sim_mean_per_class;
    std::vector<double> intra_pq_sim_var_per_class;
    double intra_qq_sim_var = 0.0;
    EmbeddingMatrix inter_pq_sim;  // K x K, diagonal = NaN (unset)
    double nearest_proto_accuracy = 0.0;
};

struct Trajectory {
    std::vector<MetricsReport> steps;  // step indices strictly increasing
    LayerBank final_queries;
    // Configuration snapshot of the run.
    SyntheticScenario scenario;
    LossKind loss = LossKind::Csp;
    CspConfig csp;
    OptimizerParams opt;
    LayerSpec layers;
};

// K unit-norm prototype rows realizing the scenario geometry; bitwise
// deterministic for a fixed seed. Throws InfeasibleGeometry when the targets
// cannot be met in the given dimension.
EmbeddingMatrix generate_prototypes(const SyntheticScenario& scn);

// One query matrix per layer (layer_count total), each K*n rows in class-block
// order, unit rows, independently drawn per layer from the scenario seed.
std::vector<EmbeddingMatrix> init_queries(const SyntheticScenario& scn,
                                          const EmbeddingMatrix& protos,
                                          std::size_t layer_count = 6);

// Projected gradient descent on the queries (prototypes frozen unless
// cfg.grad_to_prototypes): q <- q - lr * grad, rows renormalized to the unit
// sphere after each step. Metrics are recorded at step 0, every
// opt.record_every steps, and at the final step. Throws NonFiniteLoss naming
// the step if the loss or an iterate stops being finite.
Trajectory run_alignment(const SyntheticScenario& scn, LossKind loss, const CspConfig& cfg,
                         const OptimizerParams& opt, const LayerSpec& layers = LayerSpec{});

// Maximum relative deviation between the analytic query gradient and central
// finite differences, measured as |a-b| / max(|a|, |b|, 1e-12) on the full
// gradient vectors. Guards against instances whose similarities sit within
// 10h of a gradient branch boundary (throws BoundaryProximity; callers
// resample).
double finite_diff_check(LossKind loss, const PrototypeBank& protos,
                         const GroupedQueries& queries, const CspConfig& cfg, double h);

// Generic central-difference core used by finite_diff_check and by tests that
// bring their own target function (e.g. the quadratic self-test).
double finite_diff_max_rel_error(const std::function<double(const EmbeddingMatrix&)>& value_of,
                                 const EmbeddingMatrix& at, const EmbeddingMatrix& analytic_grad,
                                 double h);

// Cluster metrics of the bank against the prototypes, pooled over the bank's
// target_set (over all layers when the target set is empty). Loss fields are
// left zero; run_alignment fills them.
MetricsReport compute_metrics(const PrototypeBank& protos, const LayerBank& bank);

// A random loss-evaluation instance for gradient checking: K in [2,5],
// n in [2,4], M in [K,16], random unit prototypes and queries, default CspConfig.
struct GradCheckInstance {
    PrototypeBank protos;
    GroupedQueries queries;
    CspConfig cfg;
};
GradCheckInstance make_gradcheck_instance(std::uint64_t seed, std::uint64_t index);

// Runs finite_diff_check over `instances` seeded instances (resampling on
// BoundaryProximity) and returns the worst relative error observed.
double gradcheck_suite(LossKind loss, std::uint64_t seed, int instances, double h);

}  // namespace cspcl
