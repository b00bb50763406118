#pragma once

#include <cstdint>
#include <optional>

#include "cspcl/alignment.hpp"
#include "cspcl/config.hpp"
#include "cspcl/matrix.hpp"

namespace cspcl {

// Value + analytic gradients of one loss evaluation.
struct LossReport {
    double total = 0.0;
    double ita_value = 0.0;  // unweighted attraction component
    double iar_value = 0.0;  // unweighted repulsion component
    EmbeddingMatrix grad_queries;                    // k*n x M
    std::optional<EmbeddingMatrix> grad_prototypes;  // K x M when requested
    std::int64_t truncated_pair_count = 0;  // attraction terms on a zero-gradient branch
    std::int64_t term_count_ita = 0;
    std::int64_t term_count_iar = 0;
};

// Piecewise attraction transfer:
//   1-gamma  for 1-gamma < x <= 1
//   x        for 0 < x <= 1-gamma
//   0        for -1 <= x <= 0
// Derivative is 1 on the middle branch, 0 on both outer branches. Inputs
// within 1e-9 of [-1, 1] are clamped; anything further out throws DomainError.
double truncate(double x, double gamma);

// 1 on the middle branch of truncate, else 0.
double truncate_deriv(double x, double gamma);

// Repulsion multiplier exp(1 - tau * (1 - sim_pp)). tau = 0 gives the
// constant e; for tau > 0 it is strictly increasing in sim_pp.
double repulsion_factor(double sim_pp, double tau);

// Intra-class truncated attraction:
//   -1/(K*n*(n-1)) * sum_k sum_{i != j} log(max(T(sim(p_i^k, q_j^k), gamma), log_floor))
// over the tiled prototype copies. Terms past the truncation threshold or at
// or below zero similarity contribute a constant value and exactly zero
// gradient. Requires n >= 2 (DegenerateGroup otherwise).
LossReport ita_loss(const PrototypeBank& protos, const GroupedQueries& queries,
                    const CspConfig& cfg);

// Inter-class adaptive repulsion:
//   -1/(K*(K-1)*n^2) * sum_{k1 != k2} sum_{i,j} R(k1,k2) * log(max(1 - sim(p_i^k1, q_j^k2), log_floor))
// R is computed once per class pair from the weight rows and treated as a
// constant unless cfg.grad_through_repulsion. Requires K >= 2.
LossReport iar_loss(const PrototypeBank& protos, const GroupedQueries& queries,
                    const CspConfig& cfg);

// Weighted combination alpha * ITA + beta * IAR. A component with zero weight
// is skipped entirely (its preconditions are not enforced).
LossReport csp_loss(const PrototypeBank& protos, const GroupedQueries& queries,
                    const CspConfig& cfg);

}  // namespace cspcl
