#pragma once

#include <span>
#include <vector>

#include "cspcl/matrix.hpp"

namespace cspcl {

// Norm below which a vector has no usable direction.
inline constexpr double kNormFloor = 1e-12;

// Cosine similarity of a and b, clamped to [-1, 1].
// Throws DimensionMismatch on length disagreement, ZeroNorm if either norm
// falls below `norm_floor`.
double cosine_sim(std::span<const double> a, std::span<const double> b,
                  double norm_floor = kNormFloor);

// Cosine similarity together with its analytic gradient w.r.t. both inputs:
//   d sim / d a = b / (|a||b|) - sim * a / |a|^2        (and symmetrically for b)
// computed from the unclamped similarity. `value` carries the clamped result.
struct CosineGrad {
    double value = 0.0;      // clamped to [-1, 1]
    double raw = 0.0;        // unclamped dot/(|a||b|), used for the gradient
    std::vector<double> da;  // d sim / d a
    std::vector<double> db;  // d sim / d b
};

CosineGrad cosine_sim_grad(std::span<const double> a, std::span<const double> b,
                           double norm_floor = kNormFloor);

// Euclidean norm of a row.
double vector_norm(std::span<const double> v);

// Scales `v` to unit norm in place. Throws ZeroNorm below the floor.
void normalize_in_place(std::span<double> v, double norm_floor = kNormFloor);

// Copy of `m` with every row unit-normalized.
EmbeddingMatrix normalized_rows(const EmbeddingMatrix& m, double norm_floor = kNormFloor);

}  // namespace cspcl
