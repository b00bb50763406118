#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cspcl/matrix.hpp"

namespace cspcl {

// What to do when the query row count is not divisible by k.
enum class RemainderPolicy { Strict, Drop };

// Queries partitioned into k contiguous class blocks of n rows each, in the
// original row order: row r belongs to class r / n.
struct GroupedQueries {
    std::size_t k = 0;  // number of classes
    std::size_t n = 0;  // queries per class
    EmbeddingMatrix queries;  // k*n rows
    int origin_layer = 0;
    std::size_t dropped_rows = 0;  // trailing rows excluded under Drop

    std::size_t dim() const { return queries.dim; }
    std::span<const double> query(std::size_t cls, std::size_t j) const {
        return queries.row(cls * n + j);
    }
    std::span<double> query(std::size_t cls, std::size_t j) {
        return queries.row(cls * n + j);
    }
};

// Splits `q` into k equal groups. Throws TooFewQueries if rows < k;
// IndivisibleCount under Strict when rows % k != 0. Under Drop the trailing
// remainder rows are excluded and counted in dropped_rows.
GroupedQueries group_queries(const EmbeddingMatrix& q, std::size_t k,
                             RemainderPolicy policy = RemainderPolicy::Strict,
                             int origin_layer = 0);

// Classifier-weight prototypes: one weight row per class plus the n-fold
// tiling that pairs each class's prototype with each of its queries.
struct PrototypeBank {
    EmbeddingMatrix weights;  // K x M
    EmbeddingMatrix tiled;    // K*n x M, rows [c*n, (c+1)*n) are copies of weights row c
    std::size_t n = 1;

    std::size_t k() const { return weights.rows; }
    std::size_t dim() const { return weights.dim; }
    std::span<const double> weight(std::size_t cls) const { return weights.row(cls); }
    std::span<const double> prototype(std::size_t cls, std::size_t i) const {
        return tiled.row(cls * n + i);
    }
};

// Tiles each weight row n times. Throws DomainError if n == 0, DegenerateGroup
// if there are no weight rows.
PrototypeBank tile_prototypes(const EmbeddingMatrix& weights, std::size_t n);

// One query matrix per emulated decoder layer plus the subset of layers the
// loss is applied to. An empty target_set means "no layer receives the loss".
struct LayerBank {
    std::vector<EmbeddingMatrix> layers;
    std::vector<std::size_t> target_set;  // sorted, unique, < layers.size()

    std::size_t layer_count() const { return layers.size(); }
    bool is_target(std::size_t l) const {
        for (std::size_t t : target_set)
            if (t == l) return true;
        return false;
    }
};

// Validates target indices (sorted unique, in range). Throws DomainError.
void validate_target_set(const std::vector<std::size_t>& target_set, std::size_t layer_count);

}  // namespace cspcl
