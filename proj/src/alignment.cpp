#include "cspcl/alignment.hpp"

#include <algorithm>
#include <cstring>
#include <string>

#include "cspcl/errors.hpp"

namespace cspcl {

GroupedQueries group_queries(const EmbeddingMatrix& q, std::size_t k, RemainderPolicy policy,
                             int origin_layer) {
    if (k == 0) throw DomainError("group_queries: k must be positive");
    if (q.rows < k)
        throw TooFewQueries("group_queries: " + std::to_string(q.rows) + " rows for " +
                            std::to_string(k) + " classes");
    std::size_t n = q.rows / k;
    std::size_t remainder = q.rows % k;
    if (remainder != 0 && policy == RemainderPolicy::Strict)
        throw IndivisibleCount("group_queries: " + std::to_string(q.rows) +
                               " rows not divisible by k = " + std::to_string(k));

    GroupedQueries g;
    g.k = k;
    g.n = n;
    g.origin_layer = origin_layer;
    g.dropped_rows = remainder;  // trailing rows are the ones excluded
    g.queries.rows = k * n;
    g.queries.dim = q.dim;
    g.queries.data.assign(q.data.begin(),
                          q.data.begin() + static_cast<std::ptrdiff_t>(k * n * q.dim));
    return g;
}

PrototypeBank tile_prototypes(const EmbeddingMatrix& weights, std::size_t n) {
    if (n == 0) throw DomainError("tile_prototypes: n must be positive");
    if (weights.rows == 0) throw DegenerateGroup("tile_prototypes: no weight rows");

    PrototypeBank bank;
    bank.weights = weights;
    bank.n = n;
    bank.tiled.rows = weights.rows * n;
    bank.tiled.dim = weights.dim;
    bank.tiled.data.resize(bank.tiled.rows * bank.tiled.dim);
    for (std::size_t c = 0; c < weights.rows; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            std::memcpy(bank.tiled.data.data() + (c * n + i) * weights.dim,
                        weights.data.data() + c * weights.dim, weights.dim * sizeof(double));
        }
    }
    return bank;
}

void validate_target_set(const std::vector<std::size_t>& target_set, std::size_t layer_count) {
    for (std::size_t i = 0; i < target_set.size(); ++i) {
        if (target_set[i] >= layer_count)
            throw DomainError("target_set: layer index " + std::to_string(target_set[i]) +
                              " out of range for " + std::to_string(layer_count) + " layers");
        if (i > 0 && target_set[i] <= target_set[i - 1])
            throw DomainError("target_set: indices must be strictly increasing");
    }
}

}  // namespace cspcl
