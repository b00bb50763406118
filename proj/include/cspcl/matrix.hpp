#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace cspcl {

// A single embedding is just a contiguous run of doubles.
using Embedding = std::vector<double>;

// Dense row-major matrix of embeddings. Deliberately minimal: the loss code
// wants explicit loops with a fixed summation order, not a linear-algebra DSL.
struct EmbeddingMatrix {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<double> data;  // rows * dim, row-major

    EmbeddingMatrix() = default;
    EmbeddingMatrix(std::size_t r, std::size_t d) : rows(r), dim(d), data(r * d, 0.0) {}

    std::span<double> row(std::size_t i) { return {data.data() + i * dim, dim}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * dim, dim}; }

    double& at(std::size_t i, std::size_t j) { return data[i * dim + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * dim + j]; }

    bool same_shape(const EmbeddingMatrix& o) const { return rows == o.rows && dim == o.dim; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

}  // namespace cspcl
