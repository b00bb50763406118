#include "cspcl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cspcl/errors.hpp"

namespace cspcl {

namespace {

void check_dims(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw DimensionMismatch("cosine_sim: operand lengths " + std::to_string(a.size()) +
                                " and " + std::to_string(b.size()) + " differ");
    if (a.empty()) throw DimensionMismatch("cosine_sim: empty operands");
}

}  // namespace

double vector_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double cosine_sim(std::span<const double> a, std::span<const double> b, double norm_floor) {
    check_dims(a, b);
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na2 += a[i] * a[i];
        nb2 += b[i] * b[i];
    }
    double na = std::sqrt(na2), nb = std::sqrt(nb2);
    if (na < norm_floor || nb < norm_floor)
        throw ZeroNorm("cosine_sim: operand norm below floor");
    double s = dot / (na * nb);
    return std::clamp(s, -1.0, 1.0);
}

CosineGrad cosine_sim_grad(std::span<const double> a, std::span<const double> b,
                           double norm_floor) {
    check_dims(a, b);
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na2 += a[i] * a[i];
        nb2 += b[i] * b[i];
    }
    double na = std::sqrt(na2), nb = std::sqrt(nb2);
    if (na < norm_floor || nb < norm_floor)
        throw ZeroNorm("cosine_sim_grad: operand norm below floor");

    CosineGrad g;
    g.raw = dot / (na * nb);
    g.value = std::clamp(g.raw, -1.0, 1.0);
    g.da.resize(a.size());
    g.db.resize(b.size());
    // d s / d a = b/(|a||b|) - s * a/|a|^2, with s the unclamped similarity.
    double inv_ab = 1.0 / (na * nb);
    double sa = g.raw / na2;
    double sb = g.raw / nb2;
    for (std::size_t i = 0; i < a.size(); ++i) {
        g.da[i] = b[i] * inv_ab - sa * a[i];
        g.db[i] = a[i] * inv_ab - sb * b[i];
    }
    return g;
}

void normalize_in_place(std::span<double> v, double norm_floor) {
    double n = vector_norm(v);
    if (n < norm_floor) throw ZeroNorm("normalize: norm below floor");
    for (double& x : v) x /= n;
}

EmbeddingMatrix normalized_rows(const EmbeddingMatrix& m, double norm_floor) {
    EmbeddingMatrix out = m;
    for (std::size_t r = 0; r < out.rows; ++r) normalize_in_place(out.row(r), norm_floor);
    return out;
}

}  // namespace cspcl
