#include "cspcl/csp_loss.hpp"

#include <cmath>
#include <string>

#include "cspcl/errors.hpp"
#include "cspcl/geometry.hpp"

namespace cspcl {

namespace {

// Tolerance for treating a similarity as "inside [-1, 1] modulo rounding".
constexpr double kClampTol = 1e-9;

void check_shapes(const PrototypeBank& protos, const GroupedQueries& queries) {
    if (protos.dim() != queries.dim())
        throw DimensionMismatch("loss: prototype dim " + std::to_string(protos.dim()) +
                                " != query dim " + std::to_string(queries.dim()));
    if (protos.k() != queries.k)
        throw DimensionMismatch("loss: prototype class count " + std::to_string(protos.k()) +
                                " != query class count " + std::to_string(queries.k));
    if (protos.n != queries.n)
        throw DimensionMismatch("loss: prototype tiling n " + std::to_string(protos.n) +
                                " != query group size " + std::to_string(queries.n));
}

// Similarity plus the pieces needed to push a coefficient through d sim / d q.
struct SimParts {
    double sim = 0.0;  // clamped
    double raw = 0.0;  // unclamped, used in the gradient
    double inv_pq = 0.0;  // 1 / (|p| |q|)
    double raw_over_q2 = 0.0;  // raw / |q|^2
    double inv_q2 = 0.0;       // 1 / |q|^2 (prototype-side gradient reuse)
    double raw_over_p2 = 0.0;  // raw / |p|^2
};

SimParts sim_parts(std::span<const double> p, std::span<const double> q, double norm_floor) {
    if (p.size() != q.size())
        throw DimensionMismatch("loss: embedding dims disagree");
    double dot = 0.0, np2 = 0.0, nq2 = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        dot += p[i] * q[i];
        np2 += p[i] * p[i];
        nq2 += q[i] * q[i];
    }
    double np = std::sqrt(np2), nq = std::sqrt(nq2);
    if (np < norm_floor || nq < norm_floor) throw ZeroNorm("loss: embedding norm below floor");
    SimParts s;
    s.raw = dot / (np * nq);
    s.sim = s.raw < -1.0 ? -1.0 : (s.raw > 1.0 ? 1.0 : s.raw);
    s.inv_pq = 1.0 / (np * nq);
    s.raw_over_q2 = s.raw / nq2;
    s.inv_q2 = 1.0 / nq2;
    s.raw_over_p2 = s.raw / np2;
    return s;
}

// grad_q += coef * d sim / d q  where d sim / d q = p/(|p||q|) - raw * q/|q|^2.
void add_sim_grad_q(std::span<double> grad_q, std::span<const double> p,
                    std::span<const double> q, const SimParts& s, double coef) {
    double cp = coef * s.inv_pq;
    double cq = coef * s.raw_over_q2;
    for (std::size_t i = 0; i < p.size(); ++i) grad_q[i] += cp * p[i] - cq * q[i];
}

// grad_p += coef * d sim / d p (symmetric form).
void add_sim_grad_p(std::span<double> grad_p, std::span<const double> p,
                    std::span<const double> q, const SimParts& s, double coef) {
    double cq = coef * s.inv_pq;
    double cp = coef * s.raw_over_p2;
    for (std::size_t i = 0; i < q.size(); ++i) grad_p[i] += cq * q[i] - cp * p[i];
}

LossReport make_empty_report(const PrototypeBank& protos, const GroupedQueries& queries,
                             bool with_protos) {
    LossReport rep;
    rep.grad_queries = EmbeddingMatrix(queries.queries.rows, queries.dim());
    if (with_protos) rep.grad_prototypes = EmbeddingMatrix(protos.k(), protos.dim());
    return rep;
}

}  // namespace

double truncate(double x, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw DomainError("truncate: gamma must lie in (0, 1)");
    if (x > 1.0 + kClampTol || x < -1.0 - kClampTol)
        throw DomainError("truncate: input " + std::to_string(x) +
                          " outside [-1, 1] beyond clamping tolerance");
    x = x > 1.0 ? 1.0 : (x < -1.0 ? -1.0 : x);
    if (x > 1.0 - gamma) return 1.0 - gamma;
    if (x > 0.0) return x;
    return 0.0;
}

double truncate_deriv(double x, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw DomainError("truncate: gamma must lie in (0, 1)");
    return (x > 0.0 && x <= 1.0 - gamma) ? 1.0 : 0.0;
}

double repulsion_factor(double sim_pp, double tau) {
    if (tau < 0.0) throw DomainError("repulsion_factor: tau must be >= 0");
    if (sim_pp > 1.0 + kClampTol || sim_pp < -1.0 - kClampTol)
        throw DomainError("repulsion_factor: similarity outside [-1, 1]");
    return std::exp(1.0 - tau * (1.0 - sim_pp));
}

LossReport ita_loss(const PrototypeBank& protos, const GroupedQueries& queries,
                    const CspConfig& cfg) {
    cfg.validate();
    check_shapes(protos, queries);
    const std::size_t K = queries.k;
    const std::size_t n = queries.n;
    if (n < 2) throw DegenerateGroup("ita_loss: group size must be >= 2");

    LossReport rep = make_empty_report(protos, queries, cfg.grad_to_prototypes);
    rep.term_count_ita = static_cast<std::int64_t>(K * n * (n - 1));

    // Ordered pairs (i, j), i != j, over tiled copies: the tiled prototype rows
    // of a class are identical, so each (class, query) pair occurs n-1 times.
    // The multiplicity is folded into the coefficients instead of re-looping i.
    const double norm = 1.0 / (static_cast<double>(K) * static_cast<double>(n) *
                               static_cast<double>(n - 1));
    const double multiplicity = static_cast<double>(n - 1);
    double sum_logs = 0.0;  // accumulates multiplicity * log(arg), k then j ascending
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t j = 0; j < n; ++j) {
            SimParts s = sim_parts(protos.prototype(k, 0), queries.query(k, j), cfg.norm_floor);
            double t = truncate(s.sim, cfg.gamma);
            double arg = t > cfg.log_floor ? t : cfg.log_floor;
            sum_logs += multiplicity * std::log(arg);

            bool mid = s.sim > 0.0 && s.sim <= 1.0 - cfg.gamma;
            if (mid && t > cfg.log_floor) {
                // d/dq [-norm * mult * log(sim)] = -norm * mult / sim * d sim/dq
                double coef = -norm * multiplicity / s.sim;
                add_sim_grad_q(rep.grad_queries.row(k * n + j), protos.prototype(k, 0),
                               queries.query(k, j), s, coef);
                if (rep.grad_prototypes)
                    add_sim_grad_p(rep.grad_prototypes->row(k), protos.prototype(k, 0),
                                   queries.query(k, j), s, coef);
            } else {
                rep.truncated_pair_count += static_cast<std::int64_t>(n - 1);
            }
        }
    }
    rep.total = -norm * sum_logs;
    rep.ita_value = rep.total;
    if (!std::isfinite(rep.total)) throw NonFiniteLoss("ita_loss: non-finite value");
    return rep;
}

LossReport iar_loss(const PrototypeBank& protos, const GroupedQueries& queries,
                    const CspConfig& cfg) {
    cfg.validate();
    check_shapes(protos, queries);
    const std::size_t K = queries.k;
    const std::size_t n = queries.n;
    if (K < 2) throw DegenerateGroup("iar_loss: needs at least two classes");

    LossReport rep = make_empty_report(protos, queries, cfg.grad_to_prototypes);
    rep.term_count_iar = static_cast<std::int64_t>(K * (K - 1) * n * n);

    // One repulsion factor per ordered class pair, computed from the weight
    // rows (tiled copies are identical).
    EmbeddingMatrix R(K, K);
    std::vector<SimParts> pp(K * K);
    for (std::size_t k1 = 0; k1 < K; ++k1) {
        for (std::size_t k2 = 0; k2 < K; ++k2) {
            if (k1 == k2) continue;
            SimParts s = sim_parts(protos.weight(k1), protos.weight(k2), cfg.norm_floor);
            pp[k1 * K + k2] = s;
            R.at(k1, k2) = repulsion_factor(s.sim, cfg.tau);
        }
    }

    const double norm = 1.0 / (static_cast<double>(K) * static_cast<double>(K - 1) *
                               static_cast<double>(n) * static_cast<double>(n));
    // The i-sum over tiled copies contributes a factor n per (k1, k2, j).
    const double multiplicity = static_cast<double>(n);
    double sum_terms = 0.0;  // R * mult * log(arg), (k1, k2, j) ascending
    for (std::size_t k1 = 0; k1 < K; ++k1) {
        for (std::size_t k2 = 0; k2 < K; ++k2) {
            if (k1 == k2) continue;
            double r = R.at(k1, k2);
            double pair_log_sum = 0.0;  // for the repulsion-factor gradient path
            for (std::size_t j = 0; j < n; ++j) {
                SimParts s =
                    sim_parts(protos.prototype(k1, 0), queries.query(k2, j), cfg.norm_floor);
                double raw_arg = 1.0 - s.sim;
                double arg = raw_arg > cfg.log_floor ? raw_arg : cfg.log_floor;
                double lg = std::log(arg);
                sum_terms += r * multiplicity * lg;
                pair_log_sum += multiplicity * lg;

                if (raw_arg > cfg.log_floor) {
                    // d/dq [-norm * R * mult * log(1 - sim)] = norm * R * mult/(1-sim) * d sim/dq
                    double coef = norm * r * multiplicity / arg;
                    add_sim_grad_q(rep.grad_queries.row(k2 * n + j), protos.prototype(k1, 0),
                                   queries.query(k2, j), s, coef);
                    if (rep.grad_prototypes)
                        add_sim_grad_p(rep.grad_prototypes->row(k1), protos.prototype(k1, 0),
                                       queries.query(k2, j), s, coef);
                }
                // Floored terms use the clamped argument as a constant: no gradient.
            }
            if (rep.grad_prototypes && cfg.grad_through_repulsion) {
                // d/dw [-norm * R(sim_pp) * sum_logs] with dR/dsim_pp = tau * R.
                const SimParts& sp = pp[k1 * K + k2];
                double coef = -norm * pair_log_sum * cfg.tau * r;
                add_sim_grad_p(rep.grad_prototypes->row(k1), protos.weight(k1),
                               protos.weight(k2), sp, coef);
                add_sim_grad_q(rep.grad_prototypes->row(k2), protos.weight(k1),
                               protos.weight(k2), sp, coef);
            }
        }
    }
    rep.total = -norm * sum_terms;
    rep.iar_value = rep.total;
    if (!std::isfinite(rep.total)) throw NonFiniteLoss("iar_loss: non-finite value");
    return rep;
}

LossReport csp_loss(const PrototypeBank& protos, const GroupedQueries& queries,
                    const CspConfig& cfg) {
    cfg.validate();
    check_shapes(protos, queries);

    // A zero-weight component is skipped entirely, preconditions included.
    LossReport rep = make_empty_report(protos, queries, cfg.grad_to_prototypes);
    if (cfg.alpha != 0.0) {
        LossReport ita = ita_loss(protos, queries, cfg);
        rep.ita_value = ita.total;
        rep.truncated_pair_count = ita.truncated_pair_count;
        rep.term_count_ita = ita.term_count_ita;
        for (std::size_t i = 0; i < rep.grad_queries.data.size(); ++i)
            rep.grad_queries.data[i] += cfg.alpha * ita.grad_queries.data[i];
        if (rep.grad_prototypes && ita.grad_prototypes)
            for (std::size_t i = 0; i < rep.grad_prototypes->data.size(); ++i)
                rep.grad_prototypes->data[i] += cfg.alpha * ita.grad_prototypes->data[i];
    }
    if (cfg.beta != 0.0) {
        LossReport iar = iar_loss(protos, queries, cfg);
        rep.iar_value = iar.total;
        rep.term_count_iar = iar.term_count_iar;
        for (std::size_t i = 0; i < rep.grad_queries.data.size(); ++i)
            rep.grad_queries.data[i] += cfg.beta * iar.grad_queries.data[i];
        if (rep.grad_prototypes && iar.grad_prototypes)
            for (std::size_t i = 0; i < rep.grad_prototypes->data.size(); ++i)
                rep.grad_prototypes->data[i] += cfg.beta * iar.grad_prototypes->data[i];
    }
    rep.total = cfg.alpha * rep.ita_value + cfg.beta * rep.iar_value;
    return rep;
}

void CspConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("csp.gamma must lie in (0, 1)");
    if (tau < 0.0) throw DomainError("csp.tau must be >= 0");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw DomainError("csp.alpha must be finite and >= 0");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw DomainError("csp.beta must be finite and >= 0");
    if (!(log_floor > 0.0 && log_floor < 1.0)) throw DomainError("csp.log_floor must lie in (0, 1)");
    if (!(norm_floor > 0.0)) throw DomainError("csp.norm_floor must be > 0");
}

}  // namespace cspcl
