#include "cspcl/baselines.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "cspcl/errors.hpp"
#include "cspcl/geometry.hpp"

namespace cspcl {

namespace {

void check_shapes(const PrototypeBank& protos, const GroupedQueries& queries) {
    if (protos.dim() != queries.dim())
        throw DimensionMismatch("baseline: prototype dim " + std::to_string(protos.dim()) +
                                " != query dim " + std::to_string(queries.dim()));
    if (protos.k() != queries.k)
        throw DimensionMismatch("baseline: prototype class count " +
                                std::to_string(protos.k()) + " != query class count " +
                                std::to_string(queries.k));
    if (protos.n != queries.n)
        throw DimensionMismatch("baseline: prototype tiling n " + std::to_string(protos.n) +
                                " != query group size " + std::to_string(queries.n));
}

// Unit-normalized copies of the K weight rows.
EmbeddingMatrix unit_weights(const PrototypeBank& protos, double norm_floor) {
    EmbeddingMatrix w(protos.k(), protos.dim());
    for (std::size_t k = 0; k < protos.k(); ++k) {
        auto src = protos.weight(k);
        double n2 = 0.0;
        for (double v : src) n2 += v * v;
        double nrm = std::sqrt(n2);
        if (nrm < norm_floor) throw ZeroNorm("baseline: prototype norm below floor");
        auto dst = w.row(k);
        for (std::size_t d = 0; d < src.size(); ++d) dst[d] = src[d] / nrm;
    }
    return w;
}

}  // namespace

LossReport npair_loss(const PrototypeBank& protos, const GroupedQueries& queries,
                      const CspConfig& cfg) {
    cfg.validate();
    check_shapes(protos, queries);
    const std::size_t K = queries.k;
    const std::size_t n = queries.n;
    const std::size_t M = queries.dim();
    if (K < 2) throw DegenerateGroup("npair_loss: needs at least two classes");

    EmbeddingMatrix w = unit_weights(protos, cfg.norm_floor);
    LossReport rep;
    rep.grad_queries = EmbeddingMatrix(queries.queries.rows, M);
    if (cfg.grad_to_prototypes) rep.grad_prototypes = EmbeddingMatrix(K, M);

    const std::size_t total_q = K * n;
    const double inv_q = 1.0 / static_cast<double>(total_q);
    double sum = 0.0;
    std::vector<double> qhat(M);
    std::vector<double> sims(K);
    std::vector<double> expd(K);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t j = 0; j < n; ++j) {
            auto q = queries.query(k, j);
            double nq2 = 0.0;
            for (double v : q) nq2 += v * v;
            double nq = std::sqrt(nq2);
            if (nq < cfg.norm_floor) throw ZeroNorm("npair_loss: query norm below floor");
            for (std::size_t d = 0; d < M; ++d) qhat[d] = q[d] / nq;

            for (std::size_t kk = 0; kk < K; ++kk) {
                double dot = 0.0;
                auto wr = w.row(kk);
                for (std::size_t d = 0; d < M; ++d) dot += wr[d] * qhat[d];
                sims[kk] = dot;
            }
            // log(1 + sum_{k' != k} exp(s_{k'} - s_k)), stabilized by the max exponent.
            double mx = 0.0;  // the implicit "1" term has exponent 0
            for (std::size_t kk = 0; kk < K; ++kk) {
                if (kk == k) continue;
                double e = sims[kk] - sims[k];
                if (e > mx) mx = e;
            }
            double denom = std::exp(-mx);  // the 1-term
            for (std::size_t kk = 0; kk < K; ++kk) {
                if (kk == k) continue;
                expd[kk] = std::exp(sims[kk] - sims[k] - mx);
                denom += expd[kk];
            }
            sum += mx + std::log(denom);

            // d loss_q / d s_{k'} = p_{k'}; d / d s_k = -(1 - p_k0) where p terms
            // come from the softmax over {0} U {s_{k'}-s_k}.
            auto gq = rep.grad_queries.row(k * n + j);
            double coef_self = 0.0;
            for (std::size_t kk = 0; kk < K; ++kk) {
                if (kk == k) continue;
                double p = expd[kk] / denom;
                double coef = inv_q * p;  // d total / d sims[kk]
                coef_self -= coef;
                // d sims[kk] / d q = (w_kk - sims[kk] * qhat) / |q|
                for (std::size_t d = 0; d < M; ++d)
                    gq[d] += coef * (w.at(kk, d) - sims[kk] * qhat[d]) / nq;
                if (rep.grad_prototypes) {
                    // d sims[kk] / d w_raw = (qhat - sims[kk] * w_kk) / |w_raw|
                    auto raw = protos.weight(kk);
                    double nw = vector_norm(raw);
                    auto gp = rep.grad_prototypes->row(kk);
                    for (std::size_t d = 0; d < M; ++d)
                        gp[d] += coef * (qhat[d] - sims[kk] * w.at(kk, d)) / nw;
                }
            }
            for (std::size_t d = 0; d < M; ++d)
                gq[d] += coef_self * (w.at(k, d) - sims[k] * qhat[d]) / nq;
            if (rep.grad_prototypes) {
                auto raw = protos.weight(k);
                double nw = vector_norm(raw);
                auto gp = rep.grad_prototypes->row(k);
                for (std::size_t d = 0; d < M; ++d)
                    gp[d] += coef_self * (qhat[d] - sims[k] * w.at(k, d)) / nw;
            }
        }
    }
    rep.total = inv_q * sum;
    if (!std::isfinite(rep.total)) throw NonFiniteLoss("npair_loss: non-finite value");
    return rep;
}

LossReport infonce_loss(const PrototypeBank& protos, const GroupedQueries& queries,
                        const CspConfig& cfg) {
    cfg.validate();
    check_shapes(protos, queries);
    if (cfg.tau == 0.0) throw DomainError("infonce_loss: temperature tau must be > 0");
    const std::size_t K = queries.k;
    const std::size_t n = queries.n;
    const std::size_t M = queries.dim();
    if (K < 2) throw DegenerateGroup("infonce_loss: needs at least two classes");

    EmbeddingMatrix w = unit_weights(protos, cfg.norm_floor);
    LossReport rep;
    rep.grad_queries = EmbeddingMatrix(queries.queries.rows, M);
    if (cfg.grad_to_prototypes) rep.grad_prototypes = EmbeddingMatrix(K, M);

    const std::size_t total_q = K * n;
    const double inv_q = 1.0 / static_cast<double>(total_q);
    const double inv_tau = 1.0 / cfg.tau;
    double sum = 0.0;
    std::vector<double> qhat(M);
    std::vector<double> logits(K);
    std::vector<double> probs(K);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t j = 0; j < n; ++j) {
            auto q = queries.query(k, j);
            double nq2 = 0.0;
            for (double v : q) nq2 += v * v;
            double nq = std::sqrt(nq2);
            if (nq < cfg.norm_floor) throw ZeroNorm("infonce_loss: query norm below floor");
            for (std::size_t d = 0; d < M; ++d) qhat[d] = q[d] / nq;

            double mx = -1e300;
            for (std::size_t kk = 0; kk < K; ++kk) {
                double dot = 0.0;
                auto wr = w.row(kk);
                for (std::size_t d = 0; d < M; ++d) dot += wr[d] * qhat[d];
                logits[kk] = dot * inv_tau;
                if (logits[kk] > mx) mx = logits[kk];
            }
            double z = 0.0;
            for (std::size_t kk = 0; kk < K; ++kk) {
                probs[kk] = std::exp(logits[kk] - mx);
                z += probs[kk];
            }
            for (std::size_t kk = 0; kk < K; ++kk) probs[kk] /= z;
            sum += -(logits[k] - mx - std::log(z));

            // d loss_q / d logits = probs - onehot(k); chain through sim/tau.
            auto gq = rep.grad_queries.row(k * n + j);
            for (std::size_t kk = 0; kk < K; ++kk) {
                double coef = inv_q * (probs[kk] - (kk == k ? 1.0 : 0.0)) * inv_tau;
                double sim_kk = logits[kk] * cfg.tau;
                for (std::size_t d = 0; d < M; ++d)
                    gq[d] += coef * (w.at(kk, d) - sim_kk * qhat[d]) / nq;
                if (rep.grad_prototypes) {
                    auto raw = protos.weight(kk);
                    double nw = vector_norm(raw);
                    auto gp = rep.grad_prototypes->row(kk);
                    for (std::size_t d = 0; d < M; ++d)
                        gp[d] += coef * (qhat[d] - sim_kk * w.at(kk, d)) / nw;
                }
            }
        }
    }
    rep.total = inv_q * sum;
    if (!std::isfinite(rep.total)) throw NonFiniteLoss("infonce_loss: non-finite value");
    return rep;
}

}  // namespace cspcl
