#include "cspcl/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "cspcl/errors.hpp"
#include "cspcl/geometry.hpp"
#include "cspcl/rng.hpp"

namespace cspcl {

namespace {

// Sub-stream ids carved out of the user-facing seed.
constexpr std::uint64_t kProtoStream = 0;
constexpr std::uint64_t kQueryStream = 1;
constexpr std::uint64_t kInstanceStreamBase = 1000;

void fill_gaussian(Rng& rng, std::span<double> row) {
    for (double& v : row) v = rng.normal();
}

// Draws a unit row, resampling the (measure-zero) degenerate case.
void draw_unit_row(Rng& rng, std::span<double> row) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        fill_gaussian(rng, row);
        double nrm = vector_norm(row);
        if (nrm > 1e-8) {
            for (double& v : row) v /= nrm;
            return;
        }
    }
    throw InfeasibleGeometry("init: could not draw a unit vector (degenerate RNG state)");
}

// Orthonormal rows via Gram-Schmidt with re-orthogonalization.
EmbeddingMatrix orthonormal_rows(Rng& rng, std::size_t k, std::size_t dim) {
    EmbeddingMatrix base(k, dim);
    std::vector<double> g(dim);
    for (std::size_t r = 0; r < k; ++r) {
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
            fill_gaussian(rng, g);
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t j = 0; j < r; ++j) {
                    auto bj = base.row(j);
                    double dot = 0.0;
                    for (std::size_t d = 0; d < dim; ++d) dot += g[d] * bj[d];
                    for (std::size_t d = 0; d < dim; ++d) g[d] -= dot * bj[d];
                }
            }
            double nrm = vector_norm(g);
            if (nrm > 1e-6) {
                auto dst = base.row(r);
                for (std::size_t d = 0; d < dim; ++d) dst[d] = g[d] / nrm;
                ok = true;
            }
        }
        if (!ok)
            throw InfeasibleGeometry("prototype generation: failed to orthogonalize row " +
                                     std::to_string(r));
    }
    return base;
}

double population_variance(const std::vector<double>& xs, double mean) {
    if (xs.empty()) return 0.0;
    double acc = 0.0;
    for (double x : xs) {
        double d = x - mean;
        acc += d * d;
    }
    return acc / static_cast<double>(xs.size());
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double acc = 0.0;
    for (double x : xs) acc += x;
    return acc / static_cast<double>(xs.size());
}

}  // namespace

void SyntheticScenario::validate() const {
    if (k == 0) throw DomainError("scenario.k must be >= 1");
    if (n == 0) throw DomainError("scenario.n must be >= 1");
    if (dim == 0) throw DomainError("scenario.dim must be >= 1");
    if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale))
        throw DomainError("scenario.noise_scale must be finite and >= 0");
    if (proto_geometry == ProtoGeometry::Orthogonal && dim < k)
        throw InfeasibleGeometry("scenario: orthogonal prototypes need dim >= k (got dim " +
                                 std::to_string(dim) + ", k " + std::to_string(k) + ")");
    if (proto_geometry == ProtoGeometry::PairedSimilar) {
        if (dim < k)
            throw InfeasibleGeometry("scenario: paired-similar prototypes need dim >= k");
        std::vector<int> uses(k, 0);
        for (const PairedSim& p : paired_sims) {
            if (p.k1 >= k || p.k2 >= k)
                throw DomainError("scenario.paired_sims: class index out of range");
            if (p.k1 == p.k2)
                throw DomainError("scenario.paired_sims: a class cannot pair with itself");
            if (!(p.target > -1.0 && p.target < 1.0))
                throw InfeasibleGeometry(
                    "scenario.paired_sims: target similarity must lie in (-1, 1)");
            if (++uses[p.k1] > 1 || ++uses[p.k2] > 1)
                throw InfeasibleGeometry(
                    "scenario.paired_sims: a class may appear in at most one pair");
        }
    }
}

LayerSpec LayerSpec::all_layers(std::size_t count) {
    LayerSpec spec;
    spec.count = count;
    spec.target_set.clear();
    for (std::size_t l = 0; l < count; ++l) spec.target_set.push_back(l);
    return spec;
}

EmbeddingMatrix generate_prototypes(const SyntheticScenario& scn) {
    scn.validate();
    Rng rng(scn.seed, kProtoStream);
    switch (scn.proto_geometry) {
        case ProtoGeometry::Orthogonal:
            return orthonormal_rows(rng, scn.k, scn.dim);
        case ProtoGeometry::RandomUnit: {
            EmbeddingMatrix protos(scn.k, scn.dim);
            for (std::size_t r = 0; r < scn.k; ++r) draw_unit_row(rng, protos.row(r));
            return protos;
        }
        case ProtoGeometry::PairedSimilar: {
            EmbeddingMatrix base = orthonormal_rows(rng, scn.k, scn.dim);
            EmbeddingMatrix protos = base;
            for (const PairedSim& p : scn.paired_sims) {
                // Slerp within the (base_k1, base_k2) plane hits the target
                // exactly while staying unit-norm and orthogonal to the rest.
                double t = p.target;
                double c = std::sqrt(1.0 - t * t);
                auto b1 = base.row(p.k1);
                auto b2 = base.row(p.k2);
                auto dst = protos.row(p.k2);
                for (std::size_t d = 0; d < scn.dim; ++d) dst[d] = t * b1[d] + c * b2[d];
            }
            // Verify the construction before handing it out.
            for (const PairedSim& p : scn.paired_sims) {
                double s = cosine_sim(protos.row(p.k1), protos.row(p.k2));
                if (std::abs(s - p.target) > 1e-6)
                    throw InfeasibleGeometry("prototype generation: pair (" +
                                             std::to_string(p.k1) + ", " + std::to_string(p.k2) +
                                             ") missed its target similarity");
            }
            std::vector<bool> listed(scn.k * scn.k, false);
            for (const PairedSim& p : scn.paired_sims) {
                listed[p.k1 * scn.k + p.k2] = true;
                listed[p.k2 * scn.k + p.k1] = true;
            }
            for (std::size_t a = 0; a < scn.k; ++a)
                for (std::size_t b = a + 1; b < scn.k; ++b)
                    if (!listed[a * scn.k + b] &&
                        std::abs(cosine_sim(protos.row(a), protos.row(b))) > 0.1 + 1e-9)
                        throw InfeasibleGeometry(
                            "prototype generation: unlisted pair exceeds the 0.1 "
                            "similarity budget");
            return protos;
        }
    }
    throw DomainError("scenario: unknown prototype geometry");
}

std::vector<EmbeddingMatrix> init_queries(const SyntheticScenario& scn,
                                          const EmbeddingMatrix& protos,
                                          std::size_t layer_count) {
    scn.validate();
    if (protos.rows != scn.k || protos.dim != scn.dim)
        throw DimensionMismatch("init_queries: prototype matrix does not match the scenario");
    Rng rng(scn.seed, kQueryStream);
    std::vector<EmbeddingMatrix> layers;
    layers.reserve(layer_count);
    for (std::size_t l = 0; l < layer_count; ++l) {
        EmbeddingMatrix q(scn.k * scn.n, scn.dim);
        for (std::size_t cls = 0; cls < scn.k; ++cls) {
            for (std::size_t j = 0; j < scn.n; ++j) {
                auto row = q.row(cls * scn.n + j);
                if (scn.query_init == QueryInit::RandomUnit) {
                    draw_unit_row(rng, row);
                } else if (scn.noise_scale == 0.0) {
                    // Exact copy: renormalizing would perturb the last bits.
                    auto src = protos.row(cls);
                    std::copy(src.begin(), src.end(), row.begin());
                } else {
                    auto src = protos.row(cls);
                    for (std::size_t d = 0; d < scn.dim; ++d)
                        row[d] = src[d] + scn.noise_scale * rng.normal();
                    normalize_in_place(row);
                }
            }
        }
        layers.push_back(std::move(q));
    }
    return layers;
}

MetricsReport compute_metrics(const PrototypeBank& protos, const LayerBank& bank) {
    const std::size_t K = protos.k();
    validate_target_set(bank.target_set, bank.layer_count());
    // An empty target set pools over every layer: the measurement shouldn't
    // vanish just because no layer receives the loss.
    std::vector<std::size_t> pool = bank.target_set;
    if (pool.empty())
        for (std::size_t l = 0; l < bank.layer_count(); ++l) pool.push_back(l);

    MetricsReport rep;
    rep.inter_pq_sim = EmbeddingMatrix(K, K);
    for (std::size_t a = 0; a < K; ++a)
        for (std::size_t b = 0; b < K; ++b)
            rep.inter_pq_sim.at(a, b) = std::numeric_limits<double>::quiet_NaN();

    std::vector<double> intra_pooled;
    std::vector<std::vector<double>> intra_per_class(K);
    std::vector<double> qq_pooled;
    std::vector<std::vector<double>> inter_vals(K * K);
    std::size_t correct = 0, total_queries = 0;
    std::vector<double> sims(K);

    for (std::size_t l : pool) {
        GroupedQueries g = group_queries(bank.layers[l], K, RemainderPolicy::Strict,
                                         static_cast<int>(l));
        for (std::size_t cls = 0; cls < K; ++cls) {
            for (std::size_t j = 0; j < g.n; ++j) {
                auto q = g.query(cls, j);
                for (std::size_t p = 0; p < K; ++p) sims[p] = cosine_sim(protos.weight(p), q);
                intra_pooled.push_back(sims[cls]);
                intra_per_class[cls].push_back(sims[cls]);
                for (std::size_t p = 0; p < K; ++p)
                    if (p != cls) inter_vals[p * K + cls].push_back(sims[p]);
                bool own_strictly_best = true;
                for (std::size_t p = 0; p < K; ++p)
                    if (p != cls && sims[p] >= sims[cls]) {
                        own_strictly_best = false;
                        break;
                    }
                correct += own_strictly_best ? 1 : 0;
                ++total_queries;
            }
            for (std::size_t i = 0; i < g.n; ++i)
                for (std::size_t j = i + 1; j < g.n; ++j)
                    qq_pooled.push_back(cosine_sim(g.query(cls, i), g.query(cls, j)));
        }
    }

    rep.intra_pq_sim_mean = mean_of(intra_pooled);
    rep.intra_pq_sim_var = population_variance(intra_pooled, rep.intra_pq_sim_mean);
    rep.intra_pq_sim_mean_per_class.resize(K);
    rep.intra_pq_sim_var_per_class.resize(K);
    for (std::size_t cls = 0; cls < K; ++cls) {
        double m = mean_of(intra_per_class[cls]);
        rep.intra_pq_sim_mean_per_class[cls] = m;
        rep.intra_pq_sim_var_per_class[cls] = population_variance(intra_per_class[cls], m);
    }
    rep.intra_qq_sim_var = population_variance(qq_pooled, mean_of(qq_pooled));
    for (std::size_t a = 0; a < K; ++a)
        for (std::size_t b = 0; b < K; ++b)
            if (a != b) rep.inter_pq_sim.at(a, b) = mean_of(inter_vals[a * K + b]);
    rep.nearest_proto_accuracy =
        total_queries == 0 ? 0.0
                           : static_cast<double>(correct) / static_cast<double>(total_queries);
    return rep;
}

Trajectory run_alignment(const SyntheticScenario& scn, LossKind loss, const CspConfig& cfg,
                         const OptimizerParams& opt, const LayerSpec& layers) {
    scn.validate();
    cfg.validate();
    if (!(opt.lr >= 0.0) || !std::isfinite(opt.lr))
        throw DomainError("optimizer.lr must be finite and >= 0");
    if (opt.steps < 1) throw DomainError("optimizer.steps must be >= 1");
    if (opt.record_every < 1) throw DomainError("optimizer.record_every must be >= 1");
    if (layers.count == 0) throw DomainError("layers.count must be >= 1");
    validate_target_set(layers.target_set, layers.count);

    EmbeddingMatrix weights = generate_prototypes(scn);
    PrototypeBank protos = tile_prototypes(weights, scn.n);
    LayerBank bank;
    bank.layers = init_queries(scn, weights, layers.count);
    bank.target_set = layers.target_set;

    Trajectory traj;
    traj.scenario = scn;
    traj.loss = loss;
    traj.csp = cfg;
    traj.opt = opt;
    traj.layers = layers;

    for (std::int64_t t = 0;; ++t) {
        LayeredResult res = layered_loss(bank, protos, loss, cfg);
        if (!std::isfinite(res.total))
            throw NonFiniteLoss("run_alignment: non-finite loss at step " + std::to_string(t));
        if (t % opt.record_every == 0 || t == opt.steps) {
            MetricsReport m = compute_metrics(protos, bank);
            m.step = t;
            m.loss_total = res.total;
            m.loss_ita = res.total_ita;
            m.loss_iar = res.total_iar;
            if (traj.steps.empty() || traj.steps.back().step != t)
                traj.steps.push_back(std::move(m));
        }
        if (t == opt.steps) break;

        for (std::size_t l = 0; l < bank.layer_count(); ++l) {
            EmbeddingMatrix& q = bank.layers[l];
            const EmbeddingMatrix& g = res.per_layer[l].grad_queries;
            for (std::size_t r = 0; r < q.rows; ++r) {
                auto qr = q.row(r);
                auto gr = g.row(r);
                bool moved = false;
                for (std::size_t d = 0; d < q.dim; ++d) {
                    double delta = opt.lr * gr[d];
                    if (delta != 0.0) {
                        qr[d] -= delta;
                        moved = true;
                    }
                }
                if (moved) {
                    // The squared norm can overflow even when every coordinate
                    // is finite, so the norm itself is the divergence sentinel.
                    if (!std::isfinite(vector_norm(qr)))
                        throw NonFiniteLoss("run_alignment: non-finite iterate at step " +
                                            std::to_string(t + 1));
                    normalize_in_place(qr, cfg.norm_floor);
                }
            }
        }
        if (cfg.grad_to_prototypes) {
            EmbeddingMatrix pg(protos.k(), protos.dim());
            for (const LossReport& rep : res.per_layer)
                if (rep.grad_prototypes)
                    for (std::size_t i = 0; i < pg.data.size(); ++i)
                        pg.data[i] += rep.grad_prototypes->data[i];
            bool any_moved = false;
            for (std::size_t r = 0; r < weights.rows; ++r) {
                auto wr = weights.row(r);
                auto gr = pg.row(r);
                bool moved = false;
                for (std::size_t d = 0; d < weights.dim; ++d) {
                    double delta = opt.lr * gr[d];
                    if (delta != 0.0) {
                        wr[d] -= delta;
                        moved = true;
                    }
                }
                if (moved) {
                    if (!std::isfinite(vector_norm(wr)))
                        throw NonFiniteLoss("run_alignment: non-finite prototype at step " +
                                            std::to_string(t + 1));
                    normalize_in_place(wr, cfg.norm_floor);
                    any_moved = true;
                }
            }
            if (any_moved) protos = tile_prototypes(weights, scn.n);
        }
    }

    traj.final_queries = std::move(bank);
    return traj;
}

double finite_diff_max_rel_error(const std::function<double(const EmbeddingMatrix&)>& value_of,
                                 const EmbeddingMatrix& at, const EmbeddingMatrix& analytic_grad,
                                 double h) {
    if (!(h > 0.0)) throw DomainError("finite differences need h > 0");
    if (!at.same_shape(analytic_grad))
        throw DimensionMismatch("finite differences: gradient shape mismatch");
    EmbeddingMatrix x = at;
    double diff2 = 0.0, fd2 = 0.0, an2 = 0.0;
    for (std::size_t c = 0; c < x.data.size(); ++c) {
        double orig = x.data[c];
        x.data[c] = orig + h;
        double f1 = value_of(x);
        x.data[c] = orig - h;
        double f2 = value_of(x);
        x.data[c] = orig;
        double fd = (f1 - f2) / (2.0 * h);
        double an = analytic_grad.data[c];
        double d = fd - an;
        diff2 += d * d;
        fd2 += fd * fd;
        an2 += an * an;
    }
    double scale = std::max(std::sqrt(fd2), std::sqrt(an2));
    return std::sqrt(diff2) / std::max(scale, 1e-12);
}

double finite_diff_check(LossKind loss, const PrototypeBank& protos,
                         const GroupedQueries& queries, const CspConfig& cfg, double h) {
    if (!(h > 0.0)) throw DomainError("finite differences need h > 0");

    // Keep the probe away from every gradient branch boundary: truncation
    // threshold, sign switch, clamps, and log floors. Within 10h of any of
    // them, central differences straddle a kink and say nothing useful.
    bool has_ita = loss == LossKind::Csp || loss == LossKind::ItaOnly;
    bool has_iar = loss == LossKind::Csp || loss == LossKind::IarOnly;
    if (has_ita && cfg.alpha == 0.0) has_ita = false;
    if (has_iar && cfg.beta == 0.0) has_iar = false;
    if (has_ita) {
        for (std::size_t k = 0; k < queries.k; ++k)
            for (std::size_t j = 0; j < queries.n; ++j) {
                double s = cosine_sim(protos.weight(k), queries.query(k, j), cfg.norm_floor);
                if (std::abs(s) <= 10.0 * h || std::abs(s - (1.0 - cfg.gamma)) <= 10.0 * h ||
                    std::abs(s) >= 1.0 - 10.0 * h)
                    throw BoundaryProximity(
                        "finite_diff_check: intra similarity too close to a branch boundary");
            }
    }
    if (has_iar) {
        for (std::size_t k1 = 0; k1 < queries.k; ++k1)
            for (std::size_t k2 = 0; k2 < queries.k; ++k2) {
                if (k1 == k2) continue;
                for (std::size_t j = 0; j < queries.n; ++j) {
                    double s =
                        cosine_sim(protos.weight(k1), queries.query(k2, j), cfg.norm_floor);
                    double arg = 1.0 - s;
                    if (arg <= 10.0 * cfg.log_floor || arg <= 10.0 * h ||
                        s <= -1.0 + 10.0 * h)
                        throw BoundaryProximity(
                            "finite_diff_check: inter similarity too close to a clamp or "
                            "log floor");
                }
            }
    }

    LossReport rep = evaluate_loss(loss, protos, queries, cfg);
    GroupedQueries probe = queries;
    auto value_of = [&](const EmbeddingMatrix& q) {
        probe.queries = q;
        return evaluate_loss(loss, protos, probe, cfg).total;
    };
    return finite_diff_max_rel_error(value_of, queries.queries, rep.grad_queries, h);
}

GradCheckInstance make_gradcheck_instance(std::uint64_t seed, std::uint64_t index) {
    Rng rng(seed, kInstanceStreamBase + index);
    std::size_t K = 2 + static_cast<std::size_t>(rng.next_u64() % 4);  // 2..5
    std::size_t n = 2 + static_cast<std::size_t>(rng.next_u64() % 3);  // 2..4
    std::size_t M = K + static_cast<std::size_t>(rng.next_u64() % (17 - K));  // K..16

    EmbeddingMatrix weights(K, M);
    for (std::size_t r = 0; r < K; ++r) draw_unit_row(rng, weights.row(r));
    EmbeddingMatrix q(K * n, M);
    for (std::size_t r = 0; r < K * n; ++r) draw_unit_row(rng, q.row(r));

    GradCheckInstance inst;
    inst.protos = tile_prototypes(weights, n);
    inst.queries = group_queries(q, K, RemainderPolicy::Strict, 0);
    inst.cfg = CspConfig{};
    return inst;
}

double gradcheck_suite(LossKind loss, std::uint64_t seed, int instances, double h) {
    if (instances < 1) throw DomainError("gradcheck_suite: instances must be >= 1");
    double worst = 0.0;
    for (int i = 0; i < instances; ++i) {
        std::uint64_t index = static_cast<std::uint64_t>(i);
        for (int attempt = 0;; ++attempt) {
            GradCheckInstance inst = make_gradcheck_instance(seed, index);
            try {
                worst = std::max(worst, finite_diff_check(loss, inst.protos, inst.queries,
                                                          inst.cfg, h));
                break;
            } catch (const BoundaryProximity&) {
                if (attempt >= 64)
                    throw;  // genuinely unlucky seed; let the caller see it
                index += 1u << 20;  // deterministic resample far from the base stream
            }
        }
    }
    return worst;
}

}  // namespace cspcl
