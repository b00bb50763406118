#include "cspcl/layered.hpp"

#include <string>

#include "cspcl/errors.hpp"

namespace cspcl {

const char* loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::Csp: return "csp";
        case LossKind::ItaOnly: return "ita-only";
        case LossKind::IarOnly: return "iar-only";
        case LossKind::NPair: return "npair";
        case LossKind::InfoNce: return "infonce";
    }
    return "csp";
}

LossKind parse_loss_kind(const std::string& s) {
    if (s == "csp") return LossKind::Csp;
    if (s == "ita-only") return LossKind::ItaOnly;
    if (s == "iar-only") return LossKind::IarOnly;
    if (s == "npair") return LossKind::NPair;
    if (s == "infonce") return LossKind::InfoNce;
    throw ConfigError("loss: unknown loss '" + s +
                      "' (expected csp, ita-only, iar-only, npair, infonce)");
}

LossReport evaluate_loss(LossKind kind, const PrototypeBank& protos,
                         const GroupedQueries& queries, const CspConfig& cfg) {
    switch (kind) {
        case LossKind::Csp:
            return csp_loss(protos, queries, cfg);
        case LossKind::ItaOnly: {
            CspConfig c = cfg;
            c.beta = 0.0;
            return csp_loss(protos, queries, c);
        }
        case LossKind::IarOnly: {
            CspConfig c = cfg;
            c.alpha = 0.0;
            return csp_loss(protos, queries, c);
        }
        case LossKind::NPair:
            return npair_loss(protos, queries, cfg);
        case LossKind::InfoNce:
            return infonce_loss(protos, queries, cfg);
    }
    throw ConfigError("loss: unknown loss kind");
}

LayeredResult layered_loss(const LayerBank& bank, const PrototypeBank& protos,
                           LossKind kind, const CspConfig& cfg) {
    validate_target_set(bank.target_set, bank.layer_count());
    LayeredResult res;
    res.per_layer.reserve(bank.layer_count());
    for (std::size_t l = 0; l < bank.layer_count(); ++l) {
        const EmbeddingMatrix& q = bank.layers[l];
        if (bank.is_target(l)) {
            GroupedQueries grouped = group_queries(q, protos.k(), RemainderPolicy::Strict,
                                                   static_cast<int>(l));
            LossReport rep = evaluate_loss(kind, protos, grouped, cfg);
            res.total += rep.total;
            res.total_ita += rep.ita_value;
            res.total_iar += rep.iar_value;
            res.per_layer.push_back(std::move(rep));
        } else {
            LossReport zero;
            zero.grad_queries = EmbeddingMatrix(q.rows, q.dim);
            if (cfg.grad_to_prototypes)
                zero.grad_prototypes = EmbeddingMatrix(protos.k(), protos.dim());
            res.per_layer.push_back(std::move(zero));
        }
    }
    return res;
}

}  // namespace cspcl
