#pragma once

#include "cspcl/alignment.hpp"
#include "cspcl/config.hpp"
#include "cspcl/csp_loss.hpp"

namespace cspcl {

// Multi-class N-pair loss with the class prototype as the positive and every
// other class's prototype as a negative:
//   mean over queries of log(1 + sum_{k' != k} exp(<q^, w^_k'> - <q^, w^_k>))
// on unit-normalized vectors (inner product == cosine). Requires K >= 2.
LossReport npair_loss(const PrototypeBank& protos, const GroupedQueries& queries,
                      const CspConfig& cfg);

// InfoNCE / NT-Xent with prototypes as the candidate set:
//   mean over queries of -log softmax_k(sim(q, w_k) / tau)
// cfg.tau doubles as the temperature here. Requires K >= 2 and tau > 0
// (DomainError otherwise).
LossReport infonce_loss(const PrototypeBank& protos, const GroupedQueries& queries,
                        const CspConfig& cfg);

}  // namespace cspcl
