#pragma once

#include <string>
#include <vector>

#include "cspcl/alignment.hpp"
#include "cspcl/baselines.hpp"
#include "cspcl/csp_loss.hpp"

namespace cspcl {

// Which loss drives an evaluation or alignment run.
enum class LossKind { Csp, ItaOnly, IarOnly, NPair, InfoNce };

const char* loss_kind_name(LossKind kind);       // "csp", "ita-only", ...
LossKind parse_loss_kind(const std::string& s);  // throws ConfigError

// Evaluates one loss on one grouped layer. ItaOnly/IarOnly are csp_loss with
// beta/alpha forced to zero respectively.
LossReport evaluate_loss(LossKind kind, const PrototypeBank& protos,
                         const GroupedQueries& queries, const CspConfig& cfg);

// Per-layer reports plus totals, with only target_set layers contributing.
struct LayeredResult {
    std::vector<LossReport> per_layer;  // size == layer count; zero reports off-target
    double total = 0.0;
    double total_ita = 0.0;  // unweighted component sums over target layers
    double total_iar = 0.0;
};

// Applies the loss to every layer in bank.target_set (ascending); non-target
// layers get zero-valued reports with zero gradients of the right shape.
LayeredResult layered_loss(const LayerBank& bank, const PrototypeBank& protos,
                           LossKind kind, const CspConfig& cfg);

}  // namespace cspcl
