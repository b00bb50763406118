#pragma once

namespace cspcl {

// Hyperparameters of the combined contrastive loss. Defaults are the tuned
// operating point the rest of the project (CLI, simulator, tests) assumes.
struct CspConfig {
    double alpha = 1.0;        // weight of the truncated-attraction term
    double beta = 0.5;         // weight of the adaptive-repulsion term
    double gamma = 5e-3;       // truncation margin, in (0, 1)
    double tau = 0.3;          // repulsion temperature, >= 0
    double log_floor = 1e-9;   // every log argument is clamped to >= this
    double norm_floor = 1e-12; // vectors below this norm have no direction
    bool grad_through_repulsion = false;  // backprop into the repulsion factor
    bool grad_to_prototypes = false;      // also produce prototype gradients

    // Throws DomainError naming the offending field.
    void validate() const;
};

}  // namespace cspcl
