#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cml/numeric.hpp"

namespace cml {

// One named group of scalar inputs to check. `values` is perturbed in place;
// `analytic` holds the claimed gradient at the unperturbed point.
struct GradBlock {
    std::string name;
    double* values = nullptr;
    std::size_t size = 0;
    const double* analytic = nullptr;
};

struct GradBlockReport {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::vector<GradBlockReport> blocks;
};

// Central finite differences against the provided analytic gradients.
// Error per coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|),
// so small gradients are compared absolutely. h must lie in [1e-7, 1e-3].
// Throws NonDeterministicLossError when two evaluations at the same point
// disagree bitwise.
GradCheckReport gradcheck(const std::function<double()>& value_fn,
                          std::span<GradBlock> blocks, double h);

enum class LossKind {
    Arcface,
    CgArcface,
    CluCon,
    CluConFixedTemp,
    CluAli,
    Center,
    Triplet,
};

LossKind loss_kind_from_name(const std::string& name);
std::string loss_kind_name(LossKind kind);

// Builds a small random instance of the given loss (seeded, away from the
// margin fallback boundary and hinge kinks) and checks every gradient the
// loss claims to provide.
GradCheckReport gradcheck_loss_instance(LossKind kind, std::uint64_t seed, double h);

// Random small MLP with a linear probe on the embedding; checks all
// parameter gradients produced by backward(), normalization Jacobian
// included. Instances are regenerated until every ReLU pre-activation is
// safely away from its kink.
GradCheckReport gradcheck_encoder(std::uint64_t seed, double h);

}  // namespace cml
