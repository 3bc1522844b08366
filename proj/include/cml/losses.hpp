#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "cml/cluster.hpp"
#include "cml/numeric.hpp"

namespace cml {

// Learnable class centers of the margin softmax head. Row k-1 holds the
// d-dimensional center of class k; rows are kept unit norm by the trainer
// (renormalized after every optimizer step).
struct Classifier {
    Mat weights;          // K x d
    double scale = 64.0;  // s
    double margin = 0.5;  // m, radians

    std::size_t num_classes() const { return weights.rows; }
    std::size_t dim() const { return weights.cols; }
};

Classifier make_classifier(std::size_t num_classes, std::size_t dim,
                           double scale, double margin, Rng& rng);

// Loss value plus gradients for every differentiable input. Fields not
// applicable to a loss stay empty / zero. For triplet_loss, grad_features
// is laid out [anchors..., positives..., negatives...].
struct LossBundle {
    double value = 0.0;
    std::vector<Vec> grad_features;
    Mat grad_weights;
    double grad_tau = 0.0;  // dL/d(tau), not d(log tau)
};

// Learnable temperature optimized as log(tau) so tau stays positive. The
// value set through from_tau() is kept exact (not round-tripped through
// exp(log(tau))) until the next log-space update.
struct TempParam {
    double log_tau = -2.6592600369327783;  // log(0.07)
    bool learnable = true;

    double tau() const { return tau_value_; }
    void set_log_tau(double value) {
        log_tau = value;
        tau_value_ = std::exp(value);
    }
    static TempParam from_tau(double tau_value);

private:
    double tau_value_ = 0.07;
};

// Additive angular margin softmax over cosine logits; mean over the batch.
// Gradients with respect to features and classifier weights.
LossBundle arcface(const std::vector<Vec>& features, const std::vector<int>& labels,
                   const Classifier& clf);

// Linear map of a class concentration onto [0, 1]. Degenerate span
// (phi_max - phi_min < 1e-12) returns 1. Values outside the span by more
// than 1e-9 raise OutOfRangeError; inside the tolerance they are clamped.
double margin_scale(double phi_y, double phi_min, double phi_max);

// Margin softmax with the per-class margin lambda(phi_y) * m. Classes absent
// from the table (or an empty table, the warm-up case) use lambda = 1.
// lambda is a constant: no gradient flows through phi.
LossBundle cg_arcface(const std::vector<Vec>& features, const std::vector<int>& labels,
                      const Classifier& clf, const ConcentrationTable& table);

// Supervised contrastive pull toward the positive cluster center with the
// per-class concentration as temperature. Centers and temperatures are
// constants (they come from the momentum pipeline); gradients flow to the
// features only.
LossBundle clu_con(const std::vector<Vec>& features, const std::vector<int>& labels,
                   const ClassSample& sample);

// Same contrast with one shared learnable temperature instead of the
// per-class concentrations. grad_tau is populated.
LossBundle clu_con_fixed_temp(const std::vector<Vec>& features, const std::vector<int>& labels,
                              const ClassSample& sample, const TempParam& tau0);

// Aligns each sampled cluster center with its learnable class center,
// normalized over all K classifier rows. Gradients to weights and tau;
// the cluster centers are constants.
LossBundle clu_ali(const ClassSample& sample, const Classifier& clf, const TempParam& tau);

// L = L_cg + lambda1 * L_con + lambda2 * L_ali. A term with zero weight is
// skipped entirely, so its preconditions do not apply.
LossBundle overall(const std::vector<Vec>& features, const std::vector<int>& labels,
                   const Classifier& clf, const ConcentrationTable& table,
                   const ClassSample& sample, const TempParam& tau,
                   double lambda1, double lambda2);

// Mean squared Euclidean distance to the class mean.
LossBundle center_loss(const std::vector<Vec>& features, const std::vector<int>& labels,
                       const std::map<int, Vec>& class_means);

// Mean hinge on squared distances; subgradient 0 at the kink.
LossBundle triplet_loss(const std::vector<Vec>& anchors, const std::vector<Vec>& positives,
                        const std::vector<Vec>& negatives, double margin_t);

inline constexpr double kTempEps = 1e-8;

}  // namespace cml
