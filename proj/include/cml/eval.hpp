#pragma once

#include <cstdint>
#include <vector>

#include "cml/encoder.hpp"
#include "cml/numeric.hpp"
#include "cml/rng.hpp"

namespace cml {

// Cluster assignment per sample; -1 marks density-clustering noise.
// Cluster ids are contiguous from 0.
struct ClusteringResult {
    std::vector<int> assignment;
    std::size_t num_clusters = 0;

    // Lloyd-iteration inertia trace (k-means only); used to assert the
    // non-increasing property.
    std::vector<double> inertia_history;
};

// Lloyd's algorithm with k-means++ seeding. Ties in assignment go to the
// lowest center index; an emptied cluster is reseeded with the point
// farthest from its current center.
ClusteringResult kmeans(const std::vector<Vec>& features, std::size_t k,
                        std::size_t max_iters, Rng& rng);

// Classic density clustering, Euclidean metric. Neighborhoods include the
// point itself; expansion order is fixed by ascending sample index.
ClusteringResult dbscan(const std::vector<Vec>& features, double eps, std::size_t min_pts);

// Normalized mutual information with geometric-mean normalization, natural
// log. Noise points (-1) become singleton clusters. When either entropy is
// zero: 1 if the partitions are identical up to relabeling, else 0.
double nmi(const ClusteringResult& pred, const std::vector<int>& truth);

struct BCubedScore {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
};

// Per-item BCubed precision/recall averaged over items; F is their harmonic
// mean. Noise points become singletons.
BCubedScore bcubed_f(const ClusteringResult& pred, const std::vector<int>& truth);

struct VerificationPair {
    std::size_t a = 0;
    std::size_t b = 0;
    bool same = false;
};

struct TarAtFar {
    double far = 0.0;
    double tar = 0.0;
    double threshold = 0.0;
};

struct VerificationReport {
    std::vector<double> bin_left;    // histogram bin edges, width 0.02 over [-1, 1]
    std::vector<std::size_t> pos_counts;
    std::vector<std::size_t> neg_counts;
    double mu_pos = 0.0;             // expectation of positive-pair cosines
    double mu_neg = 0.0;
    double margin = 0.0;             // mu_pos - mu_neg
    double best_accuracy = 0.0;
    double best_threshold = 0.0;
    std::vector<TarAtFar> tar_at_far;
    std::size_t num_pos = 0;
    std::size_t num_neg = 0;
};

inline const std::vector<double> kDefaultFarLevels{1e-1, 1e-2, 1e-3};

// Embeds both sides of every pair with the model and reports the cosine
// similarity distributions. TAR@FAR accepts pairs strictly above the
// smallest threshold whose false-accept rate stays within the target.
VerificationReport verification_eval(const MlpModel& model, const std::vector<Vec>& inputs,
                                     const std::vector<VerificationPair>& pairs,
                                     const std::vector<double>& far_levels = kDefaultFarLevels,
                                     double bin_width = 0.02);

// Same report from precomputed embeddings.
VerificationReport verification_eval_embeddings(const std::vector<Vec>& embeddings,
                                                const std::vector<VerificationPair>& pairs,
                                                const std::vector<double>& far_levels = kDefaultFarLevels,
                                                double bin_width = 0.02);

// Uniform same-class / cross-class index pairs without duplicates.
std::vector<VerificationPair> make_pairs(const std::vector<int>& labels,
                                         std::size_t num_pos, std::size_t num_neg, Rng& rng);

}  // namespace cml
