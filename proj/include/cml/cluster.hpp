#pragma once

#include <deque>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "cml/numeric.hpp"
#include "cml/rng.hpp"

namespace cml {

// Unit-norm embedding with its class label (labels are 1-based, in [1, K]).
struct LabeledFeature {
    Vec feature;
    int label = 0;
};

// FIFO of recent momentum-encoder outputs. Oldest-first eviction.
class FeatureQueue {
public:
    explicit FeatureQueue(std::size_t capacity) : capacity_(capacity) {}

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return entries_.size(); }
    const std::deque<LabeledFeature>& entries() const { return entries_; }

    // Appends the batch in order, evicting from the front as needed.
    // Throws NonUnitFeatureError if any feature norm is off unit by > 1e-9.
    void enqueue(std::span<const LabeledFeature> batch);

    // Arithmetic mean of class-k features (raw, not renormalized).
    // Throws EmptyClassError when the class is absent.
    Vec class_center(int k) const;

    // One pass over the queue: raw mean per class present.
    std::map<int, Vec> class_centers() const;

    std::size_t class_count(int k) const;

private:
    std::size_t capacity_;
    std::deque<LabeledFeature> entries_;
};

// Per-class EMA centers C_k in raw mean space. The first observation of a
// class copies the queue mean directly instead of decaying from zero.
class ClusterCenterBank {
public:
    explicit ClusterCenterBank(double momentum) : momentum_(momentum) {}

    double momentum() const { return momentum_; }
    bool is_initialized(int k) const { return centers_.count(k) > 0; }
    std::size_t size() const { return centers_.size(); }
    const std::map<int, Vec>& centers() const { return centers_; }

    // Throws UninitializedCenterError when the class has never been updated.
    const Vec& center(int k) const;

    void update(int k, std::span<const double> center_q);

private:
    double momentum_;
    std::map<int, Vec> centers_;
};

// Per-class concentration phi: sum of distances to the bank center over
// |Q_k| * ln(|Q_k| + alpha). Natural log; smaller phi means a tighter class.
struct ConcentrationTable {
    std::map<int, double> phi;
    double alpha = 10.0;
    double phi_min = 0.0;
    double phi_max = 0.0;

    bool empty() const { return phi.empty(); }
    bool has(int k) const { return phi.count(k) > 0; }
};

// Throws EmptyClassError / UninitializedCenterError per missing precondition.
double concentration(const FeatureQueue& queue, const ClusterCenterBank& bank,
                     int k, double alpha);

// phi for every class present in the queue with an initialized center;
// classes failing preconditions are skipped. Extrema over the included set.
ConcentrationTable refresh_concentrations(const FeatureQueue& queue,
                                          const ClusterCenterBank& bank,
                                          double alpha);

// M sampled classes handed to the contrastive losses: unit-normalized center
// copies plus their phi values as temperatures.
struct ClassSample {
    std::vector<int> center_ids;
    std::vector<Vec> centers;
    std::vector<double> temps;

    std::size_t size() const { return center_ids.size(); }
};

// Includes every required class, then fills up to M by uniform draws without
// replacement from the remaining classes that have both a bank center and a
// phi entry. M is clipped to the number of such classes; required classes
// beyond M extend the sample rather than being dropped.
// Throws RequiredClassUninitializedError if a required class lacks either.
ClassSample sample_classes(const ClusterCenterBank& bank, const ConcentrationTable& table,
                           std::span<const int> required, std::size_t m, Rng& rng);

}  // namespace cml
