#include "cml/cluster.hpp"

#include <algorithm>
#include <cmath>

namespace cml {

void FeatureQueue::enqueue(std::span<const LabeledFeature> batch) {
    for (const auto& item : batch) {
        if (std::abs(norm2(item.feature) - 1.0) > 1e-9)
            throw NonUnitFeatureError("enqueue: feature norm off unit by > 1e-9");
    }
    for (const auto& item : batch) {
        if (entries_.size() == capacity_) entries_.pop_front();
        entries_.push_back(item);
    }
}

Vec FeatureQueue::class_center(int k) const {
    Vec sum;
    std::size_t count = 0;
    for (const auto& item : entries_) {
        if (item.label != k) continue;
        if (sum.empty()) sum.assign(item.feature.size(), 0.0);
        axpy(1.0, item.feature, sum);
        ++count;
    }
    if (count == 0) throw EmptyClassError("class_center: class absent from queue");
    const double inv = 1.0 / static_cast<double>(count);
    for (double& x : sum) x *= inv;
    return sum;
}

std::map<int, Vec> FeatureQueue::class_centers() const {
    std::map<int, Vec> sums;
    std::map<int, std::size_t> counts;
    for (const auto& item : entries_) {
        auto [it, inserted] = sums.try_emplace(item.label, Vec(item.feature.size(), 0.0));
        axpy(1.0, item.feature, it->second);
        counts[item.label] += 1;
    }
    for (auto& [k, sum] : sums) {
        const double inv = 1.0 / static_cast<double>(counts[k]);
        for (double& x : sum) x *= inv;
    }
    return sums;
}

std::size_t FeatureQueue::class_count(int k) const {
    std::size_t count = 0;
    for (const auto& item : entries_)
        if (item.label == k) ++count;
    return count;
}

const Vec& ClusterCenterBank::center(int k) const {
    auto it = centers_.find(k);
    if (it == centers_.end())
        throw UninitializedCenterError("bank: class has no center yet");
    return it->second;
}

void ClusterCenterBank::update(int k, std::span<const double> center_q) {
    for (double x : center_q)
        if (!std::isfinite(x)) throw InvalidParamsError("bank update: non-finite center");
    auto it = centers_.find(k);
    if (it == centers_.end()) {
        centers_.emplace(k, Vec(center_q.begin(), center_q.end()));
        return;
    }
    Vec& c = it->second;
    if (c.size() != center_q.size())
        throw ShapeMismatchError("bank update: center dim changed");
    for (std::size_t i = 0; i < c.size(); ++i)
        c[i] = momentum_ * c[i] + (1.0 - momentum_) * center_q[i];
}

double concentration(const FeatureQueue& queue, const ClusterCenterBank& bank,
                     int k, double alpha) {
    const Vec& center = bank.center(k);
    double dist_sum = 0.0;
    std::size_t count = 0;
    for (const auto& item : queue.entries()) {
        if (item.label != k) continue;
        dist_sum += std::sqrt(squared_distance(item.feature, center));
        ++count;
    }
    if (count == 0) throw EmptyClassError("concentration: class absent from queue");
    const double denom = static_cast<double>(count) *
                         std::log(static_cast<double>(count) + alpha);
    return dist_sum / denom;
}

ConcentrationTable refresh_concentrations(const FeatureQueue& queue,
                                          const ClusterCenterBank& bank,
                                          double alpha) {
    ConcentrationTable table;
    table.alpha = alpha;

    // Single pass: distance sums per class against the bank centers.
    std::map<int, double> dist_sums;
    std::map<int, std::size_t> counts;
    for (const auto& item : queue.entries()) {
        if (!bank.is_initialized(item.label)) continue;
        dist_sums[item.label] +=
            std::sqrt(squared_distance(item.feature, bank.center(item.label)));
        counts[item.label] += 1;
    }
    for (const auto& [k, dist_sum] : dist_sums) {
        const double n = static_cast<double>(counts[k]);
        table.phi[k] = dist_sum / (n * std::log(n + alpha));
    }
    if (!table.phi.empty()) {
        table.phi_min = table.phi.begin()->second;
        table.phi_max = table.phi_min;
        for (const auto& [k, p] : table.phi) {
            table.phi_min = std::min(table.phi_min, p);
            table.phi_max = std::max(table.phi_max, p);
        }
    }
    return table;
}

ClassSample sample_classes(const ClusterCenterBank& bank, const ConcentrationTable& table,
                           std::span<const int> required, std::size_t m, Rng& rng) {
    std::set<int> required_set(required.begin(), required.end());
    for (int k : required_set) {
        if (!bank.is_initialized(k) || !table.has(k))
            throw RequiredClassUninitializedError(
                "sample_classes: required class lacks center or phi");
    }

    // Pool: classes usable by the losses (bank center + phi), minus required.
    std::vector<int> pool;
    for (const auto& [k, p] : table.phi) {
        if (bank.is_initialized(k) && required_set.count(k) == 0) pool.push_back(k);
    }

    const std::size_t available = pool.size() + required_set.size();
    std::size_t target = std::min(m, available);
    if (target < required_set.size()) target = required_set.size();

    ClassSample sample;
    sample.center_ids.assign(required_set.begin(), required_set.end());
    const std::size_t remaining = target - sample.center_ids.size();
    if (remaining == pool.size()) {
        // Whole pool requested: no draws, same result for any rng state.
        sample.center_ids.insert(sample.center_ids.end(), pool.begin(), pool.end());
    } else {
        for (std::size_t i = 0; i < remaining; ++i) {
            const std::size_t j = static_cast<std::size_t>(rng.uniform_below(pool.size() - i));
            sample.center_ids.push_back(pool[j]);
            std::swap(pool[j], pool[pool.size() - 1 - i]);
        }
    }

    sample.centers.reserve(sample.center_ids.size());
    sample.temps.reserve(sample.center_ids.size());
    for (int k : sample.center_ids) {
        sample.centers.push_back(l2_normalize(bank.center(k)));
        sample.temps.push_back(table.phi.at(k));
    }
    return sample;
}

}  // namespace cml
