#include "cml/eval.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <set>

#include "cml/errors.hpp"

namespace cml {

namespace {

std::size_t nearest_center(const Vec& point, const std::vector<Vec>& centers) {
    std::size_t best = 0;
    double best_d = squared_distance(point, centers[0]);
    for (std::size_t c = 1; c < centers.size(); ++c) {
        const double d = squared_distance(point, centers[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace

ClusteringResult kmeans(const std::vector<Vec>& features, std::size_t k,
                        std::size_t max_iters, Rng& rng) {
    const std::size_t n = features.size();
    if (k < 1 || k > n) throw InvalidKError("kmeans: k outside [1, N]");

    // k-means++ seeding.
    std::vector<Vec> centers;
    centers.reserve(k);
    std::vector<char> chosen(n, 0);
    const std::size_t first = static_cast<std::size_t>(rng.uniform_below(n));
    centers.push_back(features[first]);
    chosen[first] = 1;
    Vec d2(n);
    while (centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = squared_distance(features[i], centers.back());
            if (centers.size() > 1) {
                double best = d2[i];
                for (std::size_t c = 0; c + 1 < centers.size(); ++c)
                    best = std::min(best, squared_distance(features[i], centers[c]));
                d2[i] = best;
            }
            total += d2[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        }
        if (pick == n || chosen[pick]) {
            // All remaining mass sits on duplicates; take the lowest unchosen index.
            pick = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (!chosen[i]) {
                    pick = i;
                    break;
                }
            }
            if (pick == n) pick = 0;
        }
        centers.push_back(features[pick]);
        chosen[pick] = 1;
    }

    ClusteringResult result;
    result.num_clusters = k;
    result.assignment.assign(n, 0);
    std::vector<int> previous(n, -1);

    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = nearest_center(features[i], centers);
            result.assignment[i] = static_cast<int>(c);
            inertia += squared_distance(features[i], centers[c]);
        }
        result.inertia_history.push_back(inertia);
        if (result.assignment == previous) break;
        previous = result.assignment;

        const std::size_t dim = features.front().size();
        std::vector<Vec> sums(k, Vec(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            axpy(1.0, features[i], sums[result.assignment[i]]);
            counts[result.assignment[i]] += 1;
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // Reseed an emptied cluster with the point farthest from its
                // current center.
                std::size_t far_idx = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d = squared_distance(
                        features[i], centers[static_cast<std::size_t>(result.assignment[i])]);
                    if (d > far_d) {
                        far_d = d;
                        far_idx = i;
                    }
                }
                centers[c] = features[far_idx];
                continue;
            }
            const double inv = 1.0 / static_cast<double>(counts[c]);
            for (std::size_t t = 0; t < dim; ++t) centers[c][t] = sums[c][t] * inv;
        }
    }
    return result;
}

ClusteringResult dbscan(const std::vector<Vec>& features, double eps, std::size_t min_pts) {
    if (!(eps > 0.0) || min_pts < 1) throw InvalidParamsError("dbscan: bad eps or min_pts");
    const std::size_t n = features.size();
    const double eps2 = eps * eps;

    constexpr int kUnvisited = -2;
    constexpr int kNoise = -1;
    std::vector<int> labels(n, kUnvisited);

    const auto region_query = [&](std::size_t p) {
        std::vector<std::size_t> neighbors;
        for (std::size_t q = 0; q < n; ++q)
            if (squared_distance(features[p], features[q]) <= eps2) neighbors.push_back(q);
        return neighbors;
    };

    int next_cluster = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != kUnvisited) continue;
        const auto neighbors = region_query(i);
        if (neighbors.size() < min_pts) {
            labels[i] = kNoise;
            continue;
        }
        const int cluster = next_cluster++;
        labels[i] = cluster;
        std::deque<std::size_t> seeds(neighbors.begin(), neighbors.end());
        while (!seeds.empty()) {
            const std::size_t q = seeds.front();
            seeds.pop_front();
            if (labels[q] == kNoise) labels[q] = cluster;  // border point
            if (labels[q] != kUnvisited) continue;
            labels[q] = cluster;
            const auto q_neighbors = region_query(q);
            if (q_neighbors.size() >= min_pts)
                seeds.insert(seeds.end(), q_neighbors.begin(), q_neighbors.end());
        }
    }

    ClusteringResult result;
    result.assignment = std::move(labels);
    result.num_clusters = static_cast<std::size_t>(next_cluster);
    return result;
}

namespace {

// Noise entries become fresh singleton clusters.
std::vector<int> desingularize(const std::vector<int>& assignment) {
    int max_id = -1;
    for (int a : assignment) max_id = std::max(max_id, a);
    std::vector<int> out(assignment);
    int next = max_id + 1;
    for (int& a : out)
        if (a < 0) a = next++;
    return out;
}

struct Contingency {
    std::map<int, std::map<int, std::size_t>> counts;  // pred -> truth -> n
    std::map<int, std::size_t> pred_sizes;
    std::map<int, std::size_t> truth_sizes;
    std::size_t n = 0;
};

Contingency contingency_table(const std::vector<int>& pred, const std::vector<int>& truth) {
    Contingency c;
    c.n = pred.size();
    for (std::size_t i = 0; i < pred.size(); ++i) {
        c.counts[pred[i]][truth[i]] += 1;
        c.pred_sizes[pred[i]] += 1;
        c.truth_sizes[truth[i]] += 1;
    }
    return c;
}

double entropy(const std::map<int, std::size_t>& sizes, std::size_t n) {
    double h = 0.0;
    for (const auto& [id, count] : sizes) {
        const double p = static_cast<double>(count) / static_cast<double>(n);
        h -= p * std::log(p);
    }
    return h;
}

bool identical_partitions(const Contingency& c) {
    // Identical up to relabeling: every pred cluster maps onto exactly one
    // truth class of the same size, bijectively.
    if (c.pred_sizes.size() != c.truth_sizes.size()) return false;
    for (const auto& [p, row] : c.counts) {
        if (row.size() != 1) return false;
        const auto& [t, count] = *row.begin();
        if (c.truth_sizes.at(t) != count) return false;
    }
    return true;
}

}  // namespace

double nmi(const ClusteringResult& pred, const std::vector<int>& truth) {
    if (pred.assignment.size() != truth.size())
        throw LengthMismatchError("nmi: length mismatch");
    if (truth.empty()) throw EmptyInputError("nmi: empty partitions");

    const std::vector<int> p = desingularize(pred.assignment);
    const Contingency c = contingency_table(p, truth);

    const double hp = entropy(c.pred_sizes, c.n);
    const double ht = entropy(c.truth_sizes, c.n);
    if (hp <= 0.0 || ht <= 0.0)
        return identical_partitions(c) ? 1.0 : 0.0;

    double mi = 0.0;
    const double n = static_cast<double>(c.n);
    for (const auto& [pid, row] : c.counts) {
        for (const auto& [tid, count] : row) {
            const double nij = static_cast<double>(count);
            mi += (nij / n) * std::log(n * nij /
                                       (static_cast<double>(c.pred_sizes.at(pid)) *
                                        static_cast<double>(c.truth_sizes.at(tid))));
        }
    }
    return std::clamp(mi / std::sqrt(hp * ht), 0.0, 1.0);
}

BCubedScore bcubed_f(const ClusteringResult& pred, const std::vector<int>& truth) {
    if (pred.assignment.size() != truth.size())
        throw LengthMismatchError("bcubed_f: length mismatch");
    if (truth.empty()) throw EmptyInputError("bcubed_f: empty partitions");

    const std::vector<int> p = desingularize(pred.assignment);
    const Contingency c = contingency_table(p, truth);

    BCubedScore score;
    const double n = static_cast<double>(c.n);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double both = static_cast<double>(c.counts.at(p[i]).at(truth[i]));
        score.precision += both / static_cast<double>(c.pred_sizes.at(p[i]));
        score.recall += both / static_cast<double>(c.truth_sizes.at(truth[i]));
    }
    score.precision /= n;
    score.recall /= n;
    score.f = (score.precision + score.recall > 0.0)
                  ? 2.0 * score.precision * score.recall / (score.precision + score.recall)
                  : 0.0;
    return score;
}

VerificationReport verification_eval_embeddings(const std::vector<Vec>& embeddings,
                                                const std::vector<VerificationPair>& pairs,
                                                const std::vector<double>& far_levels,
                                                double bin_width) {
    std::vector<double> pos_scores;
    std::vector<double> neg_scores;
    for (const auto& pair : pairs) {
        const double c = cosine(embeddings.at(pair.a), embeddings.at(pair.b));
        (pair.same ? pos_scores : neg_scores).push_back(c);
    }
    if (pos_scores.empty()) throw NoPositivePairsError("verification: no positive pairs");
    if (neg_scores.empty()) throw NoNegativePairsError("verification: no negative pairs");

    VerificationReport report;
    report.num_pos = pos_scores.size();
    report.num_neg = neg_scores.size();

    const std::size_t num_bins = static_cast<std::size_t>(std::llround(2.0 / bin_width));
    report.bin_left.resize(num_bins);
    for (std::size_t b = 0; b < num_bins; ++b)
        report.bin_left[b] = -1.0 + static_cast<double>(b) * bin_width;
    report.pos_counts.assign(num_bins, 0);
    report.neg_counts.assign(num_bins, 0);
    const auto bin_of = [&](double c) {
        const auto idx = static_cast<std::size_t>(
            std::clamp(std::floor((c + 1.0) / bin_width), 0.0,
                       static_cast<double>(num_bins - 1)));
        return idx;
    };
    for (double c : pos_scores) report.pos_counts[bin_of(c)] += 1;
    for (double c : neg_scores) report.neg_counts[bin_of(c)] += 1;

    for (double c : pos_scores) report.mu_pos += c;
    report.mu_pos /= static_cast<double>(pos_scores.size());
    for (double c : neg_scores) report.mu_neg += c;
    report.mu_neg /= static_cast<double>(neg_scores.size());
    report.margin = report.mu_pos - report.mu_neg;

    // Best accuracy over thresholds; accept when score >= threshold.
    {
        std::vector<std::pair<double, bool>> scored;
        scored.reserve(pairs.size());
        for (double c : pos_scores) scored.emplace_back(c, true);
        for (double c : neg_scores) scored.emplace_back(c, false);
        std::sort(scored.begin(), scored.end(),
                  [](const auto& x, const auto& y) { return x.first > y.first; });

        // Threshold above everything: every pair rejected.
        std::size_t tp = 0;
        std::size_t fp = 0;
        double best_acc = static_cast<double>(neg_scores.size()) /
                          static_cast<double>(scored.size());
        double best_thr = 1.0 + bin_width;
        std::size_t i = 0;
        while (i < scored.size()) {
            const double t = scored[i].first;
            while (i < scored.size() && scored[i].first == t) {
                if (scored[i].second) ++tp;
                else ++fp;
                ++i;
            }
            const std::size_t tn = neg_scores.size() - fp;
            const double acc = static_cast<double>(tp + tn) / static_cast<double>(scored.size());
            if (acc > best_acc) {
                best_acc = acc;
                best_thr = t;
            }
        }
        report.best_accuracy = best_acc;
        report.best_threshold = best_thr;
    }

    // TAR at each FAR: accept strictly above the (1 - FAR) negative quantile.
    {
        std::vector<double> neg_desc(neg_scores);
        std::sort(neg_desc.begin(), neg_desc.end(), std::greater<>());
        std::vector<double> pos_sorted(pos_scores);
        std::sort(pos_sorted.begin(), pos_sorted.end());
        for (double far : far_levels) {
            const auto allowed = static_cast<std::size_t>(
                std::floor(far * static_cast<double>(neg_desc.size())));
            TarAtFar entry;
            entry.far = far;
            if (allowed >= neg_desc.size()) {
                entry.threshold = -2.0;
                entry.tar = 1.0;
            } else {
                entry.threshold = neg_desc[allowed];
                const auto above = pos_sorted.end() -
                                   std::upper_bound(pos_sorted.begin(), pos_sorted.end(),
                                                    entry.threshold);
                entry.tar = static_cast<double>(above) / static_cast<double>(pos_sorted.size());
            }
            report.tar_at_far.push_back(entry);
        }
    }
    return report;
}

VerificationReport verification_eval(const MlpModel& model, const std::vector<Vec>& inputs,
                                     const std::vector<VerificationPair>& pairs,
                                     const std::vector<double>& far_levels,
                                     double bin_width) {
    // Embed only the indices the pair list touches.
    std::set<std::size_t> needed;
    for (const auto& pair : pairs) {
        needed.insert(pair.a);
        needed.insert(pair.b);
    }
    std::vector<Vec> embeddings(inputs.size());
    for (std::size_t idx : needed) embeddings.at(idx) = forward(model, inputs.at(idx));
    return verification_eval_embeddings(embeddings, pairs, far_levels, bin_width);
}

std::vector<VerificationPair> make_pairs(const std::vector<int>& labels,
                                         std::size_t num_pos, std::size_t num_neg, Rng& rng) {
    const std::size_t n = labels.size();
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);

    // Positive pair space: same-class index pairs, enumerated class by class.
    std::vector<const std::vector<std::size_t>*> classes;
    std::vector<std::uint64_t> class_pair_offsets;
    std::uint64_t total_pos = 0;
    for (const auto& [label, members] : by_class) {
        classes.push_back(&members);
        class_pair_offsets.push_back(total_pos);
        const std::uint64_t m = members.size();
        total_pos += m * (m - 1) / 2;
    }
    const std::uint64_t total_all = static_cast<std::uint64_t>(n) * (n - 1) / 2;
    const std::uint64_t total_neg = total_all - total_pos;

    if (num_pos > total_pos)
        throw InsufficientDataError("make_pairs: not enough same-class pairs");
    if (num_neg > total_neg)
        throw InsufficientDataError("make_pairs: not enough cross-class pairs");

    const auto encode = [n](std::size_t a, std::size_t b) {
        if (a > b) std::swap(a, b);
        return static_cast<std::uint64_t>(a) * n + b;
    };

    std::vector<VerificationPair> pairs;
    std::set<std::uint64_t> used;

    // Positives: uniform over the same-class pair space.
    while (pairs.size() < num_pos) {
        const std::uint64_t r = rng.uniform_below(total_pos);
        std::size_t c = 0;
        while (c + 1 < class_pair_offsets.size() && class_pair_offsets[c + 1] <= r) ++c;
        std::uint64_t local = r - class_pair_offsets[c];
        const auto& members = *classes[c];
        // Decode the triangular pair index (i, j), i < j.
        std::size_t i = 0;
        std::uint64_t row = members.size() - 1;
        while (local >= row) {
            local -= row;
            row -= 1;
            ++i;
        }
        const std::size_t j = i + 1 + static_cast<std::size_t>(local);
        const std::size_t a = members[i];
        const std::size_t b = members[j];
        if (!used.insert(encode(a, b)).second) continue;
        pairs.push_back({a, b, true});
    }

    std::size_t added_neg = 0;
    while (added_neg < num_neg) {
        const std::size_t a = static_cast<std::size_t>(rng.uniform_below(n));
        const std::size_t b = static_cast<std::size_t>(rng.uniform_below(n));
        if (a == b || labels[a] == labels[b]) continue;
        if (!used.insert(encode(a, b)).second) continue;
        pairs.push_back({std::min(a, b), std::max(a, b), false});
        ++added_neg;
    }
    return pairs;
}

}  // namespace cml
