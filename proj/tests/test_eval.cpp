#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <climits>
#include <cmath>
#include <set>

#include "cml/eval.hpp"

using namespace cml;

namespace {

// Brute-force oracles computed from the definitions with explicit loops;
// independent of the contingency-map implementations.

double nmi_oracle(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t n = a.size();
    const auto count_pair = [n](const std::vector<int>& x, const std::vector<int>& y, int vx,
                                int vy) {
        std::size_t c = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (x[i] == vx && (vy == INT_MIN || y[i] == vy)) ++c;
        return c;
    };
    std::set<int> va(a.begin(), a.end());
    std::set<int> vb(b.begin(), b.end());

    double ha = 0.0;
    for (int v : va) {
        const double p = static_cast<double>(count_pair(a, b, v, INT_MIN)) / n;
        ha -= p * std::log(p);
    }
    double hb = 0.0;
    for (int v : vb) {
        const double p = static_cast<double>(count_pair(b, a, v, INT_MIN)) / n;
        hb -= p * std::log(p);
    }
    if (ha <= 0.0 || hb <= 0.0) {
        // Identical partitions up to relabeling?
        bool identical = true;
        for (std::size_t i = 0; i < n && identical; ++i)
            for (std::size_t j = i + 1; j < n && identical; ++j)
                if ((a[i] == a[j]) != (b[i] == b[j])) identical = false;
        return identical ? 1.0 : 0.0;
    }

    double mi = 0.0;
    for (int x : va) {
        for (int y : vb) {
            const std::size_t nij = count_pair(a, b, x, y);
            if (nij == 0) continue;
            const double pij = static_cast<double>(nij) / n;
            const double px = static_cast<double>(count_pair(a, b, x, INT_MIN)) / n;
            const double py = static_cast<double>(count_pair(b, a, y, INT_MIN)) / n;
            mi += pij * std::log(pij / (px * py));
        }
    }
    return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

BCubedScore bcubed_oracle(const std::vector<int>& pred, const std::vector<int>& truth) {
    const std::size_t n = pred.size();
    BCubedScore s;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t same_cluster = 0, same_class = 0, both = 0;
        for (std::size_t j = 0; j < n; ++j) {
            const bool c = pred[j] == pred[i];
            const bool t = truth[j] == truth[i];
            if (c) ++same_cluster;
            if (t) ++same_class;
            if (c && t) ++both;
        }
        s.precision += static_cast<double>(both) / same_cluster;
        s.recall += static_cast<double>(both) / same_class;
    }
    s.precision /= n;
    s.recall /= n;
    s.f = (s.precision + s.recall > 0) ? 2 * s.precision * s.recall / (s.precision + s.recall)
                                       : 0.0;
    return s;
}

ClusteringResult as_result(std::vector<int> assignment) {
    ClusteringResult r;
    int max_id = -1;
    for (int a : assignment) max_id = std::max(max_id, a);
    r.num_clusters = static_cast<std::size_t>(max_id + 1);
    r.assignment = std::move(assignment);
    return r;
}

std::vector<Vec> blob(const Vec& center, double spread, std::size_t count, Rng& rng) {
    std::vector<Vec> points;
    for (std::size_t i = 0; i < count; ++i) {
        Vec p = center;
        for (double& x : p) x += spread * rng.normal();
        points.push_back(p);
    }
    return points;
}

}  // namespace

TEST_CASE("kmeans: k = 1 puts everything in cluster 0") {
    Rng rng(1);
    std::vector<Vec> points = blob(Vec{0.0, 0.0}, 1.0, 10, rng);
    const ClusteringResult r = kmeans(points, 1, 50, rng);
    CHECK(r.num_clusters == 1);
    for (int a : r.assignment) CHECK(a == 0);
}

TEST_CASE("kmeans: k = N with distinct points gives singletons and zero inertia") {
    std::vector<Vec> points;
    for (int i = 0; i < 6; ++i) points.push_back(Vec{static_cast<double>(i), 0.0});
    Rng rng(2);
    const ClusteringResult r = kmeans(points, 6, 50, rng);
    std::set<int> ids(r.assignment.begin(), r.assignment.end());
    CHECK(ids.size() == 6);
    CHECK(r.inertia_history.back() == 0.0);
}

TEST_CASE("kmeans: recovers well-separated blobs") {
    Rng rng(3);
    std::vector<Vec> points;
    std::vector<int> truth;
    const std::vector<Vec> centers{Vec{0.0, 0.0}, Vec{50.0, 0.0}, Vec{0.0, 50.0}};
    for (int c = 0; c < 3; ++c) {
        for (const Vec& p : blob(centers[c], 0.5, 20, rng)) {
            points.push_back(p);
            truth.push_back(c);
        }
    }
    const ClusteringResult r = kmeans(points, 3, 100, rng);
    CHECK(nmi(r, truth) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("kmeans: inertia is non-increasing") {
    Rng rng(4);
    std::vector<Vec> points = blob(Vec{0.0, 0.0, 0.0}, 2.0, 60, rng);
    const ClusteringResult r = kmeans(points, 5, 100, rng);
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
        CHECK(r.inertia_history[i] <= r.inertia_history[i - 1] + 1e-9);
}

TEST_CASE("kmeans: invalid k") {
    Rng rng(5);
    std::vector<Vec> points = blob(Vec{0.0}, 1.0, 4, rng);
    CHECK_THROWS_AS(kmeans(points, 0, 10, rng), InvalidKError);
    CHECK_THROWS_AS(kmeans(points, 5, 10, rng), InvalidKError);
}

TEST_CASE("dbscan: identical points form one cluster") {
    std::vector<Vec> points(7, Vec{1.0, 2.0});
    const ClusteringResult r = dbscan(points, 0.5, 7);
    CHECK(r.num_clusters == 1);
    for (int a : r.assignment) CHECK(a == 0);
}

TEST_CASE("dbscan: isolated points are all noise") {
    std::vector<Vec> points;
    for (int i = 0; i < 5; ++i) points.push_back(Vec{10.0 * i, 0.0});
    const ClusteringResult r = dbscan(points, 1.0, 2);
    CHECK(r.num_clusters == 0);
    for (int a : r.assignment) CHECK(a == -1);
}

TEST_CASE("dbscan: two blobs and an outlier") {
    Rng rng(6);
    std::vector<Vec> points;
    for (const Vec& p : blob(Vec{0.0, 0.0}, 0.05, 12, rng)) points.push_back(p);
    for (const Vec& p : blob(Vec{10.0, 0.0}, 0.05, 12, rng)) points.push_back(p);
    points.push_back(Vec{100.0, 100.0});

    const ClusteringResult r = dbscan(points, 0.5, 4);
    CHECK(r.num_clusters == 2);
    CHECK(r.assignment.back() == -1);
    for (std::size_t i = 0; i < 12; ++i) CHECK(r.assignment[i] == r.assignment[0]);
    for (std::size_t i = 12; i < 24; ++i) CHECK(r.assignment[i] == r.assignment[12]);
    CHECK(r.assignment[0] != r.assignment[12]);
}

TEST_CASE("dbscan: invariant to global translation") {
    Rng rng(7);
    std::vector<Vec> points;
    for (const Vec& p : blob(Vec{0.0, 0.0}, 0.3, 20, rng)) points.push_back(p);
    for (const Vec& p : blob(Vec{5.0, 5.0}, 0.3, 20, rng)) points.push_back(p);
    const ClusteringResult base = dbscan(points, 0.8, 3);

    std::vector<Vec> shifted = points;
    for (Vec& p : shifted) {
        p[0] += 123.0;
        p[1] -= 55.5;
    }
    const ClusteringResult moved = dbscan(shifted, 0.8, 3);
    CHECK(base.assignment == moved.assignment);
}

TEST_CASE("dbscan: bad parameters") {
    std::vector<Vec> points(3, Vec{0.0});
    CHECK_THROWS_AS(dbscan(points, 0.0, 2), InvalidParamsError);
    CHECK_THROWS_AS(dbscan(points, 1.0, 0), InvalidParamsError);
}

TEST_CASE("nmi examples") {
    CHECK(nmi(as_result({0, 0, 1, 1}), {5, 5, 9, 9}) == 1.0);
    CHECK(nmi(as_result({1, 1, 0, 0}), {5, 5, 9, 9}) == 1.0);
    CHECK(nmi(as_result({0, 0, 0, 0}), {0, 0, 1, 1}) == 0.0);
    CHECK(nmi(as_result({0, 0, 1, 1}), {0, 1, 0, 1}) == 0.0);
    CHECK(nmi(as_result({0, 0}), {3, 3}) == 1.0);  // both trivial and identical
    CHECK_THROWS_AS(nmi(as_result({0, 1}), {0, 1, 2}), LengthMismatchError);
}

TEST_CASE("nmi treats noise as singletons") {
    // Noise points become their own clusters; with truth distinguishing
    // them, the score rises above the all-in-one baseline.
    const double with_noise = nmi(as_result({0, 0, -1, -1}), {0, 0, 1, 2});
    const double one_cluster = nmi(as_result({0, 0, 0, 0}), {0, 0, 1, 2});
    CHECK(with_noise == 1.0);
    CHECK(one_cluster == 0.0);
}

TEST_CASE("bcubed examples") {
    const BCubedScore perfect = bcubed_f(as_result({0, 0, 1, 1}), {7, 7, 8, 8});
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f == 1.0);

    const BCubedScore lumped = bcubed_f(as_result({0, 0, 0, 0}), {0, 0, 1, 1});
    CHECK(lumped.precision == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(lumped.recall == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(lumped.f == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    const BCubedScore shattered = bcubed_f(as_result({0, 1, 2, 3}), {0, 0, 1, 1});
    CHECK(shattered.precision == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(shattered.recall == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(shattered.f == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("nmi and bcubed match brute force on random partitions") {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.uniform_below(7);
        std::vector<int> pred(n), truth(n);
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] = static_cast<int>(rng.uniform_below(4));
            truth[i] = static_cast<int>(rng.uniform_below(4));
        }
        const double got = nmi(as_result(pred), truth);
        CHECK(got == doctest::Approx(nmi_oracle(pred, truth)).epsilon(1e-12));
        CHECK(got >= 0.0);
        CHECK(got <= 1.0);

        const BCubedScore bs = bcubed_f(as_result(pred), truth);
        const BCubedScore os = bcubed_oracle(pred, truth);
        CHECK(bs.precision == doctest::Approx(os.precision).epsilon(1e-12));
        CHECK(bs.recall == doctest::Approx(os.recall).epsilon(1e-12));
        CHECK(bs.f == doctest::Approx(os.f).epsilon(1e-12));
    }
}

TEST_CASE("verification: ideal embeddings give margin 1 and TAR 1") {
    // Two orthogonal classes, identical embeddings within each class.
    std::vector<Vec> embeddings{Vec{1.0, 0.0}, Vec{1.0, 0.0}, Vec{0.0, 1.0}, Vec{0.0, 1.0}};
    std::vector<VerificationPair> pairs{
        {0, 1, true}, {2, 3, true}, {0, 2, false}, {1, 3, false}};
    const VerificationReport report = verification_eval_embeddings(embeddings, pairs);
    CHECK(report.mu_pos == doctest::Approx(1.0));
    CHECK(report.mu_neg == doctest::Approx(0.0));
    CHECK(report.margin == doctest::Approx(1.0));
    CHECK(report.best_accuracy == 1.0);
    for (const auto& t : report.tar_at_far) CHECK(t.tar == 1.0);
}

TEST_CASE("verification: histogram counts sum to pair counts") {
    Rng rng(9);
    std::vector<Vec> embeddings;
    for (int i = 0; i < 20; ++i) {
        Vec v(4);
        for (double& x : v) x = rng.normal();
        embeddings.push_back(l2_normalize(v));
    }
    std::vector<int> labels;
    for (int i = 0; i < 20; ++i) labels.push_back(i % 4);
    Rng pair_rng(10);
    const auto pairs = make_pairs(labels, 15, 25, pair_rng);
    const VerificationReport report = verification_eval_embeddings(embeddings, pairs);

    std::size_t pos_total = 0, neg_total = 0;
    for (std::size_t b = 0; b < report.pos_counts.size(); ++b) {
        pos_total += report.pos_counts[b];
        neg_total += report.neg_counts[b];
    }
    CHECK(pos_total == report.num_pos);
    CHECK(neg_total == report.num_neg);
    CHECK(report.margin == report.mu_pos - report.mu_neg);
}

TEST_CASE("verification: TAR non-decreasing in FAR") {
    Rng rng(11);
    std::vector<Vec> embeddings;
    std::vector<int> labels;
    for (int c = 0; c < 3; ++c) {
        Vec center(6);
        for (double& x : center) x = rng.normal();
        center = l2_normalize(center);
        for (int i = 0; i < 10; ++i) {
            Vec v = center;
            for (double& x : v) x += 0.4 * rng.normal();
            embeddings.push_back(l2_normalize(v));
            labels.push_back(c);
        }
    }
    Rng pair_rng(12);
    const auto pairs = make_pairs(labels, 40, 60, pair_rng);
    const std::vector<double> fars{1e-3, 1e-2, 5e-2, 1e-1, 0.5, 1.0};
    const VerificationReport report =
        verification_eval_embeddings(embeddings, pairs, fars);
    for (std::size_t i = 1; i < report.tar_at_far.size(); ++i)
        CHECK(report.tar_at_far[i].tar >= report.tar_at_far[i - 1].tar);
}

TEST_CASE("verification: errors without positives or negatives") {
    std::vector<Vec> embeddings{Vec{1.0, 0.0}, Vec{0.0, 1.0}};
    const std::vector<VerificationPair> only_pos{{0, 1, true}};
    CHECK_THROWS_AS(verification_eval_embeddings(embeddings, only_pos), NoNegativePairsError);
    const std::vector<VerificationPair> only_neg{{0, 1, false}};
    CHECK_THROWS_AS(verification_eval_embeddings(embeddings, only_neg), NoPositivePairsError);
}

TEST_CASE("make_pairs: insufficient data cases") {
    Rng rng(13);
    const std::vector<int> single_class{1, 1, 1, 1};
    CHECK_THROWS_AS(make_pairs(single_class, 2, 1, rng), InsufficientDataError);
    const std::vector<int> all_singletons{1, 2, 3};
    CHECK_THROWS_AS(make_pairs(all_singletons, 1, 2, rng), InsufficientDataError);
}

TEST_CASE("make_pairs: reproducible, unique, correctly labeled") {
    std::vector<int> labels;
    for (int i = 0; i < 30; ++i) labels.push_back(i % 5);
    Rng rng_a(14);
    Rng rng_b(14);
    const auto pairs_a = make_pairs(labels, 20, 30, rng_a);
    const auto pairs_b = make_pairs(labels, 20, 30, rng_b);
    REQUIRE(pairs_a.size() == 50);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t i = 0; i < pairs_a.size(); ++i) {
        CHECK(pairs_a[i].a == pairs_b[i].a);
        CHECK(pairs_a[i].b == pairs_b[i].b);
        CHECK(pairs_a[i].same == pairs_b[i].same);
        const auto key = std::minmax(pairs_a[i].a, pairs_a[i].b);
        CHECK(seen.insert(key).second);
        CHECK((labels[pairs_a[i].a] == labels[pairs_a[i].b]) == pairs_a[i].same);
    }
}
