#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "cml/cluster.hpp"

using namespace cml;

namespace {

LabeledFeature lf(std::initializer_list<double> values, int label) {
    return {l2_normalize(Vec(values)), label};
}

Vec random_unit(std::size_t dim, Rng& rng) {
    Vec v(dim);
    for (double& x : v) x = rng.normal();
    return l2_normalize(v);
}

// Direct transcription of the concentration formula, kept independent of
// the implementation: explicit loops, long double accumulation.
double phi_oracle(const std::vector<Vec>& class_features, const Vec& center, double alpha) {
    long double dist_sum = 0.0L;
    for (const Vec& f : class_features) {
        long double sq = 0.0L;
        for (std::size_t t = 0; t < f.size(); ++t) {
            const long double d = f[t] - center[t];
            sq += d * d;
        }
        dist_sum += std::sqrt(static_cast<double>(sq));
    }
    const auto n = static_cast<long double>(class_features.size());
    return static_cast<double>(dist_sum / (n * std::log(static_cast<double>(n) + alpha)));
}

}  // namespace

TEST_CASE("queue FIFO semantics") {
    FeatureQueue queue(4);
    std::vector<LabeledFeature> batch;
    for (int i = 1; i <= 6; ++i) batch.push_back(lf({1.0, static_cast<double>(i)}, i));
    queue.enqueue(batch);
    REQUIRE(queue.size() == 4);
    int expected = 3;
    for (const auto& item : queue.entries()) CHECK(item.label == expected++);

    queue.enqueue(std::vector<LabeledFeature>{});
    CHECK(queue.size() == 4);
}

TEST_CASE("queue rejects non-unit features") {
    FeatureQueue queue(4);
    const std::vector<LabeledFeature> batch{{Vec{0.5, 0.5}, 1}};
    CHECK_THROWS_AS(queue.enqueue(batch), NonUnitFeatureError);
}

TEST_CASE("queue length law") {
    Rng rng(5);
    FeatureQueue queue(16);
    std::size_t appended = 0;
    for (int round = 0; round < 10; ++round) {
        const std::size_t n = 1 + rng.uniform_below(5);
        std::vector<LabeledFeature> batch;
        for (std::size_t i = 0; i < n; ++i)
            batch.push_back({random_unit(3, rng), static_cast<int>(1 + rng.uniform_below(4))});
        queue.enqueue(batch);
        appended += n;
        CHECK(queue.size() == std::min<std::size_t>(16, appended));
    }
}

TEST_CASE("queue class center examples") {
    FeatureQueue queue(8);
    queue.enqueue(std::vector<LabeledFeature>{lf({1.0, 0.0}, 1), lf({0.0, 1.0}, 1),
                                              lf({1.0, 0.0}, 2)});
    const Vec single = queue.class_center(2);
    CHECK(single[0] == doctest::Approx(1.0));
    CHECK(single[1] == doctest::Approx(0.0));

    const Vec mean = queue.class_center(1);
    CHECK(mean[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(mean[1] == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(queue.class_center(9), EmptyClassError);
}

TEST_CASE("bank update initialization and EMA") {
    ClusterCenterBank bank(0.9);
    CHECK_FALSE(bank.is_initialized(1));
    bank.update(1, Vec{1.0, 0.0});
    CHECK(bank.is_initialized(1));
    CHECK(bank.center(1)[0] == 1.0);

    bank.update(1, Vec{0.0, 1.0});
    CHECK(bank.center(1)[0] == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(bank.center(1)[1] == doctest::Approx(0.1).epsilon(1e-12));

    ClusterCenterBank frozen(1.0);
    frozen.update(2, Vec{0.25, 0.5});
    frozen.update(2, Vec{-1.0, -1.0});
    CHECK(frozen.center(2)[0] == 0.25);
    CHECK(frozen.center(2)[1] == 0.5);

    CHECK_THROWS_AS(bank.center(42), UninitializedCenterError);
}

TEST_CASE("bank update stays within the spanned interval") {
    Rng rng(8);
    ClusterCenterBank bank(0.7);
    bank.update(1, random_unit(4, rng));
    for (int round = 0; round < 20; ++round) {
        const Vec old_center = bank.center(1);
        const Vec incoming = random_unit(4, rng);
        bank.update(1, incoming);
        const Vec& updated = bank.center(1);
        for (std::size_t t = 0; t < 4; ++t) {
            CHECK(updated[t] >= std::min(old_center[t], incoming[t]) - 1e-15);
            CHECK(updated[t] <= std::max(old_center[t], incoming[t]) + 1e-15);
        }
    }
}

TEST_CASE("concentration worked example") {
    FeatureQueue queue(8);
    queue.enqueue(std::vector<LabeledFeature>{lf({1.0, 0.0}, 1), lf({0.0, 1.0}, 1)});
    ClusterCenterBank bank(0.9);
    bank.update(1, Vec{0.5, 0.5});

    const double phi = concentration(queue, bank, 1, 10.0);
    const double exact = 2.0 * std::sqrt(0.5) / (2.0 * std::log(12.0));
    CHECK(phi == doctest::Approx(exact).epsilon(1e-12));
    CHECK(phi == doctest::Approx(0.28455).epsilon(1e-3));

    // All features at the center: zero spread.
    FeatureQueue tight(8);
    tight.enqueue(std::vector<LabeledFeature>{lf({1.0, 0.0}, 3), lf({1.0, 0.0}, 3)});
    ClusterCenterBank tight_bank(0.9);
    tight_bank.update(3, Vec{1.0, 0.0});
    CHECK(concentration(tight, tight_bank, 3, 10.0) == 0.0);

    CHECK_THROWS_AS(concentration(queue, bank, 5, 10.0), UninitializedCenterError);
    bank.update(5, Vec{1.0, 0.0});
    CHECK_THROWS_AS(concentration(queue, bank, 5, 10.0), EmptyClassError);
}

TEST_CASE("concentration matches oracle on random configurations") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t dim = 2 + rng.uniform_below(5);
        const std::size_t count = 1 + rng.uniform_below(12);
        const double alpha = 1.0 + 15.0 * rng.uniform();

        std::vector<Vec> class_features;
        std::vector<LabeledFeature> batch;
        for (std::size_t i = 0; i < count; ++i) {
            const Vec f = random_unit(dim, rng);
            class_features.push_back(f);
            batch.push_back({f, 7});
        }
        FeatureQueue queue(count + 4);
        queue.enqueue(batch);
        ClusterCenterBank bank(0.9);
        Vec center(dim);
        for (double& x : center) x = rng.normal() * 0.5;
        bank.update(7, center);

        const double got = concentration(queue, bank, 7, alpha);
        const double expected = phi_oracle(class_features, center, alpha);
        CHECK(got == doctest::Approx(expected).epsilon(1e-10));
        CHECK(got >= 0.0);
    }
}

TEST_CASE("concentration translation consistency") {
    Rng rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t dim = 3;
        const std::size_t count = 2 + rng.uniform_below(6);
        std::vector<Vec> features;
        for (std::size_t i = 0; i < count; ++i) features.push_back(random_unit(dim, rng));
        Vec center(dim);
        for (double& x : center) x = rng.normal() * 0.3;
        Vec shift(dim);
        for (double& x : shift) x = rng.normal();

        std::vector<Vec> shifted;
        Vec shifted_center = center;
        axpy(1.0, shift, shifted_center);
        for (const Vec& f : features) {
            Vec g = f;
            axpy(1.0, shift, g);
            shifted.push_back(g);
        }
        const double alpha = 10.0;
        CHECK(phi_oracle(features, center, alpha) ==
              doctest::Approx(phi_oracle(shifted, shifted_center, alpha)).epsilon(1e-10));
    }
}

TEST_CASE("concentration scales linearly with radial scaling") {
    Rng rng(23);
    const std::size_t dim = 4;
    const std::size_t count = 6;
    Vec center(dim, 0.0);
    std::vector<Vec> features;
    for (std::size_t i = 0; i < count; ++i) features.push_back(random_unit(dim, rng));

    const double base = phi_oracle(features, center, 10.0);
    for (double factor : {0.5, 2.0, 3.5}) {
        std::vector<Vec> scaled;
        for (const Vec& f : features) {
            Vec g = f;
            for (double& x : g) x *= factor;
            scaled.push_back(g);
        }
        CHECK(phi_oracle(scaled, center, 10.0) ==
              doctest::Approx(factor * base).epsilon(1e-10));
    }
}

TEST_CASE("refresh_concentrations coverage and extrema") {
    Rng rng(29);
    FeatureQueue queue(64);
    ClusterCenterBank bank(0.9);

    SUBCASE("empty queue gives empty table") {
        const ConcentrationTable table = refresh_concentrations(queue, bank, 10.0);
        CHECK(table.empty());
    }

    SUBCASE("single class: min equals max") {
        queue.enqueue(std::vector<LabeledFeature>{lf({1.0, 0.0}, 1), lf({0.0, 1.0}, 1)});
        bank.update(1, queue.class_center(1));
        const ConcentrationTable table = refresh_concentrations(queue, bank, 10.0);
        REQUIRE(table.phi.size() == 1);
        CHECK(table.phi_min == table.phi_max);
        CHECK(table.phi_min == doctest::Approx(table.phi.at(1)));
    }

    SUBCASE("tight class has smaller phi than spread class") {
        std::vector<LabeledFeature> batch;
        const Vec anchor = random_unit(3, rng);
        for (int i = 0; i < 8; ++i) {
            Vec wobble = anchor;
            for (double& x : wobble) x += 0.01 * rng.normal();
            batch.push_back({l2_normalize(wobble), 1});
            batch.push_back({random_unit(3, rng), 2});
        }
        queue.enqueue(batch);
        for (const auto& [k, c] : queue.class_centers()) bank.update(k, c);
        const ConcentrationTable table = refresh_concentrations(queue, bank, 10.0);
        REQUIRE(table.phi.size() == 2);
        CHECK(table.phi.at(1) < table.phi.at(2));
        CHECK(table.phi_min == doctest::Approx(table.phi.at(1)));
        CHECK(table.phi_max == doctest::Approx(table.phi.at(2)));
    }

    SUBCASE("classes without an initialized center are skipped") {
        queue.enqueue(std::vector<LabeledFeature>{lf({1.0, 0.0}, 1), lf({0.0, 1.0}, 2)});
        bank.update(1, queue.class_center(1));
        const ConcentrationTable table = refresh_concentrations(queue, bank, 10.0);
        CHECK(table.phi.size() == 1);
        CHECK(table.has(1));
        CHECK_FALSE(table.has(2));
    }
}

TEST_CASE("sample_classes behavior") {
    Rng data_rng(31);
    const std::size_t num_classes = 12;
    FeatureQueue queue(256);
    ClusterCenterBank bank(0.9);
    std::vector<LabeledFeature> batch;
    for (std::size_t k = 1; k <= num_classes; ++k)
        for (int i = 0; i < 3; ++i)
            batch.push_back({random_unit(4, data_rng), static_cast<int>(k)});
    queue.enqueue(batch);
    for (const auto& [k, c] : queue.class_centers()) bank.update(k, c);
    const ConcentrationTable table = refresh_concentrations(queue, bank, 10.0);

    SUBCASE("M covering all classes is rng independent") {
        Rng rng_a(1);
        Rng rng_b(999);
        const std::vector<int> required{3};
        const ClassSample a = sample_classes(bank, table, required, num_classes, rng_a);
        const ClassSample b = sample_classes(bank, table, required, num_classes, rng_b);
        CHECK(a.center_ids == b.center_ids);
        CHECK(a.size() == num_classes);
    }

    SUBCASE("required classes fill the whole sample") {
        Rng rng(2);
        std::vector<int> required;
        for (int k = 1; k <= 5; ++k) required.push_back(k);
        const ClassSample sample = sample_classes(bank, table, required, 5, rng);
        CHECK(sample.center_ids == required);
    }

    SUBCASE("fixed seed reproducible, includes required, no repeats") {
        const std::vector<int> required{3, 7};
        Rng rng_a(42);
        Rng rng_b(42);
        const ClassSample a = sample_classes(bank, table, required, 6, rng_a);
        const ClassSample b = sample_classes(bank, table, required, 6, rng_b);
        CHECK(a.center_ids == b.center_ids);
        CHECK(a.size() == 6);
        const std::set<int> ids(a.center_ids.begin(), a.center_ids.end());
        CHECK(ids.size() == a.size());
        CHECK(ids.count(3) == 1);
        CHECK(ids.count(7) == 1);
        for (std::size_t j = 0; j < a.size(); ++j) {
            CHECK(std::abs(norm2(a.centers[j]) - 1.0) <= 1e-12);
            CHECK(a.temps[j] == doctest::Approx(table.phi.at(a.center_ids[j])));
        }
    }

    SUBCASE("M larger than available clips") {
        Rng rng(3);
        const ClassSample sample = sample_classes(bank, table, std::vector<int>{1},
                                                  num_classes + 50, rng);
        CHECK(sample.size() == num_classes);
    }

    SUBCASE("uninitialized required class") {
        Rng rng(4);
        CHECK_THROWS_AS(sample_classes(bank, table, std::vector<int>{99}, 4, rng),
                        RequiredClassUninitializedError);
    }
}

TEST_CASE("sample_classes property: inclusion and uniqueness over random trials") {
    Rng scenario_rng(77);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t num_classes = 4 + scenario_rng.uniform_below(12);
        FeatureQueue queue(512);
        ClusterCenterBank bank(0.9);
        std::vector<LabeledFeature> batch;
        for (std::size_t k = 1; k <= num_classes; ++k)
            for (int i = 0; i < 2; ++i)
                batch.push_back({random_unit(3, scenario_rng), static_cast<int>(k)});
        queue.enqueue(batch);
        for (const auto& [k, c] : queue.class_centers()) bank.update(k, c);
        const ConcentrationTable table = refresh_concentrations(queue, bank, 10.0);

        std::vector<int> required;
        const std::size_t num_required = 1 + scenario_rng.uniform_below(3);
        for (std::size_t i = 0; i < num_required; ++i)
            required.push_back(static_cast<int>(1 + scenario_rng.uniform_below(num_classes)));

        const std::size_t m = 1 + scenario_rng.uniform_below(num_classes);
        Rng rng(trial);
        const ClassSample sample = sample_classes(bank, table, required, m, rng);

        const std::set<int> ids(sample.center_ids.begin(), sample.center_ids.end());
        CHECK(ids.size() == sample.center_ids.size());
        for (int r : required) CHECK(ids.count(r) == 1);
        CHECK(sample.size() >= std::set<int>(required.begin(), required.end()).size());
        CHECK(sample.size() <= num_classes);
    }
}
