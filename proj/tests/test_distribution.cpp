#include <doctest.h>

#include <cmath>
#include <map>

#include "cpq/distribution.hpp"
#include "cpq/error.hpp"

using namespace cpq;

namespace {

double prob_sum(const DiscreteDistribution& d) {
    double s = 0.0;
    for (double p : d.probabilities()) s += p;
    return s;
}

// Random distribution with support in [1, max_support]; every third call
// plants a zero-probability atom.
DiscreteDistribution random_dist(RngState& rng, std::size_t max_support) {
    const std::size_t m = 1 + uniform_below(rng, max_support);
    std::vector<double> w(m);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        w[i] = uniform_unit(rng) + 1e-6;
        total += w[i];
    }
    if (m >= 2 && uniform_below(rng, 3) == 0) {
        total -= w[0];
        w[0] = 0.0;
    }
    for (auto& x : w) x /= total;
    double sum = 0.0;
    for (double x : w) sum += x;
    // absorb the normalization residue in the largest atom
    std::size_t big = 0;
    for (std::size_t i = 1; i < m; ++i)
        if (w[i] > w[big]) big = i;
    w[big] += 1.0 - sum;
    return DiscreteDistribution(std::move(w));
}

} // namespace

TEST_CASE("uniform distribution") {
    const auto d = make_uniform(100);
    CHECK(d.support_size() == 100);
    CHECK(d.probability(0) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(std::fabs(prob_sum(d) - 1.0) <= 1e-12);
    CHECK_THROWS_AS(make_uniform(0), Error);
}

TEST_CASE("geometric distribution") {
    // p = 0.5, m = 2: raw masses 0.5 and 0.25 renormalize to 2/3 and 1/3.
    const auto d2 = make_geometric(0.5, 2);
    CHECK(d2.probability(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(d2.probability(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    const auto d = make_geometric(0.05, 100);
    CHECK(std::fabs(prob_sum(d) - 1.0) <= 1e-12);
    const double expected_head = 0.05 / (1.0 - std::pow(0.95, 100));
    CHECK(d.probability(0) == doctest::Approx(expected_head).epsilon(1e-12));
    // successive ratio is 1 - p
    CHECK(d.probability(7) / d.probability(6) == doctest::Approx(0.95).epsilon(1e-12));

    CHECK_THROWS_AS(make_geometric(0.0, 10), Error);
    CHECK_THROWS_AS(make_geometric(1.0, 10), Error);
    CHECK_THROWS_AS(make_geometric(-0.2, 10), Error);
    CHECK_THROWS_AS(make_geometric(0.5, 0), Error);
}

TEST_CASE("distribution validation") {
    CHECK_THROWS_AS(DiscreteDistribution({}), Error);
    CHECK_THROWS_AS(DiscreteDistribution({0.5, -0.1, 0.6}), Error);
    CHECK_THROWS_AS(DiscreteDistribution({0.5, 0.4}), Error);
    CHECK_NOTHROW(DiscreteDistribution({0.5, 0.0, 0.5}));
}

TEST_CASE("exact missing mass closed forms") {
    const auto u = make_uniform(100);
    CHECK(exact_missing_mass(u, 0) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::int64_t t : {1, 10, 100, 137}) {
        // uniform(m) collapses to (1 - 1/m)^t
        CHECK(exact_missing_mass(u, t) ==
              doctest::Approx(std::pow(0.99, static_cast<double>(t))).epsilon(1e-12));
    }
    CHECK(exact_missing_mass(u, 10000) < 1e-6);

    const DiscreteDistribution point({1.0});
    CHECK(exact_missing_mass(point, 0) == doctest::Approx(1.0));
    CHECK(exact_missing_mass(point, 1) == doctest::Approx(0.0));
    CHECK(exact_missing_mass(point, 5) == doctest::Approx(0.0));

    const DiscreteDistribution half({0.5, 0.5});
    CHECK(exact_missing_mass(half, 3) == doctest::Approx(0.125).epsilon(1e-12));

    // sum of p^2 route for the one-step value
    const auto g = make_geometric(0.05, 100);
    double sq = 0.0;
    for (double p : g.probabilities()) sq += p * p;
    CHECK(exact_missing_mass(g, 1) == doctest::Approx(1.0 - sq).epsilon(1e-11));

    CHECK_THROWS_AS(exact_missing_mass(u, -1), Error);
}

TEST_CASE("exact derivative identities") {
    const auto u = make_uniform(100);
    CHECK(exact_derivative(u, 0) == doctest::Approx(-0.01).epsilon(1e-13));
    CHECK(exact_derivative(u, 50) ==
          doctest::Approx(-0.01 * std::pow(0.99, 50)).epsilon(1e-12));
    CHECK_THROWS_AS(exact_derivative(u, -2), Error);

    RngState rng = make_rng(20240817);
    for (int rep = 0; rep < 40; ++rep) {
        const auto d = random_dist(rng, 50);
        double prev = exact_missing_mass(d, 0);
        CHECK(std::fabs(prev - 1.0) <= 1e-12);
        for (std::int64_t t = 0; t <= 60; ++t) {
            const double next = exact_missing_mass(d, t + 1);
            const double deriv = exact_derivative(d, t);
            // telescoping: the derivative is exactly the one-step difference
            CHECK(std::fabs(deriv - (next - prev)) <= 1e-12);
            CHECK(deriv <= 1e-15);
            CHECK(next <= prev + 1e-15);
            if (t > 0)
                CHECK(exact_derivative(d, t) >= exact_derivative(d, t - 1) - 1e-15);
            prev = next;
        }
    }

    // strictly negative whenever some atom has 0 < p < 1
    const DiscreteDistribution mixed({0.3, 0.7});
    for (std::int64_t t : {0, 1, 5, 50}) CHECK(exact_derivative(mixed, t) < 0.0);
    // a pure point mass stops improving after the first draw
    const DiscreteDistribution point({1.0});
    CHECK(exact_derivative(point, 0) == doctest::Approx(-1.0));
    CHECK(exact_derivative(point, 1) == doctest::Approx(0.0));
}

TEST_CASE("large-support sums stay tight") {
    RngState rng = make_rng(99);
    std::vector<double> w(100000);
    double total = 0.0;
    for (auto& x : w) {
        x = uniform_unit(rng) + 1e-9;
        total += x;
    }
    for (auto& x : w) x /= total;
    double sum = 0.0;
    for (double x : w) sum += x;
    w[0] += 1.0 - sum;
    const DiscreteDistribution d(std::move(w));
    CHECK(std::fabs(exact_missing_mass(d, 0) - 1.0) <= 1e-12);
    const double diff = exact_missing_mass(d, 4) - exact_missing_mass(d, 3);
    CHECK(std::fabs(exact_derivative(d, 3) - diff) <= 1e-12);
}

TEST_CASE("sampling") {
    const auto u = make_uniform(4);

    RngState a = make_rng(7), b = make_rng(7);
    for (int i = 0; i < 100; ++i) CHECK(sample(u, a) == sample(u, b));

    RngState rng = make_rng(11);
    std::map<LabelId, int> freq;
    const int n = 40000;
    for (int i = 0; i < n; ++i) ++freq[sample(u, rng)];
    for (const auto& [label, count] : freq) {
        CHECK(label >= 0);
        CHECK(label < 4);
        CHECK(std::fabs(static_cast<double>(count) / n - 0.25) < 0.02);
    }

    const DiscreteDistribution point({1.0});
    for (int i = 0; i < 10; ++i) CHECK(sample(point, rng) == 0);

    // zero-probability atoms are never drawn
    const DiscreteDistribution gap({0.5, 0.0, 0.5});
    for (int i = 0; i < 2000; ++i) CHECK(sample(gap, rng) != 1);
}
