#include <catch_amalgamated.hpp>

#include <cmath>

#include "generators.hpp"
#include "spinglass/admissible.hpp"
#include "spinglass/errors.hpp"

using namespace spinglass;
using Catch::Approx;

namespace {

const std::vector<double> kHalf{0.5, 0.5};

DiscreteMeasure two_atoms() { return {{0.0, 0.3, 1.0}, {0.2, 0.9}}; }

SyncMap extremal_half() { return {{0.0, 0.5, 1.0}, {{0.0, 1.0, 1.0}, {0.0, 0.0, 1.0}}}; }

// Midpoint-rule reference for the pseudometric.
double d_by_quadrature(std::span<const double> lambda, const AdmissiblePair& a, const AdmissiblePair& b,
                       std::size_t n = 200000) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        const double qa = quantile(a.measure, z), qb = quantile(b.measure, z);
        for (std::size_t s = 0; s < lambda.size(); ++s) total += std::abs(a.map(s, qa) - b.map(s, qb));
    }
    return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("validate_pair examples", "[admissible]") {
    const std::vector<double> one{1.0};
    CHECK(validate_pair(one, {two_atoms(), SyncMap::identity(1)}).empty());
    CHECK(validate_pair(kHalf, {DiscreteMeasure::dirac(0.5), extremal_half()}).empty());
    const auto ext = extremal_map(kHalf);
    CHECK(validate_map(kHalf, ext).empty());
    CHECK(ext(0, 0.5) == Approx(1.0).margin(1e-15));
    CHECK(ext(1, 0.5) == Approx(0.0).margin(1e-15));

    SyncMap bad{{0.0, 0.5, 1.0}, {{0.0, 0.6, 1.0}, {0.0, 0.6, 1.0}}};
    const auto v = validate_pair(kHalf, {DiscreteMeasure::dirac(0.5), bad});
    REQUIRE_FALSE(v.empty());
    bool found = false;
    for (const auto& x : v) found = found || x.detail.find("joint constraint fails at knot 0.5") != std::string::npos;
    CHECK(found);
    CHECK_THROWS_AS(require_valid(kHalf, {DiscreteMeasure::dirac(0.5), bad}), ValidationError);

    CHECK_FALSE(validate_measure({{0.0, 0.5, 0.5, 1.0}, {0.1, 0.2, 0.3}}).empty());
    CHECK_FALSE(validate_measure({{0.0, 1.0}, {1.2}}).empty());
    CHECK_FALSE(validate_measure({{0.0, 0.5, 1.0}, {0.6, 0.2}}).empty());
}

TEST_CASE("quantile examples", "[admissible]") {
    CHECK(quantile(DiscreteMeasure::dirac(0.0), 0.7) == 0.0);
    CHECK(quantile(two_atoms(), 0.3) == 0.2);
    CHECK(quantile(two_atoms(), 0.31) == 0.9);
    CHECK(quantile(two_atoms(), 1.0) == 0.9);
    CHECK(quantile(DiscreteMeasure::dirac(0.42), 1e-9) == 0.42);
    CHECK_THROWS_AS(quantile(two_atoms(), 1.5), DomainError);
    CHECK(cdf(two_atoms(), 0.5) == Approx(0.3));
}

TEST_CASE("pseudometric examples", "[admissible]") {
    const std::vector<double> one{1.0};
    const AdmissiblePair p{two_atoms(), SyncMap::identity(1)};
    CHECK(pseudometric_d(one, p, p) == 0.0);
    CHECK(pseudometric_d(one, {DiscreteMeasure::dirac(0.2), SyncMap::identity(1)},
                         {DiscreteMeasure::dirac(0.9), SyncMap::identity(1)}) == Approx(0.7).margin(1e-15));
    CHECK(pseudometric_d(kHalf, {DiscreteMeasure::dirac(0.5), SyncMap::identity(2)},
                         {DiscreteMeasure::dirac(0.5), extremal_half()}) == Approx(1.0).margin(1e-15));
    CHECK_THROWS_AS(pseudometric_d(kHalf, p, p), ValidationError);
}

TEST_CASE("pushforward examples", "[admissible]") {
    const auto z = pushforward({DiscreteMeasure::dirac(0.0), extremal_half()});
    REQUIRE(z.size() == 1);
    CHECK(z[0].point == std::vector<double>{0.0, 0.0});
    CHECK(z[0].mass == 1.0);

    const auto two = pushforward({two_atoms(), SyncMap::identity(1)});
    REQUIRE(two.size() == 2);
    CHECK(two[0].point[0] == 0.2);
    CHECK(two[0].mass == Approx(0.3));
    CHECK(two[1].point[0] == 0.9);
    CHECK(two[1].mass == Approx(0.7));

    const auto e = pushforward({DiscreteMeasure::dirac(0.5), extremal_half()});
    CHECK(e[0].point == std::vector<double>{1.0, 0.0});
}

TEST_CASE("mutual_refine examples", "[admissible]") {
    const DiscreteMeasure a{{0.0, 1.0}, {0.4}};
    const DiscreteMeasure b{{0.0, 0.5, 1.0}, {0.1, 0.7}};
    const auto [ra, rb] = mutual_refine(a, b);
    CHECK(ra.m == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(ra.q == std::vector<double>{0.4, 0.4});
    CHECK(rb.m == b.m);
    CHECK(rb.q == b.q);

    const auto [s1, s2] = mutual_refine(two_atoms(), two_atoms());
    CHECK(s1.m == two_atoms().m);
    CHECK(s2.q == two_atoms().q);
}

TEST_CASE("discretize_measure examples", "[admissible]") {
    const auto d = discretize_measure([](double) { return 0.5; }, 10);
    CHECK(d.q == std::vector<double>{0.5});
    CHECK(d.m == std::vector<double>{0.0, 1.0});

    const auto u = discretize_measure([](double z) { return z; }, 4);
    REQUIRE(u.q.size() == 4);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(u.q[j] == Approx(0.25 * static_cast<double>(j + 1)).margin(1e-15));
        CHECK(u.mass(j + 1) == Approx(0.25).margin(1e-12));
    }

    const auto t = discretize_measure([](double) { return 0.33; }, 10);
    CHECK(t.q == std::vector<double>{0.4});

    // An atom at zero keeps its mass.
    const auto z = discretize_measure([](double zz) { return zz <= 0.25 ? 0.0 : 0.8; }, 5);
    REQUIRE(z.q.size() == 2);
    CHECK(z.q[0] == 0.0);
    CHECK(z.m[1] == Approx(0.25).margin(1e-12));
    CHECK(z.q[1] == Approx(0.8).margin(1e-15));

    CHECK_THROWS_AS(discretize_measure([](double zz) { return 1.0 - zz; }, 4), ValidationError);
    CHECK_THROWS_AS(discretize_measure([](double zz) { return zz; }, 0), ValidationError);
}

TEST_CASE("discretization respects the pseudometric bound", "[admissible][property]") {
    // Quantiles of a few continuous laws on [0,1].
    const std::vector<QuantileOracle> oracles{
        [](double z) { return z; },
        [](double z) { return z * z; },
        [](double z) { return std::sqrt(z); },
        [](double z) { return z < 0.4 ? 0.0 : 0.3 + 0.7 * (z - 0.4) / 0.6; },
    };
    for (std::uint64_t c = 0; c < 40; ++c) {
        auto rng = Rng::stream(404, {c});
        const auto lambda = gen::weights(rng, gen::pick(rng, 1, 3));
        const auto map = gen::map(rng, lambda);
        const auto& Q = oracles[c % oracles.size()];
        const std::size_t K = gen::pick(rng, 1, 40);
        const auto zk = discretize_measure(Q, K);
        REQUIRE(validate_measure(zk).empty());
        // D between (zeta, Phi) and (zeta_K, Phi) by quadrature of the general quantile.
        const std::size_t n = 20000;
        double D = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = (static_cast<double>(i) + 0.5) / n;
            const double a = Q(z), b = quantile(zk, z);
            for (std::size_t s = 0; s < lambda.size(); ++s) D += std::abs(map(s, a) - map(s, b));
        }
        D /= n;
        double bound = 0.0;
        for (double l : lambda) bound += 1.0 / l;
        CHECK(D <= bound / static_cast<double>(K) + 1e-9);
    }
}

TEST_CASE("pseudometric matches quadrature and satisfies the axioms", "[admissible][property]") {
    for (std::uint64_t c = 0; c < 60; ++c) {
        auto rng = Rng::stream(505, {c});
        const auto lambda = gen::weights(rng, gen::pick(rng, 1, 3));
        const auto a = gen::pair(rng, lambda), b = gen::pair(rng, lambda), e = gen::pair(rng, lambda);
        REQUIRE(validate_pair(lambda, a).empty());
        const double ab = pseudometric_d(lambda, a, b);
        CHECK(ab == Approx(d_by_quadrature(lambda, a, b, 100000)).margin(2e-4));
        CHECK(ab >= 0.0);
        CHECK(ab == Approx(pseudometric_d(lambda, b, a)).margin(1e-14));
        CHECK(pseudometric_d(lambda, a, a) == 0.0);
        CHECK(pseudometric_d(lambda, a, e) <= ab + pseudometric_d(lambda, b, e) + 1e-12);
    }
}

TEST_CASE("refinement preserves pushforwards and the pseudometric", "[admissible][property]") {
    for (std::uint64_t c = 0; c < 100; ++c) {
        auto rng = Rng::stream(606, {c});
        const auto lambda = gen::weights(rng, gen::pick(rng, 1, 3));
        const auto a = gen::pair(rng, lambda), b = gen::pair(rng, lambda);
        const auto [ra, rb] = mutual_refine(a.measure, b.measure);
        REQUIRE(ra.m == rb.m);
        const AdmissiblePair pa{ra, a.map}, pb{rb, b.map};
        CHECK(same_pushforward(a, pa));
        CHECK(same_pushforward(b, pb));
        CHECK(pseudometric_d(lambda, a, pa) == Approx(0.0).margin(1e-12));
        CHECK(pseudometric_d(lambda, pa, pb) == Approx(pseudometric_d(lambda, a, b)).margin(1e-12));
        const auto split = split_level(a.measure, gen::pick(rng, 1, a.measure.levels()), gen::uniform(rng, 0.1, 0.9));
        CHECK(same_pushforward(a, {split, a.map}));
        CHECK(canonicalize(split).q == canonicalize(a.measure).q);
        // D = 0 without equal pushforwards is impossible: a shifted atom moves D.
        auto moved = a;
        moved.measure.q.back() = std::min(1.0, moved.measure.q.back() + 0.05);
        if (moved.measure.q.back() != a.measure.q.back()) {
            CHECK_FALSE(same_pushforward(a, moved));
            CHECK(pseudometric_d(lambda, a, moved) > 0.0);
        }
    }
}

TEST_CASE("quantile identities hold as finite sums", "[admissible][property]") {
    for (std::uint64_t c = 0; c < 200; ++c) {
        auto rng = Rng::stream(707, {c});
        const auto mu = gen::measure(rng, {.max_levels = 5});
        const auto f = gen::increasing_function(rng);
        // int zeta([0,u]) f'(u) du = f(1) - int f(Q(z)) dz
        CHECK(integral_cdf_times_slope(mu, f) == Approx(f(1.0) - integral_of_quantile_composition(mu, f)).margin(1e-10));
        // f(Q_zeta(z)) = Q_{zeta o f^{-1}}(z) at jumps and random z
        const auto pushed = push_measure(mu, f);
        for (std::size_t r = 1; r <= mu.levels(); ++r)
            CHECK(f(quantile(mu, mu.m[r])) == Approx(quantile(pushed, mu.m[r])).margin(1e-12));
        for (int i = 0; i < 100; ++i) {
            const double z = rng.uniform();
            CHECK(f(quantile(mu, z)) == Approx(quantile(pushed, z)).margin(1e-12));
        }
    }
}

TEST_CASE("maps are Lipschitz with constant sum of 1/lambda", "[admissible][property]") {
    for (std::uint64_t c = 0; c < 100; ++c) {
        auto rng = Rng::stream(808, {c});
        const auto lambda = gen::weights(rng, gen::pick(rng, 2, 4));
        const auto map = gen::map(rng, lambda, 5);
        REQUIRE(validate_map(lambda, map).empty());
        double L = 0.0;
        for (double l : lambda) L += 1.0 / l;
        for (int i = 0; i < 50; ++i) {
            const double x = rng.uniform(), y = rng.uniform();
            double l1 = 0.0, joint = 0.0;
            for (std::size_t s = 0; s < lambda.size(); ++s) {
                l1 += std::abs(map(s, x) - map(s, y));
                joint += lambda[s] * map(s, x);
                CHECK(std::abs(map(s, x) - map(s, y)) <= std::abs(x - y) / lambda[s] + 1e-12);
            }
            CHECK(l1 <= L * std::abs(x - y) + 1e-12);
            CHECK(joint == Approx(x).margin(1e-12));
        }
    }
}
