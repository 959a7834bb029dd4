#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "generators.hpp"
#include "spinglass/cascade.hpp"
#include "spinglass/errors.hpp"
#include "spinglass/parisi.hpp"
#include "spinglass/quadrature.hpp"

using namespace spinglass;
using Catch::Approx;

namespace {

AdmissiblePair delta(double q) { return {DiscreteMeasure::dirac(q), SyncMap::identity(1)}; }

MixedModel square(double beta) { return models::single_species({{2, beta}}); }

double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("cascade trees: shape, normalization, ordering", "[cascade]") {
    const auto one = sample_cascade({{0.0, 1.0}, 512}, 1);
    CHECK(one.leaf_count() == 1);
    CHECK(one.leaf_weights[0] == 1.0);
    CHECK(overlap_law(one) == std::vector<double>{1.0});

    for (auto construction : {CascadeConstruction::StickBreaking, CascadeConstruction::PoissonProducts}) {
        const CascadeSpec spec{{0.0, 0.5, 1.0}, 512, construction};
        const auto tree = sample_cascade(spec, 3, 0);
        CHECK(tree.leaf_count() == 512);
        CHECK(tree.total_mass() == Approx(1.0).margin(1e-12));
        for (std::size_t i = 1; i < tree.leaf_count(); ++i) CHECK(tree.leaf_weights[i] <= tree.leaf_weights[i - 1]);
        const auto law = overlap_law(tree);
        CHECK(total(law) == Approx(1.0).margin(1e-12));
    }

    const CascadeSpec deep{{0.0, 0.2, 0.6, 1.0}, 16};
    const auto t3 = sample_cascade(deep, 5, 2);
    CHECK(t3.leaf_count() == 256);
    CHECK(t3.total_mass() == Approx(1.0).margin(1e-12));
    // Children of each node are sorted decreasing.
    for (std::size_t node = 0; node < 16; ++node)
        for (std::size_t c = 1; c < 16; ++c) CHECK(t3.leaf_weights[node * 16 + c] <= t3.leaf_weights[node * 16 + c - 1]);
    CHECK(t3.path(37) == std::vector<std::size_t>{2, 5});
    CHECK(tree_overlap(t3, 37, 37) == 3);
    CHECK(tree_overlap(t3, 37, 38) == 2);
    CHECK(tree_overlap(t3, 37, 200) == 1);

    // Same seed and tree id: identical tree.
    CHECK(sample_cascade(deep, 5, 2).leaf_weights == t3.leaf_weights);
    CHECK(sample_cascade(deep, 5, 3).leaf_weights != t3.leaf_weights);

    CHECK_THROWS_AS(sample_cascade({{0.0, 0.5, 1.0}, 1}, 1), ValidationError);
    CHECK_THROWS_AS(sample_cascade({{0.0, 0.5, 0.5, 1.0}, 8}, 1), ValidationError);
    CHECK_THROWS_AS(sample_cascade({{0.0, 0.2, 0.4, 0.6, 0.8, 1.0}, 512}, 1), ValidationError);
}

TEST_CASE("probability of equal samples is 1 - m_1", "[cascade]") {
    const auto h = overlap_histogram({{0.0, 0.5, 1.0}, 512}, 2000, 0, 17);
    CHECK(std::abs(h.masses[1] - 0.5) <= 3.0 * h.stderrs[1]);
}

TEST_CASE("overlap law matches the m increments", "[cascade]") {
    const std::vector<std::vector<double>> ms{{0.0, 0.3, 1.0}, {0.0, 0.2, 0.6, 1.0}};
    for (const auto& m : ms) {
        const CascadeSpec spec{m, m.size() == 3 ? std::size_t{512} : std::size_t{64}};
        const auto exact = overlap_histogram(spec, 600, 0, 23);
        const auto sampled = overlap_histogram(spec, 600, 50, 23);
        for (std::size_t r = 1; r < m.size(); ++r) {
            const double expected = m[r] - m[r - 1];
            CHECK(std::abs(exact.masses[r - 1] - expected) <= 3.0 * exact.stderrs[r - 1]);
            CHECK(std::abs(sampled.masses[r - 1] - expected) <= 3.0 * sampled.stderrs[r - 1]);
        }
        CHECK(total(exact.masses) == Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("sampled pair frequencies converge to the per-tree law", "[cascade]") {
    const CascadeSpec spec{{0.0, 0.3, 0.7, 1.0}, 32};
    const auto tree = sample_cascade(spec, 99);
    const auto law = overlap_law(tree);
    auto rng = Rng::stream(99, {1});
    const auto freq = sample_overlap_frequencies(tree, 200000, rng);
    for (std::size_t r = 0; r < law.size(); ++r) {
        const double se = std::sqrt(law[r] * (1.0 - law[r]) / 200000.0);
        CHECK(std::abs(freq[r] - law[r]) <= 4.0 * se + 1e-12);
    }
}

TEST_CASE("histogram does not depend on the worker count", "[cascade]") {
    const CascadeSpec spec{{0.0, 0.4, 1.0}, 64};
    const auto a = overlap_histogram(spec, 50, 10, 3, 1);
    const auto b = overlap_histogram(spec, 50, 10, 3, 4);
    CHECK(a.masses == b.masses);
    CHECK(a.stderrs == b.stderrs);
}

TEST_CASE("hierarchical recursion examples", "[cascade]") {
    const std::vector<double> m2{0.0, 0.4, 1.0};
    const LeafFunctional constant = [](const std::vector<std::vector<double>>&) { return 1.7; };
    CHECK(hierarchical_value(m2, constant, ZLaw::gaussian({1, 1}), HierarchicalMethod::gauss_hermite(16)).value ==
          Approx(1.7).margin(1e-13));
    const auto mc_const =
        hierarchical_value(m2, constant, ZLaw::gaussian({1, 1}), HierarchicalMethod::monte_carlo({50, 20}, 1));
    CHECK(mc_const.value == Approx(1.7).margin(1e-13));

    const double a = 0.8;
    const LeafFunctional linear = [a](const std::vector<std::vector<double>>& z) { return a * z[0][0] + a * z[1][0]; };
    CHECK(hierarchical_value(m2, linear, ZLaw::gaussian({1, 1}), HierarchicalMethod::gauss_hermite(32)).value ==
          Approx(0.4 * a * a / 2.0).margin(1e-12));
    const auto mc = hierarchical_value(m2, linear, ZLaw::gaussian({1, 1}), HierarchicalMethod::monte_carlo({4000, 400}, 2));
    CHECK(std::abs(mc.value - 0.4 * a * a / 2.0) <= 3.0 * mc.std_error + 0.005);

    // m_r -> 1 turns the recursion into log E exp F.
    const std::vector<double> near_one{0.0, 1.0 - 1e-9, 1.0 - 5e-10, 1.0};
    const LeafFunctional tail = [](const std::vector<std::vector<double>>& z) { return 0.6 * z[1][0] + 0.3 * z[2][0]; };
    CHECK(hierarchical_value(near_one, tail, ZLaw::gaussian({1, 1, 1}), HierarchicalMethod::gauss_hermite(24)).value ==
          Approx((0.36 + 0.09) / 2.0).margin(1e-8));

    // A bounded leaf gives a bounded value.
    const LeafFunctional bounded = [](const std::vector<std::vector<double>>& z) {
        return 2.0 - std::abs(z[0][0]) - z[1][0] * z[1][0];
    };
    CHECK(hierarchical_value(m2, bounded, ZLaw::gaussian({1, 1}), HierarchicalMethod::gauss_hermite(20)).value <= 2.0);
    CHECK(hierarchical_value(m2, bounded, ZLaw::gaussian({1, 1}), HierarchicalMethod::monte_carlo({200, 50}, 4)).value <=
          2.0);

    CHECK_THROWS_AS(hierarchical_value(m2, constant, ZLaw::gaussian({1}), HierarchicalMethod::gauss_hermite()),
                    ValidationError);
    CHECK_THROWS_AS(hierarchical_value(m2, constant, ZLaw::gaussian({8, 8}), HierarchicalMethod::gauss_hermite(64)),
                    NumericalError);
}

TEST_CASE("hierarchical recursion satisfies the bound and the annealed limit on random leaves", "[cascade][property]") {
    for (std::uint64_t c = 0; c < 30; ++c) {
        auto rng = Rng::stream(1515, {c});
        const auto mu = gen::measure(rng, {.max_levels = 3, .zero_first = 0.0, .duplicate = 0.0});
        const std::size_t k = mu.levels();
        std::vector<double> coef(k);
        for (double& x : coef) x = gen::uniform(rng, -1.0, 1.0);
        const double cap = gen::uniform(rng, -1.0, 1.0);
        const LeafFunctional leaf = [coef, cap](const std::vector<std::vector<double>>& z) {
            double v = cap;
            for (std::size_t r = 0; r < coef.size(); ++r) v -= std::abs(coef[r] * z[r][0]);
            return v;
        };
        const auto gh = hierarchical_value(mu.m, leaf, ZLaw::gaussian(std::vector<std::size_t>(k, 1)),
                                           HierarchicalMethod::gauss_hermite(12));
        CHECK(gh.value <= cap + 1e-12);
        // Closed form for a linear leaf: F_0 = sum_{r>=1} m_r c_r^2 / 2.
        const LeafFunctional lin = [coef](const std::vector<std::vector<double>>& z) {
            double v = 0.0;
            for (std::size_t r = 0; r < coef.size(); ++r) v += coef[r] * z[r][0];
            return v;
        };
        double expected = 0.0;
        for (std::size_t r = 1; r < k; ++r) expected += mu.m[r] * coef[r] * coef[r] / 2.0;
        CHECK(hierarchical_value(mu.m, lin, ZLaw::gaussian(std::vector<std::size_t>(k, 1)),
                                 HierarchicalMethod::gauss_hermite(12))
                  .value == Approx(expected).margin(1e-10));
    }
}

TEST_CASE("p2 closed form and its recursion", "[cascade]") {
    CHECK(p2_value(models::zero(), delta(0.4), 10.0) == 0.0);
    for (double q1 : {0.0, 0.3, 0.8})
        CHECK(p2_value(square(1.0), delta(q1), 12.0) == Approx(6.0 * (1.0 - q1 * q1)).margin(1e-13));
    for (std::uint64_t c = 0; c < 40; ++c) {
        auto rng = Rng::stream(1616, {c});
        const auto m = gen::model(rng);
        const auto pair = gen::pair(rng, m.lambda);
        const double M = static_cast<double>(gen::pick(rng, 1, 40));
        const auto gh = hierarchical_value(pair.measure.m, p2_leaf(m, pair, M),
                                           ZLaw::gaussian(std::vector<std::size_t>(pair.measure.levels(), 1)),
                                           HierarchicalMethod::gauss_hermite(64));
        CHECK(gh.value == Approx(p2_value(m, pair, M)).epsilon(1e-10).margin(1e-10));
    }
}

TEST_CASE("p1 species values", "[cascade]") {
    CHECK(p1_species_value(models::zero(), delta(0.3), 0, 8, HierarchicalMethod::monte_carlo({100}, 1)).value == 0.0);

    // With q_1 = 0 the leaf is deterministic: log E_sphere exp(0) + (M/2) xi^s(1).
    for (std::size_t M : {1, 16, 64, 256}) {
        const auto e = p1_species_value(square(0.5), delta(0.0), 0, M, HierarchicalMethod::monte_carlo({20}, 3));
        CHECK(e.value == Approx(0.25 * static_cast<double>(M)).margin(1e-12));
        CHECK(e.std_error == 0.0);
    }

    // The radial chain agrees with direct quadrature in the Gaussian coordinates.
    const auto m = models::single_species({{2, 0.7}, {3, 0.4}});
    const AdmissiblePair pair{{{0.0, 0.35, 1.0}, {0.2, 0.6}}, SyncMap::identity(1)};
    for (std::size_t M : {1, 2}) {
        const auto gh = p1_species_value(m, pair, 0, M, HierarchicalMethod::gauss_hermite(M == 1 ? 40 : 12));
        const auto mc = p1_species_value(m, pair, 0, M, HierarchicalMethod::monte_carlo({20000, 400}, 5));
        CHECK(std::abs(mc.value - gh.value) <= 3.0 * mc.std_error + 2e-3);
    }
}

TEST_CASE("two-species leaf decouples into species terms", "[cascade]") {
    const auto m = models::all_ones({0.5, 0.5}, 2, 0.9);
    auto rng = Rng::stream(8, {1});
    const AdmissiblePair pair{{{0.0, 0.5, 1.0}, {0.1, 0.7}}, gen::map(rng, m.lambda)};
    const auto la = p1_species_leaf(m, pair, 0, 1);
    const auto lb = p1_species_leaf(m, pair, 1, 1);
    const LeafFunctional joint = [&](const std::vector<std::vector<double>>& z) {
        std::vector<std::vector<double>> za(z.size()), zb(z.size());
        for (std::size_t r = 0; r < z.size(); ++r) {
            za[r] = {z[r][0]};
            zb[r] = {z[r][1]};
        }
        return la(za) + lb(zb);
    };
    const auto method = HierarchicalMethod::gauss_hermite(16);
    const double sum = p1_species_value(m, pair, 0, 1, method).value + p1_species_value(m, pair, 1, 1, method).value;
    const double together = hierarchical_value(pair.measure.m, joint, ZLaw::gaussian({2, 2}), method).value;
    CHECK(together == Approx(sum).margin(1e-10));
}

TEST_CASE("pm_over_m: exact annealed case and convergence for a nontrivial pair", "[cascade]") {
    CHECK(pm_over_m(models::zero(), delta(0.5), {16}, HierarchicalMethod::monte_carlo({50}, 1)).value == 0.0);
    for (std::size_t M : {16, 64, 256}) {
        const auto e = pm_over_m(square(0.5), delta(0.0), {M}, HierarchicalMethod::monte_carlo({100}, 1));
        CHECK(e.value == Approx(0.125).margin(1e-12));
    }

    const auto sq = square(0.5);
    const auto pair = delta(0.5);
    const double limit = parisi_value(sq, pair);
    double prev_gap = std::numeric_limits<double>::infinity(), prev_se = 0.0;
    for (std::size_t M : {16, 64, 256}) {
        const auto e = pm_over_m(sq, pair, {M}, HierarchicalMethod::monte_carlo({20000}, 7 + M));
        const double gap = std::abs(e.value - limit);
        CHECK(gap <= prev_gap + 3.0 * std::hypot(e.std_error, prev_se));
        prev_gap = gap;
        prev_se = e.std_error;
    }
    CHECK(prev_gap < 0.01);

    const auto two = models::all_ones({0.5, 0.5}, 2, 1.0);
    const AdmissiblePair annealed{DiscreteMeasure::dirac(0.0), SyncMap::identity(2)};
    for (std::size_t M : {16, 64}) {
        const auto e = pm_over_m(two, annealed, split_counts(two.lambda, M), HierarchicalMethod::monte_carlo({10}, 1));
        CHECK(e.value == Approx(0.5).margin(1e-12));
    }
}

TEST_CASE("split_counts", "[cascade]") {
    const std::vector<double> half{0.5, 0.5}, uneven{0.3, 0.7}, three{0.2, 0.3, 0.5};
    CHECK(split_counts(half, 16) == std::vector<std::size_t>{8, 8});
    CHECK(split_counts(uneven, 10) == std::vector<std::size_t>{3, 7});
    CHECK(split_counts(half, 7)[0] + split_counts(half, 7)[1] == 7);
    const auto c = split_counts(three, 11);
    CHECK(c[0] + c[1] + c[2] == 11);
    CHECK_THROWS_AS(split_counts(three, 2), ValidationError);
}
