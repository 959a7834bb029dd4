#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "spinglass/admissible.hpp"
#include "spinglass/model.hpp"
#include "spinglass/rng.hpp"

namespace spinglass {

// ---------------------------------------------------------------------------
// Ruelle probability cascades

enum class CascadeConstruction {
    // Per-node Poisson-Dirichlet PD(m_{j+1}, -m_j) weights by stick breaking,
    // with the unresolved remainder of every node kept as dust mass.
    StickBreaking,
    // Products of Poisson points with intensity x^{-1-m_r}, top `fanout` per
    // node, normalized over the whole tree.
    PoissonProducts,
};

struct CascadeSpec {
    // m_0 = 0 < m_1 < ... < m_k = 1; levels 1..k-1 branch.
    std::vector<double> m{0.0, 1.0};
    std::size_t fanout = 512;
    CascadeConstruction construction = CascadeConstruction::StickBreaking;

    std::size_t depth() const { return m.size() - 1; }
};

void validate_cascade_spec(const CascadeSpec& spec);

// Leaves are the paths alpha in [fanout]^{k-1}, stored in lexicographic order.
// dust[j][node] is mass below the node at prefix length j that is not
// resolved into explicit children (zero for PoissonProducts).
struct CascadeTree {
    std::size_t depth = 1;
    std::size_t fanout = 1;
    std::vector<double> leaf_weights;
    std::vector<std::vector<double>> dust;

    std::size_t leaf_count() const { return leaf_weights.size(); }
    double total_mass() const;
    // Digits of leaf `index`, most significant first (k-1 entries).
    std::vector<std::size_t> path(std::size_t index) const;
};

// r(alpha, alpha') = 1 + common prefix length, which is k for alpha = alpha'.
std::size_t tree_overlap(const CascadeTree& tree, std::size_t a, std::size_t b);

// Tree `tree_id` of the ensemble defined by `seed`; each node draws from its
// own keyed stream.
CascadeTree sample_cascade(const CascadeSpec& spec, std::uint64_t seed, std::uint64_t tree_id = 0);

// Probability that two independent draws from the tree have overlap level r,
// for r = 1..k (returned 0-based).
std::vector<double> overlap_law(const CascadeTree& tree);

// Empirical level frequencies from `samples` independent pairs drawn by weight.
std::vector<double> sample_overlap_frequencies(const CascadeTree& tree, std::size_t samples, Rng& rng);

struct OverlapHistogram {
    std::vector<double> masses;   // level r = 1..k, stored 0-based
    std::vector<double> stderrs;
    std::size_t trees = 0;
};

// Averages per-tree level masses over `trees` cascades. samples == 0 uses the
// exact per-tree law; otherwise `samples` leaf pairs are drawn per tree.
OverlapHistogram overlap_histogram(const CascadeSpec& spec, std::size_t trees, std::size_t samples,
                                   std::uint64_t seed, std::size_t workers = 1);

// ---------------------------------------------------------------------------
// Hierarchical expectation recursion

// Law of the per-level variables z_0..z_{k-1}. Without a sampler each z_r is a
// vector of dims[r] independent standard Gaussians.
struct ZLaw {
    std::vector<std::size_t> dims;
    std::function<void(std::size_t level, Rng& rng, std::span<double> out)> sampler;

    static ZLaw gaussian(std::vector<std::size_t> dims) { return {std::move(dims), {}}; }
};

using LeafFunctional = std::function<double(const std::vector<std::vector<double>>& z)>;

struct HierarchicalMethod {
    enum class Kind { GaussHermite, NestedMonteCarlo };
    Kind kind = Kind::GaussHermite;
    // Gauss-Hermite nodes per Gaussian coordinate.
    std::size_t nodes = 64;
    // Refuse tensor rules with more leaf evaluations than this.
    std::size_t max_evaluations = 20'000'000;
    // Nested Monte Carlo: samples[r] draws of z_r per visit of level r.
    std::vector<std::size_t> samples;
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    static HierarchicalMethod gauss_hermite(std::size_t nodes = 64) {
        HierarchicalMethod m;
        m.nodes = nodes;
        return m;
    }
    static HierarchicalMethod monte_carlo(std::vector<std::size_t> samples, std::uint64_t seed,
                                          std::size_t workers = 1) {
        HierarchicalMethod m;
        m.kind = Kind::NestedMonteCarlo;
        m.samples = std::move(samples);
        m.seed = seed;
        m.workers = workers;
        return m;
    }
};

struct Estimate {
    double value = 0.0;
    // Standard error over the outermost level (0 for quadrature).
    double std_error = 0.0;
};

// F_k = leaf, F_r = (1/m_r) log E_r exp(m_r F_{r+1}) for r = k-1..1,
// F_0 = E_0 F_1. `m` holds m_0..m_k.
Estimate hierarchical_value(std::span<const double> m, const LeafFunctional& leaf, const ZLaw& z_law,
                            const HierarchicalMethod& method);

// ---------------------------------------------------------------------------
// Finite-M functionals

// (M/2) sum_r m_r (w_{r+1} - w_r).
double p2_value(const MixedModel& model, const AdmissiblePair& pair, double M);

// The P_{M,2} leaf sqrt(M) sum_r eta_r sqrt(w_{r+1}-w_r) + (M/2)(w_{k+1}-w_k)
// over scalar Gaussian levels.
LeafFunctional p2_leaf(const MixedModel& model, const AdmissiblePair& pair, double M);

// Increments u^s_{r+1} - u^s_r for r = 0..k (u^s_0 = 0, u^s_{k+1} = xi^s(1)).
std::vector<double> species_increments(const MixedModel& model, const AdmissiblePair& pair, std::size_t s);

// P^s_{M,1}: the sphere integral depends on the Gaussian field only through
// its norm, which evolves across levels as a two-variable radial chain
// (component along the current direction plus a chi-square with M-1 degrees
// of freedom), sampled by nested Monte Carlo. The Gauss-Hermite method
// integrates p1_species_leaf directly and is only practical for tiny M_s.
Estimate p1_species_value(const MixedModel& model, const AdmissiblePair& pair, std::size_t s, std::size_t M_s,
                          const HierarchicalMethod& method);

// The species leaf written directly in the Gaussian coordinates: z_r holds
// eta_{j,r} for j = 1..M_s. Useful for small M_s with quadrature.
LeafFunctional p1_species_leaf(const MixedModel& model, const AdmissiblePair& pair, std::size_t s,
                               std::size_t M_s);

// Split M into per-species counts ceil(lambda^s M), adjusted to sum to M.
std::vector<std::size_t> split_counts(std::span<const double> lambda, std::size_t M);

// (sum_s P^s_{M,1} - P_{M,2}) / M.
Estimate pm_over_m(const MixedModel& model, const AdmissiblePair& pair, const std::vector<std::size_t>& counts,
                   const HierarchicalMethod& method);

}  // namespace spinglass
