#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spinglass/model.hpp"
#include "spinglass/rng.hpp"

namespace spinglass {

// Gaussian couplings for every term: g over ordered index tuples in [N]^p
// (row-major), together with the effective couplings
// J = beta_p N^{-(p-1)/2} sqrt(Delta^2_{s(i)}) g actually used by H.
struct Disorder {
    struct Term {
        int p = 0;
        std::vector<double> g;
        std::vector<double> coupling;
    };
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;
    std::vector<Term> terms;
};

// Couplings stored densely; the total entry count is limited to this.
inline constexpr std::size_t kMaxDisorderEntries = std::size_t{1} << 25;

Disorder build_disorder(const MixedModel& model, const SpeciesCounts& counts, std::uint64_t seed,
                        std::uint64_t replica = 0);

// Species owning each coordinate (blocks are contiguous).
std::vector<std::size_t> species_of_coordinates(const SpeciesCounts& counts);

double hamiltonian_eval(const Disorder& disorder, std::span<const double> sigma);

// The same sum as hamiltonian_eval, by direct enumeration of index tuples.
double hamiltonian_naive(const Disorder& disorder, std::span<const double> sigma);

// Per-species overlaps R^s = (1/N^s) sum_{i in I^s} sigma_i sigma'_i.
std::vector<double> overlap_vector(const SpeciesCounts& counts, std::span<const double> a, std::span<const double> b);

// R = sum_s lambda^s(N) R^s.
double averaged_overlap(const SpeciesCounts& counts, std::span<const double> a, std::span<const double> b);

// Uniform draw from the product of spheres {sum_{i in I^s} sigma_i^2 = N^s}.
std::vector<double> random_configuration(const SpeciesCounts& counts, Rng& rng);

// Rescale every species block to its sphere.
void renormalize(const SpeciesCounts& counts, std::vector<double>& sigma);

struct CovarianceRow {
    std::vector<double> overlap;  // R^s(sigma, sigma')
    double empirical = 0.0;       // disorder average of H(sigma) H(sigma')
    double expected = 0.0;        // N xi_N(R)
    double std_error = 0.0;
    bool ok = true;               // |empirical - expected| <= 4 std_error
};

struct CovarianceReport {
    std::vector<CovarianceRow> rows;
    bool ok = true;
};

// Pair 0 is (sigma, sigma); pair 1 has sigma' orthogonal to sigma within each
// species; the rest are independent uniform pairs.
CovarianceReport covariance_selftest(const MixedModel& model, const SpeciesCounts& counts, std::size_t trials,
                                     std::size_t pairs, std::uint64_t seed, std::size_t workers = 1);

// Markov chain for the Gibbs measure proportional to exp(t H) on the product
// of spheres. Proposals rotate a random coordinate pair of one species by a
// Normal(0, step^2) angle (a sign flip for one-coordinate species).
class SphereChain {
public:
    SphereChain(const Disorder& disorder, const SpeciesCounts& counts, std::vector<double> sigma);

    const std::vector<double>& sigma() const { return sigma_; }
    double energy() const { return energy_; }
    double step() const { return step_; }
    void set_step(double step) { step_ = step; }

    // Change in H if coordinates (i, j) were rotated by angle phi.
    double delta_rotation(std::size_t i, std::size_t j, double phi) const;

    // One sweep (N proposals) at inverse temperature t; returns the acceptance
    // fraction. Renormalizes and refreshes cached fields afterwards.
    double sweep(double t, Rng& rng);

    // Burn-in sweeps that also tune the step to 40-60% acceptance.
    void tune(double t, std::size_t sweeps, Rng& rng);

    void refresh();

private:
    void apply_rotation(std::size_t i, std::size_t j, double phi);

    const Disorder* disorder_;
    SpeciesCounts counts_;
    std::vector<std::size_t> offsets_;
    std::vector<double> sigma_;
    // For each p = 2 term, h = (J + J^T) sigma.
    std::vector<std::vector<double>> fields_;
    double energy_ = 0.0;
    double step_ = 1.0;
};

// Returns the configuration after one sweep from `sigma`.
std::vector<double> mcmc_step(const Disorder& disorder, const SpeciesCounts& counts, std::vector<double> sigma,
                              double t, Rng& rng, double step = 1.0);

struct TiOptions {
    std::vector<double> t_grid;
    std::size_t sweeps = 400;
    std::size_t burn_in = 200;
    std::size_t replicas = 16;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

std::vector<double> uniform_grid(std::size_t nodes);

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t replicas = 0;
    double forward = 0.0;
    double backward = 0.0;
    // False when the forward and backward passes disagree beyond 3 sigma.
    bool equilibrated = true;
    double mean_acceptance = 0.0;
    std::vector<double> per_replica;
    // Disorder-averaged <H>_t / N on the t grid (forward pass).
    std::vector<double> energy_curve;
};

// (1/N) E log Z_N = int_0^1 (1/N) E <H>_t dt, trapezoid rule on the t grid,
// averaged over forward and backward passes and over disorder replicas.
McEstimate free_energy_ti(const MixedModel& model, const SpeciesCounts& counts, const TiOptions& options);

struct OverlapSample {
    std::size_t snapshot = 0;
    std::size_t a = 0;
    std::size_t b = 0;
    double overlap = 0.0;             // R
    std::vector<double> by_species;   // R^s
};

struct OverlapSamples {
    std::size_t chains = 0;
    std::size_t snapshots = 0;
    std::vector<double> weights;  // lambda^s(N)
    std::vector<OverlapSample> rows;
};

struct OverlapOptions {
    double t = 1.0;
    std::size_t chains = 3;
    std::size_t snapshots = 200;
    std::size_t thin = 2;
    std::size_t burn_in = 200;
    std::uint64_t seed = 0;
};

// Independent chains under one disorder; every snapshot records all replica
// pairs a < b.
OverlapSamples overlap_stats(const Disorder& disorder, const SpeciesCounts& counts, const OverlapOptions& options);

struct GgRow {
    int f_degree = 1;
    int psi_degree = 1;
    double discrepancy = 0.0;
    double null_mean = 0.0;
    double null_sd = 0.0;
    // |discrepancy - null_mean| <= 3 null_sd
    bool consistent = true;
};

struct SyncSpecies {
    std::vector<double> overlap;
    std::vector<double> species_overlap;
    std::vector<double> fitted;
    double residual = 0.0;  // root-mean-square of species_overlap - fitted
};

struct OverlapDiagnostics {
    std::vector<GgRow> gg;
    std::vector<SyncSpecies> sync;
};

// Ghirlanda-Guerra discrepancy for f = R_{12}^a, psi = R^b (a, b in {1, 2}),
// compared against a null built by taking the third replica from a random
// other snapshot; synchronization scatter with an isotonic fit per species.
OverlapDiagnostics overlap_diagnostics(const OverlapSamples& samples, std::size_t null_draws = 200,
                                       std::uint64_t seed = 0);

struct GuerraGap {
    double gap = 0.0;
    double threshold = 0.0;
    bool ok = true;
};

// gap = variational - mc.value; ok iff gap >= -3 stderr - allowance. Refuses
// models that fail the convexity check.
GuerraGap guerra_gap(const MixedModel& model, const McEstimate& mc, double variational_value,
                     double allowance = 0.05);

}  // namespace spinglass
