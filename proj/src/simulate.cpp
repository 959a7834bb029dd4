#include "spinglass/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "spinglass/errors.hpp"
#include "spinglass/parallel.hpp"
#include "spinglass/stats.hpp"

namespace spinglass {

namespace {

std::size_t ipow(std::size_t base, int exp) {
    std::size_t out = 1;
    for (int i = 0; i < exp; ++i) out *= base;
    return out;
}

std::string num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

}  // namespace

std::vector<std::size_t> species_of_coordinates(const SpeciesCounts& counts) {
    std::vector<std::size_t> out;
    out.reserve(counts.total());
    for (std::size_t s = 0; s < counts.n_per_species.size(); ++s)
        out.insert(out.end(), counts.n_per_species[s], s);
    return out;
}

Disorder build_disorder(const MixedModel& model, const SpeciesCounts& counts, std::uint64_t seed,
                        std::uint64_t replica) {
    require_valid(model);
    {
        const auto v = validate_counts(model, counts);
        if (!v.empty()) throw ValidationError("invalid species counts: " + v.front().detail);
    }
    const std::size_t N = counts.total();
    const auto owner = species_of_coordinates(counts);
    double entries = 0.0;
    for (const auto& term : model.terms) {
        if (term.p > 3)
            throw ValidationError("dense disorder supports p <= 3, got p = " + std::to_string(term.p));
        entries += std::pow(static_cast<double>(N), term.p);
    }
    if (entries > static_cast<double>(kMaxDisorderEntries))
        throw NumericalError("disorder needs " + num(entries) + " couplings (" + num(entries * 16.0 / 1048576.0) +
                             " MiB); the limit is " + std::to_string(kMaxDisorderEntries) + " couplings");

    Disorder d;
    d.n = N;
    d.seed = seed;
    d.replica = replica;
    for (std::size_t ti = 0; ti < model.terms.size(); ++ti) {
        const auto& term = model.terms[ti];
        Disorder::Term out;
        out.p = term.p;
        const std::size_t count = ipow(N, term.p);
        out.g.resize(count);
        out.coupling.resize(count);
        auto rng = Rng::stream(seed, {replica, ti});
        std::normal_distribution<double> normal;
        for (double& x : out.g) x = normal(rng);
        const double scale = term.beta * std::pow(static_cast<double>(N), -0.5 * (term.p - 1));
        std::vector<std::size_t> idx(static_cast<std::size_t>(term.p), 0), sidx(idx.size());
        for (std::size_t flat = 0; flat < count; ++flat) {
            for (std::size_t l = 0; l < idx.size(); ++l) sidx[l] = owner[idx[l]];
            out.coupling[flat] = scale * std::sqrt(term.delta_sq.at(sidx)) * out.g[flat];
            for (std::size_t pos = idx.size(); pos-- > 0;) {
                if (++idx[pos] < N) break;
                idx[pos] = 0;
            }
        }
        d.terms.push_back(std::move(out));
    }
    return d;
}

double hamiltonian_eval(const Disorder& disorder, std::span<const double> sigma) {
    const std::size_t N = disorder.n;
    if (sigma.size() != N) throw ValidationError("configuration has " + std::to_string(sigma.size()) +
                                                 " coordinates, disorder expects " + std::to_string(N));
    const Eigen::Map<const Eigen::VectorXd> s(sigma.data(), static_cast<Eigen::Index>(N));
    const auto n = static_cast<Eigen::Index>(N);
    double h = 0.0;
    for (const auto& term : disorder.terms) {
        switch (term.p) {
            case 1:
                h += Eigen::Map<const Eigen::VectorXd>(term.coupling.data(), n).dot(s);
                break;
            case 2: {
                const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> J(
                    term.coupling.data(), n, n);
                h += s.dot(J * s);
                break;
            }
            case 3: {
                const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> J(
                    term.coupling.data(), n * n, n);
                const Eigen::VectorXd inner = J * s;  // indexed by (a, b)
                const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> M(
                    inner.data(), n, n);
                h += s.dot(M * s);
                break;
            }
            default:
                throw ValidationError("unsupported term order " + std::to_string(term.p));
        }
    }
    return h;
}

double hamiltonian_naive(const Disorder& disorder, std::span<const double> sigma) {
    const std::size_t N = disorder.n;
    double h = 0.0;
    for (const auto& term : disorder.terms) {
        const std::size_t count = term.coupling.size();
        std::vector<std::size_t> idx(static_cast<std::size_t>(term.p), 0);
        for (std::size_t flat = 0; flat < count; ++flat) {
            double prod = term.coupling[flat];
            for (std::size_t i : idx) prod *= sigma[i];
            h += prod;
            for (std::size_t pos = idx.size(); pos-- > 0;) {
                if (++idx[pos] < N) break;
                idx[pos] = 0;
            }
        }
    }
    return h;
}

std::vector<double> overlap_vector(const SpeciesCounts& counts, std::span<const double> a, std::span<const double> b) {
    std::vector<double> out(counts.n_per_species.size(), 0.0);
    std::size_t i = 0;
    for (std::size_t s = 0; s < out.size(); ++s) {
        const std::size_t n = counts.n_per_species[s];
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j, ++i) dot += a[i] * b[i];
        out[s] = dot / static_cast<double>(n);
    }
    return out;
}

double averaged_overlap(const SpeciesCounts& counts, std::span<const double> a, std::span<const double> b) {
    const auto r = overlap_vector(counts, a, b);
    const auto w = counts.proportions();
    double out = 0.0;
    for (std::size_t s = 0; s < r.size(); ++s) out += w[s] * r[s];
    return out;
}

void renormalize(const SpeciesCounts& counts, std::vector<double>& sigma) {
    std::size_t i = 0;
    for (std::size_t n : counts.n_per_species) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) norm2 += sigma[i + j] * sigma[i + j];
        const double scale = std::sqrt(static_cast<double>(n) / norm2);
        for (std::size_t j = 0; j < n; ++j) sigma[i + j] *= scale;
        i += n;
    }
}

std::vector<double> random_configuration(const SpeciesCounts& counts, Rng& rng) {
    std::vector<double> sigma(counts.total());
    std::normal_distribution<double> normal;
    for (double& x : sigma) {
        do {
            x = normal(rng);
        } while (x == 0.0);
    }
    renormalize(counts, sigma);
    return sigma;
}

// ---------------------------------------------------------------------------
// Covariance self-test

CovarianceReport covariance_selftest(const MixedModel& model, const SpeciesCounts& counts, std::size_t trials,
                                     std::size_t pairs, std::uint64_t seed, std::size_t workers) {
    if (trials < 2) throw ValidationError("covariance_selftest: need at least two trials");
    if (pairs < 1) throw ValidationError("covariance_selftest: need at least one pair");
    const std::size_t N = counts.total();
    auto rng = Rng::stream(seed, {0xc07a});
    std::vector<std::pair<std::vector<double>, std::vector<double>>> configs;
    for (std::size_t p = 0; p < pairs; ++p) {
        auto a = random_configuration(counts, rng);
        std::vector<double> b;
        if (p == 0) {
            b = a;
        } else if (p == 1) {
            b = random_configuration(counts, rng);
            std::size_t i = 0;
            bool feasible = true;
            for (std::size_t n : counts.n_per_species) {
                if (n < 2) feasible = false;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += a[i + j] * b[i + j];
                for (std::size_t j = 0; j < n; ++j) b[i + j] -= dot / static_cast<double>(n) * a[i + j];
                i += n;
            }
            if (feasible) renormalize(counts, b);
        } else {
            b = random_configuration(counts, rng);
        }
        configs.emplace_back(std::move(a), std::move(b));
    }

    std::vector<std::vector<double>> products(pairs, std::vector<double>(trials));
    parallel_for(trials, workers, [&](std::size_t t) {
        const auto disorder = build_disorder(model, counts, seed, t);
        for (std::size_t p = 0; p < pairs; ++p) {
            const double ha = hamiltonian_eval(disorder, configs[p].first);
            const double hb = p == 0 ? ha : hamiltonian_eval(disorder, configs[p].second);
            products[p][t] = ha * hb;
        }
    });

    CovarianceReport report;
    for (std::size_t p = 0; p < pairs; ++p) {
        CovarianceRow row;
        row.overlap = overlap_vector(counts, configs[p].first, configs[p].second);
        std::vector<double> clipped = row.overlap;
        for (double& r : clipped) r = std::clamp(r, -1.0, 1.0);
        row.empirical = mean(products[p]);
        row.std_error = standard_error(products[p]);
        row.expected = static_cast<double>(N) * xi_finite_n(model, counts, clipped);
        const double tol = row.std_error > 0.0 ? 4.0 * row.std_error : 1e-12 * (1.0 + std::abs(row.expected));
        row.ok = std::abs(row.empirical - row.expected) <= tol;
        report.ok = report.ok && row.ok;
        report.rows.push_back(std::move(row));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Markov chain

SphereChain::SphereChain(const Disorder& disorder, const SpeciesCounts& counts, std::vector<double> sigma)
    : disorder_(&disorder), counts_(counts), offsets_(counts.offsets()), sigma_(std::move(sigma)) {
    if (sigma_.size() != disorder.n) throw ValidationError("configuration does not match the disorder size");
    refresh();
}

void SphereChain::refresh() {
    const std::size_t N = disorder_->n;
    fields_.clear();
    for (const auto& term : disorder_->terms) {
        if (term.p != 2) continue;
        std::vector<double> h(N, 0.0);
        for (std::size_t a = 0; a < N; ++a)
            for (std::size_t b = 0; b < N; ++b) {
                const double J = term.coupling[a * N + b];
                h[a] += J * sigma_[b];
                h[b] += J * sigma_[a];
            }
        fields_.push_back(std::move(h));
    }
    energy_ = hamiltonian_eval(*disorder_, sigma_);
}

namespace {

// Change in the p = 3 sum when sigma moves by D on the coordinates in C.
double delta_cubic(const std::vector<double>& J, std::size_t N, const std::vector<double>& sigma,
                   const std::size_t* C, const double* D, std::size_t nc) {
    auto at = [&](std::size_t a, std::size_t b, std::size_t c) { return J[(a * N + b) * N + c]; };
    double out = 0.0;
    // One displaced position.
    for (std::size_t x = 0; x < nc; ++x) {
        const std::size_t i = C[x];
        double s1 = 0.0, s2 = 0.0, s3 = 0.0;
        for (std::size_t b = 0; b < N; ++b)
            for (std::size_t c = 0; c < N; ++c) {
                const double w = sigma[b] * sigma[c];
                s1 += at(i, b, c) * w;
                s2 += at(b, i, c) * w;
                s3 += at(b, c, i) * w;
            }
        out += D[x] * (s1 + s2 + s3);
    }
    // Two displaced positions.
    for (std::size_t x = 0; x < nc; ++x)
        for (std::size_t y = 0; y < nc; ++y) {
            const std::size_t i = C[x], j = C[y];
            double s = 0.0;
            for (std::size_t c = 0; c < N; ++c) s += (at(i, j, c) + at(i, c, j) + at(c, i, j)) * sigma[c];
            out += D[x] * D[y] * s;
        }
    // Three displaced positions.
    for (std::size_t x = 0; x < nc; ++x)
        for (std::size_t y = 0; y < nc; ++y)
            for (std::size_t z = 0; z < nc; ++z) out += D[x] * D[y] * D[z] * at(C[x], C[y], C[z]);
    return out;
}

}  // namespace

double SphereChain::delta_rotation(std::size_t i, std::size_t j, double phi) const {
    const double c = std::cos(phi), s = std::sin(phi);
    const std::size_t C[2] = {i, j};
    double D[2];
    std::size_t nc = 2;
    if (i == j) {
        // One-coordinate sphere: a rotation by pi is the sign flip.
        D[0] = -2.0 * sigma_[i];
        nc = 1;
    } else {
        D[0] = c * sigma_[i] - s * sigma_[j] - sigma_[i];
        D[1] = s * sigma_[i] + c * sigma_[j] - sigma_[j];
    }
    const std::size_t N = disorder_->n;
    double delta = 0.0;
    std::size_t f = 0;
    for (const auto& term : disorder_->terms) {
        const auto& J = term.coupling;
        switch (term.p) {
            case 1:
                for (std::size_t x = 0; x < nc; ++x) delta += J[C[x]] * D[x];
                break;
            case 2: {
                const auto& h = fields_[f++];
                for (std::size_t x = 0; x < nc; ++x) delta += D[x] * h[C[x]];
                for (std::size_t x = 0; x < nc; ++x)
                    for (std::size_t y = 0; y < nc; ++y) delta += D[x] * D[y] * J[C[x] * N + C[y]];
                break;
            }
            case 3:
                delta += delta_cubic(J, N, sigma_, C, D, nc);
                break;
            default:
                throw ValidationError("unsupported term order " + std::to_string(term.p));
        }
    }
    return delta;
}

void SphereChain::apply_rotation(std::size_t i, std::size_t j, double phi) {
    const std::size_t N = disorder_->n;
    double ni, nj = 0.0;
    if (i == j) {
        ni = -sigma_[i];
    } else {
        const double c = std::cos(phi), s = std::sin(phi);
        ni = c * sigma_[i] - s * sigma_[j];
        nj = s * sigma_[i] + c * sigma_[j];
    }
    const double di = ni - sigma_[i];
    const double dj = i == j ? 0.0 : nj - sigma_[j];
    std::size_t f = 0;
    for (const auto& term : disorder_->terms) {
        if (term.p != 2) continue;
        auto& h = fields_[f++];
        const auto& J = term.coupling;
        for (std::size_t a = 0; a < N; ++a) {
            h[a] += (J[a * N + i] + J[i * N + a]) * di;
            if (i != j) h[a] += (J[a * N + j] + J[j * N + a]) * dj;
        }
    }
    sigma_[i] = ni;
    if (i != j) sigma_[j] = nj;
}

double SphereChain::sweep(double t, Rng& rng) {
    std::normal_distribution<double> normal;
    std::size_t proposals = 0, accepted = 0;
    for (std::size_t s = 0; s < counts_.n_per_species.size(); ++s) {
        const std::size_t n = counts_.n_per_species[s];
        const std::size_t base = offsets_[s];
        for (std::size_t step = 0; step < n; ++step) {
            std::size_t i = base, j = base;
            double phi = 0.0;
            if (n >= 2) {
                i = base + static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
                j = base + static_cast<std::size_t>(rng.uniform() * static_cast<double>(n - 1));
                if (i >= base + n) i = base + n - 1;
                if (j >= i) ++j;
                if (j >= base + n) j = base + n - 1;
                phi = step_ * normal(rng);
            }
            ++proposals;
            const double delta = t == 0.0 ? 0.0 : delta_rotation(i, j, phi);
            const double log_ratio = t * delta;
            if (log_ratio >= 0.0 || rng.uniform() < std::exp(log_ratio)) {
                if (t != 0.0 || !fields_.empty()) apply_rotation(i, j, phi);
                else if (i == j) sigma_[i] = -sigma_[i];
                else {
                    const double c = std::cos(phi), sn = std::sin(phi);
                    const double ni = c * sigma_[i] - sn * sigma_[j];
                    const double nj = sn * sigma_[i] + c * sigma_[j];
                    sigma_[i] = ni;
                    sigma_[j] = nj;
                }
                ++accepted;
            }
        }
    }
    renormalize(counts_, sigma_);
    refresh();
    return proposals == 0 ? 1.0 : static_cast<double>(accepted) / static_cast<double>(proposals);
}

void SphereChain::tune(double t, std::size_t sweeps, Rng& rng) {
    for (std::size_t k = 0; k < sweeps; ++k) {
        const double rate = sweep(t, rng);
        if (rate > 0.6) step_ = std::min(step_ * 1.2, std::numbers::pi);
        if (rate < 0.4) step_ = std::max(step_ * 0.8, 1e-4);
    }
}

std::vector<double> mcmc_step(const Disorder& disorder, const SpeciesCounts& counts, std::vector<double> sigma,
                              double t, Rng& rng, double step) {
    if (t < 0.0) throw ValidationError("mcmc_step: inverse temperature must be >= 0");
    SphereChain chain(disorder, counts, std::move(sigma));
    chain.set_step(step);
    chain.sweep(t, rng);
    return chain.sigma();
}

// ---------------------------------------------------------------------------
// Thermodynamic integration

std::vector<double> uniform_grid(std::size_t nodes) {
    if (nodes < 2) throw ValidationError("uniform_grid: need at least two nodes");
    std::vector<double> g(nodes);
    for (std::size_t i = 0; i < nodes; ++i) g[i] = static_cast<double>(i) / static_cast<double>(nodes - 1);
    return g;
}

namespace {

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    return s;
}

}  // namespace

McEstimate free_energy_ti(const MixedModel& model, const SpeciesCounts& counts, const TiOptions& options) {
    const auto& grid = options.t_grid;
    if (grid.size() < 8) throw ValidationError("free_energy_ti: the t grid needs at least 8 nodes");
    if (grid.front() != 0.0 || grid.back() != 1.0) throw ValidationError("free_energy_ti: the t grid must run from 0 to 1");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw ValidationError("free_energy_ti: the t grid must be increasing");
    if (options.replicas < 1) throw ValidationError("free_energy_ti: need at least one disorder replica");
    if (options.sweeps < 1) throw ValidationError("free_energy_ti: need at least one measurement sweep");

    const std::size_t R = options.replicas;
    const double N = static_cast<double>(counts.total());
    std::vector<double> fwd(R), bwd(R), acc(R);
    std::vector<std::vector<double>> curves(R);
    parallel_for(R, options.workers, [&](std::size_t d) {
        const auto disorder = build_disorder(model, counts, options.seed, d);
        auto rng = Rng::stream(options.seed, {d, 0x7111});
        SphereChain chain(disorder, counts, random_configuration(counts, rng));
        double acceptance = 0.0;
        std::size_t measured = 0;
        auto pass = [&](bool forward) {
            std::vector<double> e(grid.size());
            for (std::size_t n = 0; n < grid.size(); ++n) {
                const std::size_t idx = forward ? n : grid.size() - 1 - n;
                const double t = grid[idx];
                chain.tune(t, options.burn_in, rng);
                double sum = 0.0;
                for (std::size_t s = 0; s < options.sweeps; ++s) {
                    acceptance += chain.sweep(t, rng);
                    ++measured;
                    sum += chain.energy();
                }
                e[idx] = sum / static_cast<double>(options.sweeps) / N;
            }
            return e;
        };
        curves[d] = pass(true);
        fwd[d] = trapezoid(grid, curves[d]);
        bwd[d] = trapezoid(grid, pass(false));
        acc[d] = acceptance / static_cast<double>(measured);
    });

    McEstimate est;
    est.replicas = R;
    est.per_replica.resize(R);
    std::vector<double> diff(R);
    for (std::size_t d = 0; d < R; ++d) {
        est.per_replica[d] = 0.5 * (fwd[d] + bwd[d]);
        diff[d] = fwd[d] - bwd[d];
    }
    est.value = mean(est.per_replica);
    est.std_error = standard_error(est.per_replica);
    est.forward = mean(fwd);
    est.backward = mean(bwd);
    est.mean_acceptance = mean(acc);
    if (R >= 2) est.equilibrated = std::abs(mean(diff)) <= 3.0 * standard_error(diff) + 1e-15;
    est.energy_curve.assign(grid.size(), 0.0);
    for (std::size_t n = 0; n < grid.size(); ++n) {
        for (std::size_t d = 0; d < R; ++d) est.energy_curve[n] += curves[d][n];
        est.energy_curve[n] /= static_cast<double>(R);
    }
    return est;
}

// ---------------------------------------------------------------------------
// Overlaps

OverlapSamples overlap_stats(const Disorder& disorder, const SpeciesCounts& counts, const OverlapOptions& options) {
    if (options.chains < 2) throw ValidationError("overlap_stats: need at least two chains");
    if (options.t < 0.0) throw ValidationError("overlap_stats: inverse temperature must be >= 0");
    std::vector<SphereChain> chains;
    std::vector<Rng> rngs;
    for (std::size_t c = 0; c < options.chains; ++c) {
        rngs.push_back(Rng::stream(options.seed, {disorder.replica, c, 0x0e71a}));
        chains.emplace_back(disorder, counts, random_configuration(counts, rngs.back()));
        chains.back().tune(options.t, options.burn_in, rngs.back());
    }
    OverlapSamples out;
    out.chains = options.chains;
    out.snapshots = options.snapshots;
    out.weights = counts.proportions();
    for (std::size_t snap = 0; snap < options.snapshots; ++snap) {
        for (std::size_t c = 0; c < chains.size(); ++c)
            for (std::size_t k = 0; k < std::max<std::size_t>(1, options.thin); ++k) chains[c].sweep(options.t, rngs[c]);
        for (std::size_t a = 0; a < chains.size(); ++a)
            for (std::size_t b = a + 1; b < chains.size(); ++b) {
                OverlapSample row;
                row.snapshot = snap;
                row.a = a;
                row.b = b;
                row.by_species = overlap_vector(counts, chains[a].sigma(), chains[b].sigma());
                for (std::size_t s = 0; s < row.by_species.size(); ++s) row.overlap += out.weights[s] * row.by_species[s];
                out.rows.push_back(std::move(row));
            }
    }
    return out;
}

OverlapDiagnostics overlap_diagnostics(const OverlapSamples& samples, std::size_t null_draws, std::uint64_t seed) {
    OverlapDiagnostics out;
    const std::size_t n = samples.chains;
    const std::size_t T = samples.snapshots;
    // R[t][a][b], symmetric.
    std::vector<std::vector<std::vector<double>>> R(T, std::vector<std::vector<double>>(n, std::vector<double>(n, 1.0)));
    for (const auto& row : samples.rows) {
        if (row.snapshot >= T || row.a >= n || row.b >= n) throw ValidationError("overlap sample out of range");
        R[row.snapshot][row.a][row.b] = row.overlap;
        R[row.snapshot][row.b][row.a] = row.overlap;
    }

    if (n >= 3 && T >= 2) {
        auto rng = Rng::stream(seed, {0x66});
        for (int fa : {1, 2})
            for (int fb : {1, 2}) {
                double p1 = 0.0, p2 = 0.0, p12 = 0.0;
                std::size_t pairs = 0;
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t a = 0; a < n; ++a)
                        for (std::size_t b = 0; b < n; ++b) {
                            if (a == b) continue;
                            const double r = R[t][a][b];
                            p1 += std::pow(r, fa);
                            p2 += std::pow(r, fb);
                            p12 += std::pow(r, fa + fb);
                            ++pairs;
                        }
                p1 /= static_cast<double>(pairs);
                p2 /= static_cast<double>(pairs);
                p12 /= static_cast<double>(pairs);
                // Triple average with the third replica taken from snapshot other[t].
                auto triple = [&](const std::vector<std::size_t>& other) {
                    double s = 0.0;
                    std::size_t count = 0;
                    for (std::size_t t = 0; t < T; ++t)
                        for (std::size_t a = 0; a < n; ++a)
                            for (std::size_t b = 0; b < n; ++b)
                                for (std::size_t c = 0; c < n; ++c) {
                                    if (a == b || a == c || b == c) continue;
                                    s += std::pow(R[t][a][b], fa) * std::pow(R[other[t]][a][c], fb);
                                    ++count;
                                }
                    return s / static_cast<double>(count);
                };
                std::vector<std::size_t> same(T);
                std::iota(same.begin(), same.end(), 0);
                GgRow row;
                row.f_degree = fa;
                row.psi_degree = fb;
                row.discrepancy = triple(same) - 0.5 * p1 * p2 - 0.5 * p12;
                std::vector<double> null(null_draws);
                for (std::size_t d = 0; d < null_draws; ++d) {
                    std::vector<std::size_t> other(T);
                    for (std::size_t t = 0; t < T; ++t) {
                        std::size_t o = static_cast<std::size_t>(rng.uniform() * static_cast<double>(T - 1));
                        if (o >= T - 1) o = T - 2;
                        other[t] = o >= t ? o + 1 : o;
                    }
                    null[d] = triple(other) - 0.5 * p1 * p2 - 0.5 * p12;
                }
                row.null_mean = null.empty() ? 0.0 : mean(null);
                row.null_sd = sample_sd(null);
                row.consistent = std::abs(row.discrepancy - row.null_mean) <= 3.0 * row.null_sd + 1e-15;
                out.gg.push_back(row);
            }
    }

    const std::size_t S = samples.weights.size();
    for (std::size_t s = 0; s < S; ++s) {
        SyncSpecies sync;
        for (const auto& row : samples.rows) {
            sync.overlap.push_back(row.overlap);
            sync.species_overlap.push_back(row.by_species[s]);
        }
        sync.fitted = isotonic_fit(sync.overlap, sync.species_overlap);
        double ss = 0.0;
        for (std::size_t i = 0; i < sync.fitted.size(); ++i) {
            const double e = sync.species_overlap[i] - sync.fitted[i];
            ss += e * e;
        }
        sync.residual = sync.fitted.empty() ? 0.0 : std::sqrt(ss / static_cast<double>(sync.fitted.size()));
        out.sync.push_back(std::move(sync));
    }
    return out;
}

GuerraGap guerra_gap(const MixedModel& model, const McEstimate& mc, double variational_value, double allowance) {
    require_valid(model);
    const auto convexity = check_convexity(model);
    if (!convexity.convex) {
        std::string where;
        for (std::size_t s = 0; s < convexity.worst_point.size(); ++s)
            where += (s ? ", " : "") + num(convexity.worst_point[s]);
        throw RefusedError("the Guerra bound requires a convex xi; minimum Hessian eigenvalue " +
                           num(convexity.min_eigenvalue) + " at (" + where + ")");
    }
    GuerraGap out;
    out.gap = variational_value - mc.value;
    out.threshold = -3.0 * mc.std_error - allowance;
    out.ok = out.gap >= out.threshold;
    return out;
}

}  // namespace spinglass
