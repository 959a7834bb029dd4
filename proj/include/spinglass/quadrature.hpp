#pragma once

#include <cstddef>
#include <vector>

namespace spinglass {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Gauss-Legendre rule on [-1, 1].
QuadratureRule gauss_legendre(std::size_t n);

// Gauss-Legendre rule mapped onto [a, b].
QuadratureRule gauss_legendre(std::size_t n, double a, double b);

// Gauss-Hermite rule for the standard normal law: E f(Z) ~ sum_i w_i f(x_i),
// with the weights summing to one.
QuadratureRule gauss_hermite_normal(std::size_t n);

// log(sum_i exp(x_i)), stable for large |x_i|.
double log_sum_exp(const std::vector<double>& x);

// log of int exp(<kappa, y>) over the uniform probability measure on the
// sphere {|kappa|^2 = dim} in R^dim, as a function of x = sqrt(dim) * |y|.
// dim == 1 is the two-point sphere {-1, +1}. For dim >= 2 the integral is
// reduced to the latitude angle and accumulated in the log domain on panels
// placed around the peak of the integrand.
double log_sphere_mgf(std::size_t dim, double x);

}  // namespace spinglass
