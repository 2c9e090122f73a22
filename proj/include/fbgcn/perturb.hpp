#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "errors.hpp"
#include "sparse.hpp"
#include "spectral.hpp"

namespace fbgcn {

enum class NoiseKind { uniform, gaussian };

struct PerturbationParams {
    Vector xi;              // unconstrained shape parameters
    double radius = 0.1;    // epsilon
    std::int64_t k = 10;
    int M = 5;              // draws per step
    NoiseKind noise_kind = NoiseKind::uniform;

    static PerturbationParams initial(std::int64_t k, double radius, int M, NoiseKind kind = NoiseKind::uniform) {
        return {Vector::Zero(k), radius, k, M, kind};
    }

    // radius * sigmoid(xi), in (0, radius].
    Vector shape() const {
        Vector s(xi.size());
        for (Eigen::Index i = 0; i < xi.size(); ++i) s[i] = radius / (1.0 + std::exp(-xi[i]));
        return s;
    }
};

// M x k noise, uniform on [-1/2, 1/2] or standard normal.
inline Dense draw_noise(std::int64_t k, std::int64_t M, NoiseKind kind, std::mt19937_64& rng) {
    if (k < 1 || M < 1) throw UsageError("draw_noise: k and M must be >= 1");
    Dense e(M, k);
    if (kind == NoiseKind::uniform) {
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        for (std::int64_t r = 0; r < M; ++r)
            for (std::int64_t c = 0; c < k; ++c) e(r, c) = u(rng);
    } else {
        std::normal_distribution<double> g(0.0, 1.0);
        for (std::int64_t r = 0; r < M; ++r)
            for (std::int64_t c = 0; c < k; ++c) e(r, c) = g(rng);
    }
    return e;
}

inline Dense draw_noise(std::int64_t k, std::int64_t M, NoiseKind kind, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return draw_noise(k, M, kind, rng);
}

// phi = exp(-theta_bar / 2) o shape o noise.
inline Vector perturbation_vector(const PerturbationParams& p, const Vector& theta_bar, const Vector& noise) {
    if (theta_bar.size() != p.xi.size() || noise.size() != p.xi.size())
        throw UsageError("perturbation_vector: dimension mismatch");
    const Vector shape = p.shape();
    Vector phi(noise.size());
    for (Eigen::Index i = 0; i < noise.size(); ++i) phi[i] = std::exp(-0.5 * theta_bar[i]) * shape[i] * noise[i];
    return phi;
}

inline Vector softmax(const Vector& z) {
    const double m = z.maxCoeff();
    Vector e = (z.array() - m).exp().matrix();
    return e / e.sum();
}

// softmax(theta_bar + phi) - lambda_bar. Sums to zero, so the rank-k
// correction it defines is trace-free. phi == 0 yields exactly zero.
inline Vector spectrum_delta(const Vector& theta_bar, const Vector& lambda_bar, const Vector& phi) {
    if (theta_bar.size() != lambda_bar.size() || phi.size() != theta_bar.size())
        throw UsageError("spectrum_delta: dimension mismatch");
    if ((phi.array() == 0.0).all()) return Vector::Zero(phi.size());
    return softmax(theta_bar + phi) - lambda_bar;
}

// Propagation through the perturbed matrix I - tr(L) rho(A(phi)), i.e.
// ÃX - tr(L) U_bar diag(delta) U_bar^T X, without forming the dense matrix.
inline Dense apply_perturbed_propagation(const SparseSym& a_tilde, const SpectralBasis& basis, const Vector& delta,
                                         const Dense& x) {
    if (basis.n() != a_tilde.n() || delta.size() != basis.k || x.rows() != a_tilde.n())
        throw UsageError("apply_perturbed_propagation: dimension mismatch");
    Dense out = spmm(a_tilde, x);
    if ((delta.array() == 0.0).all()) return out;
    const Dense projected = basis.U_bar.transpose() * x;  // k x d
    out.noalias() -= basis.trace_L * (basis.U_bar * (delta.asDiagonal() * projected));
    return out;
}

// rho + U_bar diag(delta) U_bar^T. Dense, test scale. Positive
// semidefiniteness is not enforced; see min_eigenvalue for a diagnostic.
inline Dense perturbed_density_dense(const SpectralBasis& basis, const Dense& rho, const Vector& delta) {
    if (rho.rows() != basis.n() || delta.size() != basis.k) throw UsageError("perturbed_density_dense: dimension mismatch");
    const Dense c = basis.U_bar * delta.asDiagonal() * basis.U_bar.transpose();
    Dense out = rho + 0.5 * (c + c.transpose());
    return out;
}

// One Monte-Carlo branch of the perturbation.
struct Perturbation {
    Vector noise;
    Vector phi;
    Vector delta;
};

inline Perturbation make_perturbation(const PerturbationParams& p, const SpectralBasis& basis, const Vector& noise) {
    Perturbation out{noise, perturbation_vector(p, basis.theta_bar, noise), {}};
    out.delta = spectrum_delta(basis.theta_bar, basis.lambda_bar, out.phi);
    return out;
}

// d loss / d delta for one propagation step out = P(x), given the upstream
// gradient g = d loss / d out: -tr(L) * rowsum((U^T g) o (U^T x)).
inline Vector delta_gradient(const SpectralBasis& basis, const Dense& x, const Dense& g) {
    const Dense ux = basis.U_bar.transpose() * x;
    const Dense ug = basis.U_bar.transpose() * g;
    return -basis.trace_L * ux.cwiseProduct(ug).rowwise().sum();
}

// Chains d loss / d delta back to d loss / d xi through the softmax and the
// sigmoid reparameterization.
inline Vector xi_gradient(const PerturbationParams& p, const SpectralBasis& basis, const Perturbation& branch,
                          const Vector& grad_delta) {
    const Vector s = softmax(basis.theta_bar + branch.phi);
    const Vector grad_phi = s.cwiseProduct((grad_delta.array() - s.dot(grad_delta)).matrix());
    Vector g(p.xi.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        const double sig = 1.0 / (1.0 + std::exp(-p.xi[i]));
        const double dphi_dxi = std::exp(-0.5 * basis.theta_bar[i]) * p.radius * sig * (1.0 - sig) * branch.noise[i];
        g[i] = grad_phi[i] * dphi_dxi;
    }
    return g;
}

// Propagation operator used by the network: plain Ã, or Ã with a fixed
// spectral perturbation. The operator is symmetric, so the same apply()
// serves the backward pass.
class Propagator {
public:
    explicit Propagator(const SparseSym& a_tilde) : a_(&a_tilde) {}
    Propagator(const SparseSym& a_tilde, const SpectralBasis& basis, Vector delta)
        : a_(&a_tilde), basis_(&basis), delta_(std::move(delta)) {}

    Dense apply(const Dense& x) const {
        if (!basis_) return spmm(*a_, x);
        return apply_perturbed_propagation(*a_, *basis_, delta_, x);
    }

    bool perturbed() const noexcept { return basis_ != nullptr; }
    std::int64_t n() const { return a_->n(); }
    const SparseSym& matrix() const noexcept { return *a_; }
    const SpectralBasis* basis() const noexcept { return basis_; }
    const Vector& delta() const noexcept { return delta_; }

private:
    const SparseSym* a_;
    const SpectralBasis* basis_ = nullptr;
    Vector delta_;
};

}  // namespace fbgcn
