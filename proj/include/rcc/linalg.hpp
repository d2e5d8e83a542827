#pragma once

#include <functional>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "rcc/channel.hpp"

namespace rcc {

// Raised when an iterative search exhausts its budget or loses its bracket.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when a block subproblem has an empty feasible set or a scenario
// admits no feasible starting point.
struct InfeasibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double hermitian_deviation(const MatC& H) {
    return (H - H.adjoint()).cwiseAbs().maxCoeff();
}

// argmin_x x^H H x - 2 Re(b^H x) for Hermitian PSD H: solves H x = b.
// Singular H gets a ridge of 1e-10 * trace / dim.
inline VecC solve_regularized_hpd(const MatC& H, const VecC& b, bool* used_ridge = nullptr) {
    const double scale = H.cwiseAbs().maxCoeff();
    if (hermitian_deviation(H) > 1e-8 * std::max(1.0, scale))
        throw std::domain_error("solve_regularized_hpd: matrix is not Hermitian");
    if (used_ridge) *used_ridge = false;
    Eigen::LLT<MatC> llt(H);
    if (llt.info() == Eigen::Success) {
        VecC x = llt.solve(b);
        if (x.allFinite()) return x;
    }
    double ridge = 1e-10 * H.real().trace() / static_cast<double>(H.rows());
    if (!(ridge > 0.0)) ridge = 1e-10;
    if (used_ridge) *used_ridge = true;
    MatC Hr = H;
    Hr.diagonal().array() += ridge;
    Eigen::LDLT<MatC> ldlt(Hr);
    return ldlt.solve(b);
}

inline double smallest_eigenvalue(const MatC& H) {
    // Symmetrize first to scrub last-ulp asymmetry before the eigensolve.
    const MatC S = 0.5 * (H + H.adjoint());
    Eigen::SelfAdjointEigenSolver<MatC> es(S, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

struct BisectionResult {
    double multiplier = 0.0;
    double constraint_value = 0.0; // value at the returned multiplier, <= 0 means satisfied
    int iterations = 0;
};

// Smallest mu >= 0 with constraint(mu) <= 0, assuming constraint is
// non-increasing in mu. The upper bound doubles from 1 until it brackets,
// then the interval shrinks to |ub - lb| <= tol * (1 + ub).
inline BisectionResult bisect_smallest_multiplier(const std::function<double(double)>& constraint,
                                                  int max_iter = 200, double tol = 1e-8) {
    BisectionResult res;
    const double at_zero = constraint(0.0);
    if (at_zero <= 0.0) {
        res.constraint_value = at_zero;
        return res;
    }
    double lb = 0.0;
    double ub = 1.0;
    int doubling = 0;
    while (constraint(ub) > 0.0) {
        lb = ub;
        ub *= 2.0;
        if (++doubling > 200)
            throw NumericalError("bisection: failed to bracket the multiplier");
    }
    int it = 0;
    while (ub - lb > tol * (1.0 + ub) && it < max_iter) {
        const double mid = 0.5 * (lb + ub);
        if (constraint(mid) <= 0.0)
            ub = mid;
        else
            lb = mid;
        ++it;
    }
    res.multiplier = ub; // feasible side of the bracket
    res.constraint_value = constraint(ub);
    res.iterations = it;
    return res;
}

struct EllipsoidResult {
    Eigen::VectorXd multipliers;
    double dual_value = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Maximizes a concave dual over the nonnegative orthant with a deep-cut
// ellipsoid method. The callable returns (value, supergradient) at a point;
// feasibility cuts handle centers with a negative component.
inline EllipsoidResult ellipsoid_solve(
    const std::function<std::pair<double, Eigen::VectorXd>(const Eigen::VectorXd&)>& dual,
    int dim, double tol = 1e-6, int max_iter = 500, double radius = 1e3,
    const Eigen::VectorXd& center = Eigen::VectorXd()) {
    if (dim < 1 || dim > 2)
        throw std::invalid_argument("ellipsoid_solve: dim must be 1 or 2");
    Eigen::VectorXd x = center.size() == dim ? center : Eigen::VectorXd::Ones(dim);
    Eigen::MatrixXd shape = radius * radius * Eigen::MatrixXd::Identity(dim, dim);

    EllipsoidResult res;
    res.multipliers = Eigen::VectorXd::Zero(dim);
    double best = -std::numeric_limits<double>::infinity();
    bool have_best = false;

    for (int it = 0; it < max_iter; ++it) {
        res.iterations = it + 1;
        Eigen::VectorXd cut(dim); // normal a: keep {y : a^T (y - x) <= -depth}
        double depth = 0.0;
        int neg = -1;
        for (int i = 0; i < dim; ++i)
            if (x(i) < 0.0) { neg = i; break; }
        if (neg >= 0) {
            // Feasibility cut for the violated bound x(neg) >= 0.
            cut = Eigen::VectorXd::Zero(dim);
            cut(neg) = -1.0;
            depth = -x(neg);
        } else {
            const auto [val, grad] = dual(x);
            if (!have_best || val > best) {
                best = val;
                res.multipliers = x;
                have_best = true;
            }
            if (grad.norm() <= 1e-14) { // exact interior optimum
                res.converged = true;
                break;
            }
            cut = -grad; // keep the halfspace where the dual can still improve
            depth = best - val;
        }

        const double denom2 = cut.dot(shape * cut);
        if (denom2 <= 0.0) {
            res.converged = true;
            break;
        }
        const double denom = std::sqrt(denom2);
        // Depth-capped cuts: a full-depth cut would collapse the ellipsoid to
        // zero width and stall the remaining directions.
        const double alpha = std::min(std::max(depth / denom, 0.0), 0.9);
        const Eigen::VectorXd g_tilde = shape * cut / denom;
        if (dim == 1) {
            // Interval halving: keep [x - r, x - alpha r] along the cut.
            const double r = std::sqrt(shape(0, 0));
            x -= 0.5 * (1.0 + alpha) * g_tilde; // g_tilde has length r
            shape(0, 0) = 0.25 * (1.0 - alpha) * (1.0 - alpha) * r * r;
        } else {
            const double n = 2.0;
            const double tau = (1.0 + n * alpha) / (n + 1.0);
            const double delta = (n * n / (n * n - 1.0)) * (1.0 - alpha * alpha);
            const double sigma = 2.0 * (1.0 + n * alpha) / ((n + 1.0) * (1.0 + alpha));
            x -= tau * g_tilde;
            shape = delta * (shape - sigma * (g_tilde * g_tilde.transpose()));
            shape = 0.5 * (shape + shape.transpose());
            // Rounding can leave the shape slightly indefinite once the set
            // is very anisotropic; floor its spectrum.
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(shape);
            const double lmax = es.eigenvalues().maxCoeff();
            if (es.eigenvalues().minCoeff() < 1e-16 * lmax) {
                const Eigen::Vector2d vals = es.eigenvalues().cwiseMax(1e-16 * lmax);
                shape = es.eigenvectors() * vals.asDiagonal() *
                        es.eigenvectors().transpose();
            }
        }
        // The candidate set still contains the optimum, so once it is small
        // the current center pins the multipliers to the tolerance.
        const double extent = std::sqrt(std::max(0.0, shape.diagonal().maxCoeff()));
        if (have_best && extent <= tol * (1.0 + x.norm())) {
            res.multipliers = x;
            res.converged = true;
            break;
        }
    }
    if (!have_best) {
        // Never saw a feasible center; fall back to the origin.
        const auto [val, grad] = dual(Eigen::VectorXd::Zero(dim));
        (void)grad;
        best = val;
        res.multipliers = Eigen::VectorXd::Zero(dim);
        res.converged = false;
    }
    res.multipliers = res.multipliers.cwiseMax(0.0);
    res.dual_value = best;
    if (!res.converged && res.iterations >= max_iter)
        throw NumericalError("ellipsoid_solve: iteration cap exceeded");
    return res;
}

} // namespace rcc
