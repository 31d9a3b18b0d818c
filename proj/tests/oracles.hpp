#pragma once

// Test-only reference implementations, kept independent of the library's
// coordinate-descent path: a proximal-gradient solver for the heredity
// objective and a FISTA lasso for the plain objective. Both operate on raw
// matrices rather than DesignBlocks.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

inline double soft(double x, double u) {
    if (x > u) return x - u;
    if (x < -u) return x + u;
    return 0.0;
}

struct HeredityProblem {
    Eigen::MatrixXd M;       // main-effect columns
    Eigen::VectorXd A;       // treatment column
    Eigen::MatrixXd I;       // interaction columns
    std::vector<int> pair;   // interaction l -> main index
    Eigen::VectorXd y, w;
    double lambda = 0.0;
    double alpha = 0.5;
    double w0 = 0.0;         // penalty factors
    Eigen::VectorXd wj, tj;

    double sw() const { return w.sum(); }
};

struct HeredityPoint {
    double psi0 = 0.0;
    Eigen::VectorXd beta, tau;
};

inline Eigen::VectorXd residual(const HeredityProblem& p, const HeredityPoint& t) {
    Eigen::VectorXd r = p.y - t.psi0 * p.A - p.M * t.beta;
    for (Eigen::Index l = 0; l < p.I.cols(); ++l)
        r -= t.psi0 * t.tau(l) * t.beta(p.pair[static_cast<std::size_t>(l)]) * p.I.col(l);
    return r;
}

inline double smooth_loss(const HeredityProblem& p, const HeredityPoint& t) {
    Eigen::VectorXd r = residual(p, t);
    return 0.5 / p.sw() * (r.array().square() * p.w.array()).sum();
}

inline double objective(const HeredityProblem& p, const HeredityPoint& t) {
    double pen = p.lambda * (1.0 - p.alpha) * (p.w0 * std::abs(t.psi0) + p.wj.dot(t.beta.cwiseAbs())) +
                 p.lambda * p.alpha * p.tj.dot(t.tau.cwiseAbs());
    return smooth_loss(p, t) + pen;
}

inline void smooth_gradient(const HeredityProblem& p, const HeredityPoint& t, double& g_psi0,
                            Eigen::VectorXd& g_beta, Eigen::VectorXd& g_tau) {
    Eigen::VectorXd wr = residual(p, t).cwiseProduct(p.w) / p.sw();
    Eigen::VectorXd u = p.A;
    for (Eigen::Index l = 0; l < p.I.cols(); ++l)
        u += t.tau(l) * t.beta(p.pair[static_cast<std::size_t>(l)]) * p.I.col(l);
    g_psi0 = -u.dot(wr);
    g_beta = -(p.M.transpose() * wr);
    for (Eigen::Index l = 0; l < p.I.cols(); ++l)
        g_beta(p.pair[static_cast<std::size_t>(l)]) -= t.psi0 * t.tau(l) * p.I.col(l).dot(wr);
    g_tau.resize(p.I.cols());
    for (Eigen::Index l = 0; l < p.I.cols(); ++l)
        g_tau(l) = -t.psi0 * t.beta(p.pair[static_cast<std::size_t>(l)]) * p.I.col(l).dot(wr);
}

// Proximal gradient with backtracking line search.
inline double prox_descend(const HeredityProblem& p, HeredityPoint& t, int max_iter = 20000,
                           double tol = 1e-10) {
    double step = 1.0;
    double fx = smooth_loss(p, t);
    for (int it = 0; it < max_iter; ++it) {
        double g0;
        Eigen::VectorXd gb, gt;
        smooth_gradient(p, t, g0, gb, gt);
        HeredityPoint next = t;
        double max_change = 0.0;
        for (int bt = 0; bt < 60; ++bt) {
            next.psi0 = soft(t.psi0 - step * g0, step * p.lambda * (1.0 - p.alpha) * p.w0);
            for (Eigen::Index j = 0; j < t.beta.size(); ++j)
                next.beta(j) = soft(t.beta(j) - step * gb(j), step * p.lambda * (1.0 - p.alpha) * p.wj(j));
            for (Eigen::Index l = 0; l < t.tau.size(); ++l)
                next.tau(l) = soft(t.tau(l) - step * gt(l), step * p.lambda * p.alpha * p.tj(l));
            double d0 = next.psi0 - t.psi0;
            double quad = d0 * d0 + (next.beta - t.beta).squaredNorm() + (next.tau - t.tau).squaredNorm();
            double lin = d0 * g0 + gb.dot(next.beta - t.beta) + gt.dot(next.tau - t.tau);
            double fn = smooth_loss(p, next);
            if (fn <= fx + lin + quad / (2.0 * step) + 1e-15) {
                max_change = std::sqrt(quad);
                break;
            }
            step *= 0.5;
        }
        t = next;
        fx = smooth_loss(p, t);
        step = std::min(step * 1.25, 1e6);
        if (max_change < tol) break;
    }
    return objective(p, t);
}

inline double prox_multistart(const HeredityProblem& p, int n_starts, std::uint64_t seed,
                              HeredityPoint* best_point = nullptr) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    double best = std::numeric_limits<double>::infinity();
    for (int s = 0; s < n_starts; ++s) {
        HeredityPoint t;
        t.beta.setZero(p.M.cols());
        t.tau.setZero(p.I.cols());
        if (s > 0) {
            t.psi0 = normal(gen);
            for (Eigen::Index j = 0; j < t.beta.size(); ++j) t.beta(j) = normal(gen);
            for (Eigen::Index l = 0; l < t.tau.size(); ++l) t.tau(l) = normal(gen);
        }
        double obj = prox_descend(p, t);
        if (obj < best) {
            best = obj;
            if (best_point) *best_point = t;
        }
    }
    return best;
}

// FISTA for sum(w (y - C theta)^2) / (2 sw) + sum(u_k |theta_k|).
inline Eigen::VectorXd fista_lasso(const Eigen::MatrixXd& C, const Eigen::VectorXd& y,
                                   const Eigen::VectorXd& w, const Eigen::VectorXd& u,
                                   int max_iter = 200000, double tol = 1e-13) {
    const double sw = w.sum();
    Eigen::MatrixXd G = C.transpose() * w.asDiagonal() * C / sw;
    Eigen::VectorXd c = C.transpose() * w.cwiseProduct(y) / sw;
    double L = G.eigenvalues().real().maxCoeff();
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(C.cols());
    Eigen::VectorXd z = theta;
    double tk = 1.0;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd grad = G * z - c;
        Eigen::VectorXd next(theta.size());
        for (Eigen::Index k = 0; k < theta.size(); ++k)
            next(k) = soft(z(k) - grad(k) / L, u(k) / L);
        double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
        z = next + ((tk - 1.0) / tn) * (next - theta);
        double change = (next - theta).cwiseAbs().maxCoeff();
        theta = next;
        tk = tn;
        if (change < tol) break;
    }
    return theta;
}

}  // namespace oracle
