#include "pdwols/solver.hpp"

#include "pdwols/errors.hpp"
#include "pdwols/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace pdwols {

namespace {
constexpr double kDegenerate = 1e-12;
}

PenaltyFactors PenaltyFactors::uniform(Eigen::Index n_main, Eigen::Index n_inter,
                                       bool penalize_psi0) {
    PenaltyFactors f;
    f.psi0 = penalize_psi0 ? 1.0 : 0.0;
    f.main = Eigen::VectorXd::Ones(n_main);
    f.interaction = Eigen::VectorXd::Ones(n_inter);
    return f;
}

void PenaltyFactors::validate(Eigen::Index n_main, Eigen::Index n_inter) const {
    if (main.size() != n_main || interaction.size() != n_inter)
        throw ConfigError("penalty factors: size mismatch with design");
    if (psi0 < 0 || (main.array() < 0).any() || (interaction.array() < 0).any())
        throw ConfigError("penalty factors: negative factor");
    if (!main.allFinite() || !interaction.allFinite() || !std::isfinite(psi0))
        throw ConfigError("penalty factors: non-finite factor");
}

double soft_threshold(double x, double u) {
    if (x > u) return x - u;
    if (x < -u) return x + u;
    return 0.0;
}

namespace {

struct Problem {
    const DesignBlocks& blocks;
    const Eigen::VectorXd& y;
    const Eigen::VectorXd& w;
    double sw;  // normalizer: sum of weights

    double wdot(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
        return (u.array() * w.array() * v.array()).sum();
    }
};

void check_inputs(const DesignBlocks& blocks, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                  double alpha) {
    if (!blocks.centered) throw ConfigError("solver: blocks must be centered");
    if (y.size() != blocks.n() || w.size() != blocks.n()) throw ConfigError("solver: length mismatch");
    if ((w.array() < 0).any() || w.sum() <= 0) throw ConfigError("solver: invalid weights");
    if (!(alpha > 0 && alpha < 1)) throw ConfigError("solver: alpha must lie in (0,1)");
}

void check_heredity_pairing(const DesignBlocks& blocks) {
    for (std::size_t l = 0; l < blocks.inter_main_index.size(); ++l)
        if (blocks.inter_main_index[l] < 0)
            throw ConfigError("heredity mode: blip term '" + blocks.inter_names[l] +
                              "' has no matching treatment-free term; add it to the "
                              "treatment-free model or use plain mode");
}

ScalingRecord scaling_from_blocks(const DesignBlocks& blocks) {
    ScalingRecord s;
    s.y_mean = blocks.y_mean;
    s.a_mean = blocks.a_mean;
    s.a_scale = blocks.a_scale;
    s.main_means = blocks.main_means;
    s.inter_means = blocks.inter_means;
    s.main_scales = blocks.main_scales.size() ? blocks.main_scales
                                              : Eigen::VectorXd::Ones(blocks.n_main());
    s.inter_scales = blocks.inter_scales.size() ? blocks.inter_scales
                                                : Eigen::VectorXd::Ones(blocks.n_inter());
    s.standardized = blocks.standardized;
    return s;
}

// State shared by the heredity and plain loops.
struct CdState {
    double psi0 = 0.0;
    Eigen::VectorXd beta;   // n_main
    Eigen::VectorXd tau;    // n_inter (heredity) -- or psi directly (plain)
    Eigen::VectorXd resid;  // y - fitted
};

Eigen::VectorXd fitted_heredity(const Problem& p, const CdState& s) {
    Eigen::VectorXd f = s.psi0 * p.blocks.Avec;
    f.noalias() += p.blocks.Xmain * s.beta;
    for (Eigen::Index l = 0; l < p.blocks.n_inter(); ++l) {
        double c = s.psi0 * s.tau(l) * s.beta(p.blocks.inter_main_index[static_cast<std::size_t>(l)]);
        if (c != 0.0) f.noalias() += c * p.blocks.XA.col(l);
    }
    return f;
}

Eigen::VectorXd fitted_plain(const Problem& p, const CdState& s) {
    Eigen::VectorXd f = s.psi0 * p.blocks.Avec;
    f.noalias() += p.blocks.Xmain * s.beta;
    f.noalias() += p.blocks.XA * s.tau;  // tau holds psi in plain mode
    return f;
}

double penalty_value(const CdState& s, const PenaltySpec& spec) {
    const PenaltyFactors& f = spec.factors;
    double main_part = f.psi0 * std::abs(s.psi0) + f.main.dot(s.beta.cwiseAbs());
    double inter_part = f.interaction.dot(s.tau.cwiseAbs());
    return spec.lambda * (1.0 - spec.alpha) * main_part + spec.lambda * spec.alpha * inter_part;
}

double objective(const Problem& p, const CdState& s, const PenaltySpec& spec) {
    double loss = 0.5 / p.sw * (s.resid.array().square() * p.w.array()).sum();
    return loss + penalty_value(s, spec);
}

// One exact coordinate step: minimizes the weighted quadratic plus an l1 term
// along `cov`, updating the residual. Returns the absolute parameter change.
double coordinate_step(const Problem& p, Eigen::VectorXd& resid, const Eigen::VectorXd& cov,
                       double& coef, double threshold) {
    double den = p.wdot(cov, cov);
    double next;
    if (den < kDegenerate) {
        next = 0.0;
        if (coef != 0.0) resid.noalias() += coef * cov;
    } else {
        double num = p.wdot(cov, resid) + coef * den;
        next = soft_threshold(num, threshold) / den;
        if (next != coef) resid.noalias() -= (next - coef) * cov;
    }
    double change = std::abs(next - coef);
    coef = next;
    return change;
}

int run_heredity(const Problem& p, CdState& s, const PenaltySpec& spec, const CdOptions& opts,
                 bool& converged, std::vector<double>* trace) {
    const PenaltyFactors& f = spec.factors;
    const double main_scale = p.sw * spec.lambda * (1.0 - spec.alpha);
    const double inter_scale = p.sw * spec.lambda * spec.alpha;
    const Eigen::Index m = p.blocks.n_main();
    const Eigen::Index b = p.blocks.n_inter();
    std::vector<int> inter_of_main(static_cast<std::size_t>(m), -1);
    for (Eigen::Index l = 0; l < b; ++l)
        inter_of_main[static_cast<std::size_t>(p.blocks.inter_main_index[static_cast<std::size_t>(l)])] =
            static_cast<int>(l);

    s.resid = p.y - fitted_heredity(p, s);
    Eigen::VectorXd cov(p.blocks.n());
    int iter = 0;
    converged = false;
    for (; iter < opts.max_iter; ++iter) {
        double max_change = 0.0;

        // psi0: effective covariate A + sum_l tau_l beta_{pair(l)} (A o X_l)
        cov = p.blocks.Avec;
        for (Eigen::Index l = 0; l < b; ++l) {
            double c = s.tau(l) * s.beta(p.blocks.inter_main_index[static_cast<std::size_t>(l)]);
            if (c != 0.0) cov.noalias() += c * p.blocks.XA.col(l);
        }
        max_change = std::max(max_change, coordinate_step(p, s.resid, cov, s.psi0, main_scale * f.psi0));

        // beta sweep: effective covariate X_j + tau_l psi0 (A o X_l)
        for (Eigen::Index j = 0; j < m; ++j) {
            int l = inter_of_main[static_cast<std::size_t>(j)];
            double c = l >= 0 ? s.tau(l) * s.psi0 : 0.0;
            if (c != 0.0) {
                cov = p.blocks.Xmain.col(j) + c * p.blocks.XA.col(l);
                max_change = std::max(max_change,
                                      coordinate_step(p, s.resid, cov, s.beta(j), main_scale * f.main(j)));
            } else {
                max_change = std::max(
                    max_change,
                    coordinate_step(p, s.resid, p.blocks.Xmain.col(j), s.beta(j), main_scale * f.main(j)));
            }
        }

        // tau sweep: covariate psi0 beta_j (A o X_l); unidentifiable when the
        // product vanishes, in which case tau_l is set to 0 and skipped
        for (Eigen::Index l = 0; l < b; ++l) {
            double prod = s.psi0 * s.beta(p.blocks.inter_main_index[static_cast<std::size_t>(l)]);
            if (std::abs(prod) < kDegenerate) {
                if (s.tau(l) != 0.0) {
                    double c = prod * s.tau(l);
                    if (c != 0.0) s.resid.noalias() += c * p.blocks.XA.col(l);
                    max_change = std::max(max_change, std::abs(s.tau(l)));
                    s.tau(l) = 0.0;
                }
                continue;
            }
            cov = prod * p.blocks.XA.col(l);
            max_change = std::max(max_change,
                                  coordinate_step(p, s.resid, cov, s.tau(l), inter_scale * f.interaction(l)));
        }

        if (trace) trace->push_back(objective(p, s, spec));
        if (max_change < opts.tol) {
            converged = true;
            ++iter;
            break;
        }
    }
    return iter;
}

int run_plain(const Problem& p, CdState& s, const PenaltySpec& spec, const CdOptions& opts,
              bool& converged, std::vector<double>* trace) {
    const PenaltyFactors& f = spec.factors;
    const double main_scale = p.sw * spec.lambda * (1.0 - spec.alpha);
    const double inter_scale = p.sw * spec.lambda * spec.alpha;

    s.resid = p.y - fitted_plain(p, s);
    int iter = 0;
    converged = false;
    for (; iter < opts.max_iter; ++iter) {
        double max_change = 0.0;
        max_change = std::max(max_change,
                              coordinate_step(p, s.resid, p.blocks.Avec, s.psi0, main_scale * f.psi0));
        for (Eigen::Index j = 0; j < p.blocks.n_main(); ++j)
            max_change = std::max(
                max_change,
                coordinate_step(p, s.resid, p.blocks.Xmain.col(j), s.beta(j), main_scale * f.main(j)));
        for (Eigen::Index l = 0; l < p.blocks.n_inter(); ++l)
            max_change = std::max(
                max_change,
                coordinate_step(p, s.resid, p.blocks.XA.col(l), s.tau(l), inter_scale * f.interaction(l)));
        if (trace) trace->push_back(objective(p, s, spec));
        if (max_change < opts.tol) {
            converged = true;
            ++iter;
            break;
        }
    }
    return iter;
}

CdState initial_state(const DesignBlocks& blocks, const std::optional<HeredityFit>& init,
                      PenaltyMode mode) {
    CdState s;
    s.beta = Eigen::VectorXd::Zero(blocks.n_main());
    s.tau = Eigen::VectorXd::Zero(blocks.n_inter());
    if (init) {
        if (init->beta.size() != blocks.n_main())
            throw ConfigError("cd_fit: warm start has wrong main-effect count");
        s.psi0 = init->psi0;
        s.beta = init->beta;
        if (mode == PenaltyMode::heredity) {
            if (init->tau.size() == blocks.n_inter()) s.tau = init->tau;
        } else if (init->psi.size() == blocks.n_inter()) {
            s.tau = init->psi;
        }
    }
    return s;
}

// Unpenalized heredity fits start from the weighted least-squares solution
// mapped into (psi0, beta, tau): the parametrization covers it whenever the
// products psi0*beta_j are nonzero, and the zero start can stall at a worse
// alternating-minimization fixed point.
CdState wls_mapped_state(const Problem& p) {
    const Eigen::Index m = p.blocks.n_main();
    const Eigen::Index b = p.blocks.n_inter();
    Eigen::MatrixXd C(p.blocks.n(), 1 + m + b);
    C.col(0) = p.blocks.Avec;
    if (m > 0) C.middleCols(1, m) = p.blocks.Xmain;
    if (b > 0) C.rightCols(b) = p.blocks.XA;
    Eigen::MatrixXd G = C.transpose() * p.w.asDiagonal() * C;
    Eigen::VectorXd rhs = C.transpose() * (p.w.asDiagonal() * p.y);
    Eigen::VectorXd theta = G.ldlt().solve(rhs);
    CdState s;
    s.beta = Eigen::VectorXd::Zero(m);
    s.tau = Eigen::VectorXd::Zero(b);
    if (!theta.allFinite()) return s;
    s.psi0 = theta(0);
    s.beta = theta.segment(1, m);
    for (Eigen::Index l = 0; l < b; ++l) {
        double prod = s.psi0 * s.beta(p.blocks.inter_main_index[static_cast<std::size_t>(l)]);
        s.tau(l) = std::abs(prod) > kDegenerate ? theta(1 + m + l) / prod : 0.0;
    }
    return s;
}

HeredityFit finalize(const Problem& p, CdState& s, const PenaltySpec& spec, int iterations,
                     bool converged, std::vector<double>&& trace) {
    HeredityFit fit;
    fit.mode = spec.mode;
    fit.psi0 = s.psi0;
    fit.beta = s.beta;
    if (spec.mode == PenaltyMode::heredity) {
        fit.tau = s.tau;
        fit.psi.resize(p.blocks.n_inter());
        for (Eigen::Index l = 0; l < p.blocks.n_inter(); ++l)
            fit.psi(l) = s.psi0 * s.tau(l) * s.beta(p.blocks.inter_main_index[static_cast<std::size_t>(l)]);
        s.resid = p.y - fitted_heredity(p, s);  // fresh residual for the final objective
    } else {
        fit.psi = s.tau;
        s.resid = p.y - fitted_plain(p, s);
    }
    fit.objective = objective(p, s, spec);
    if (!std::isfinite(fit.objective))
        throw NumericError("cd_fit: objective is not finite; check scaling and weights");
    fit.iterations = iterations;
    fit.converged = converged;
    fit.scaling = scaling_from_blocks(p.blocks);
    fit.objective_trace = std::move(trace);
    return fit;
}

HeredityFit single_start(const Problem& p, const PenaltySpec& spec, CdState s, const CdOptions& opts) {
    bool converged = false;
    std::vector<double> trace;
    std::vector<double>* trace_ptr = opts.record_trace ? &trace : nullptr;
    int iters = spec.mode == PenaltyMode::heredity
                    ? run_heredity(p, s, spec, opts, converged, trace_ptr)
                    : run_plain(p, s, spec, opts, converged, trace_ptr);
    return finalize(p, s, spec, iters, converged, std::move(trace));
}

}  // namespace

HeredityFit cd_fit(const DesignBlocks& blocks, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                   const PenaltySpec& spec, const std::optional<HeredityFit>& init,
                   const CdOptions& opts) {
    check_inputs(blocks, y, w, spec.alpha);
    spec.factors.validate(blocks.n_main(), blocks.n_inter());
    if (spec.lambda < 0) throw ConfigError("cd_fit: negative lambda");
    if (spec.mode == PenaltyMode::heredity) check_heredity_pairing(blocks);

    Problem p{blocks, y, w, w.sum()};
    CdState start = !init && spec.lambda == 0.0 && spec.mode == PenaltyMode::heredity
                        ? wls_mapped_state(p)
                        : initial_state(blocks, init, spec.mode);
    HeredityFit best = single_start(p, spec, std::move(start), opts);

    if (opts.n_starts > 1) {
        Rng rng(opts.seed);
        double sd_y = std::sqrt((y.array().square() * w.array()).sum() / p.sw);
        for (int r = 1; r < opts.n_starts; ++r) {
            CdState s;
            s.psi0 = rng.normal(0.0, sd_y);
            s.beta.resize(blocks.n_main());
            s.tau.resize(blocks.n_inter());
            for (Eigen::Index j = 0; j < blocks.n_main(); ++j) s.beta(j) = rng.normal(0.0, sd_y);
            for (Eigen::Index l = 0; l < blocks.n_inter(); ++l) s.tau(l) = rng.normal();
            HeredityFit candidate = single_start(p, spec, std::move(s), opts);
            if (candidate.objective < best.objective) best = candidate;
        }
    }
    best.kkt_violation = kkt_check(best, blocks, y, w, spec);
    return best;
}

LambdaMax lambda_max(const DesignBlocks& blocks, const Eigen::VectorXd& y,
                     const Eigen::VectorXd& w, double alpha, const PenaltyFactors& factors,
                     bool weighted_screening) {
    check_inputs(blocks, y, w, alpha);
    factors.validate(blocks.n_main(), blocks.n_inter());
    Problem p{blocks, y, w, w.sum()};
    auto screen_dot = [&](const Eigen::VectorXd& col) {
        return weighted_screening ? p.wdot(col, y) : col.dot(y);
    };

    LambdaMax result;
    bool any_penalized = false;
    if (factors.psi0 > 0) {
        any_penalized = true;
        result.value = std::max(result.value, std::abs(screen_dot(blocks.Avec)) / factors.psi0);
    } else {
        result.always_active.push_back("A");
    }
    for (Eigen::Index j = 0; j < blocks.n_main(); ++j) {
        if (factors.main(j) > 0) {
            any_penalized = true;
            result.value =
                std::max(result.value, std::abs(screen_dot(blocks.Xmain.col(j))) / factors.main(j));
        } else {
            result.always_active.push_back(blocks.main_names[static_cast<std::size_t>(j)]);
        }
    }
    if (!any_penalized)
        throw ConfigError("lambda_max: no penalized main effects, lambda_max is undefined");
    result.value /= p.sw * (1.0 - alpha);
    return result;
}

std::vector<HeredityFit> fit_lambda_sequence(const DesignBlocks& blocks, const Eigen::VectorXd& y,
                                             const Eigen::VectorXd& w, double alpha,
                                             const PenaltyFactors& factors, PenaltyMode mode,
                                             const Eigen::VectorXd& lambdas, const CdOptions& opts) {
    std::vector<HeredityFit> fits;
    fits.reserve(static_cast<std::size_t>(lambdas.size()));
    std::optional<HeredityFit> warm;
    for (Eigen::Index i = 0; i < lambdas.size(); ++i) {
        PenaltySpec spec{lambdas(i), alpha, factors, mode};
        fits.push_back(cd_fit(blocks, y, w, spec, warm, opts));
        warm = fits.back();
    }
    return fits;
}

double path_min_ratio_default(Eigen::Index n, Eigen::Index n_coef) {
    return n > n_coef ? 1e-3 : 5e-2;
}

LambdaPath fit_path(const DesignBlocks& blocks, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                    double alpha, const PenaltyFactors& factors, PenaltyMode mode, int n_lambda,
                    double min_ratio, const CdOptions& opts) {
    if (n_lambda < 2) throw ConfigError("fit_path: need at least 2 lambda values");
    if (min_ratio < 0) min_ratio = path_min_ratio_default(blocks.n(), 1 + blocks.n_main() + blocks.n_inter());
    if (!(min_ratio > 0 && min_ratio < 1)) throw ConfigError("fit_path: min_ratio must lie in (0,1)");

    LambdaPath path;
    path.lambda_max = lambda_max(blocks, y, w, alpha, factors).value;
    if (path.lambda_max <= 0)
        throw NumericError("fit_path: lambda_max is zero; response is orthogonal to the design");
    path.lambdas.resize(n_lambda);
    for (int i = 0; i < n_lambda; ++i)
        path.lambdas(i) = path.lambda_max * std::pow(min_ratio, static_cast<double>(i) / (n_lambda - 1));
    path.fits = fit_lambda_sequence(blocks, y, w, alpha, factors, mode, path.lambdas, opts);
    return path;
}

double kkt_check(const HeredityFit& fit, const DesignBlocks& blocks, const Eigen::VectorXd& y,
                 const Eigen::VectorXd& w, const PenaltySpec& spec) {
    check_inputs(blocks, y, w, spec.alpha);
    Problem p{blocks, y, w, w.sum()};
    const PenaltyFactors& f = spec.factors;
    const double lam_main = spec.lambda * (1.0 - spec.alpha);
    const double lam_inter = spec.lambda * spec.alpha;

    auto violation = [](double grad, double coef, double lam_factor) {
        if (coef != 0.0) return std::abs(grad + lam_factor * (coef > 0 ? 1.0 : -1.0));
        return std::max(0.0, std::abs(grad) - lam_factor);
    };

    double worst = 0.0;
    if (fit.mode == PenaltyMode::heredity) {
        check_heredity_pairing(blocks);
        CdState s;
        s.psi0 = fit.psi0;
        s.beta = fit.beta;
        s.tau = fit.tau;
        Eigen::VectorXd resid = y - fitted_heredity(p, s);

        Eigen::VectorXd u = blocks.Avec;
        for (Eigen::Index l = 0; l < blocks.n_inter(); ++l) {
            double c = fit.tau(l) * fit.beta(blocks.inter_main_index[static_cast<std::size_t>(l)]);
            if (c != 0.0) u.noalias() += c * blocks.XA.col(l);
        }
        worst = std::max(worst, violation(-p.wdot(u, resid) / p.sw, fit.psi0, lam_main * f.psi0));

        for (Eigen::Index j = 0; j < blocks.n_main(); ++j) {
            Eigen::VectorXd v = blocks.Xmain.col(j);
            for (Eigen::Index l = 0; l < blocks.n_inter(); ++l)
                if (blocks.inter_main_index[static_cast<std::size_t>(l)] == j) {
                    double c = fit.tau(l) * fit.psi0;
                    if (c != 0.0) v.noalias() += c * blocks.XA.col(l);
                }
            worst = std::max(worst, violation(-p.wdot(v, resid) / p.sw, fit.beta(j), lam_main * f.main(j)));
        }

        for (Eigen::Index l = 0; l < blocks.n_inter(); ++l) {
            double prod = fit.psi0 * fit.beta(blocks.inter_main_index[static_cast<std::size_t>(l)]);
            if (std::abs(prod) < kDegenerate) continue;  // tau unidentifiable here
            Eigen::VectorXd z = prod * blocks.XA.col(l);
            worst = std::max(worst,
                             violation(-p.wdot(z, resid) / p.sw, fit.tau(l), lam_inter * f.interaction(l)));
        }
    } else {
        CdState s;
        s.psi0 = fit.psi0;
        s.beta = fit.beta;
        s.tau = fit.psi;
        Eigen::VectorXd resid = y - fitted_plain(p, s);
        worst = std::max(worst, violation(-p.wdot(blocks.Avec, resid) / p.sw, fit.psi0, lam_main * f.psi0));
        for (Eigen::Index j = 0; j < blocks.n_main(); ++j)
            worst = std::max(worst, violation(-p.wdot(blocks.Xmain.col(j), resid) / p.sw, fit.beta(j),
                                              lam_main * f.main(j)));
        for (Eigen::Index l = 0; l < blocks.n_inter(); ++l)
            worst = std::max(worst, violation(-p.wdot(blocks.XA.col(l), resid) / p.sw, fit.psi(l),
                                              lam_inter * f.interaction(l)));
    }
    return worst;
}

LinearModelCoefs to_original_scale(const HeredityFit& fit) {
    const ScalingRecord& s = fit.scaling;
    LinearModelCoefs out;
    out.psi0 = fit.psi0 / s.a_scale;
    out.beta = fit.beta.array() / s.main_scales.array();
    out.psi = fit.psi.array() / s.inter_scales.array();
    out.intercept = s.y_mean - out.psi0 * s.a_mean - out.beta.dot(s.main_means) -
                    out.psi.dot(s.inter_means);
    return out;
}

Eigen::VectorXd predict(const LinearModelCoefs& coefs, const DesignBlocks& raw_blocks) {
    Eigen::VectorXd yhat = Eigen::VectorXd::Constant(raw_blocks.n(), coefs.intercept);
    yhat.noalias() += coefs.psi0 * raw_blocks.Avec;
    yhat.noalias() += raw_blocks.Xmain * coefs.beta;
    yhat.noalias() += raw_blocks.XA * coefs.psi;
    return yhat;
}

}  // namespace pdwols
