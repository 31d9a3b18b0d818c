#pragma once

#include "pdwols/data.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace pdwols {

enum class PenaltyMode { heredity, plain };

// Per-coefficient penalty multipliers; a factor of 0 leaves the coefficient
// unpenalized (always active). Uniform factors of 1 give the base penalty.
struct PenaltyFactors {
    double psi0 = 0.0;             // treatment main effect, unpenalized by default
    Eigen::VectorXd main;          // one per main-effect column
    Eigen::VectorXd interaction;   // one per interaction column (tau in heredity
                                   // mode, psi directly in plain mode)

    static PenaltyFactors uniform(Eigen::Index n_main, Eigen::Index n_inter,
                                  bool penalize_psi0 = false);
    void validate(Eigen::Index n_main, Eigen::Index n_inter) const;
};

struct PenaltySpec {
    double lambda = 0.0;
    double alpha = 0.5;            // in (0,1): split between main and interaction penalties
    PenaltyFactors factors;
    PenaltyMode mode = PenaltyMode::heredity;
};

struct ScalingRecord {
    double y_mean = 0.0;
    double a_mean = 0.0;
    double a_scale = 1.0;
    Eigen::VectorXd main_means, main_scales;
    Eigen::VectorXd inter_means, inter_scales;
    bool standardized = false;
};

// Fitted coefficients in the solver's (centered, possibly standardized) space.
// In heredity mode psi_l = psi0 * tau_l * beta_{pair(l)} exactly, which makes
// a nonzero interaction imply nonzero psi0 and main effect.
struct HeredityFit {
    double psi0 = 0.0;
    Eigen::VectorXd beta;
    Eigen::VectorXd tau;   // heredity mode only; empty in plain mode
    Eigen::VectorXd psi;
    double objective = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    bool converged = false;
    double kkt_violation = std::numeric_limits<double>::quiet_NaN();
    PenaltyMode mode = PenaltyMode::heredity;
    ScalingRecord scaling;
    std::vector<double> objective_trace;  // filled when CdOptions::record_trace
};

struct CdOptions {
    double tol = 1e-7;
    int max_iter = 10000;
    int n_starts = 1;          // extra seeded random restarts for oracle comparisons
    std::uint64_t seed = 0;
    bool record_trace = false;
};

struct LambdaMax {
    double value = 0.0;
    std::vector<std::string> always_active;  // factor-0 terms excluded from the max
};

struct LambdaPath {
    Eigen::VectorXd lambdas;  // strictly decreasing, lambdas(0) == lambda_max
    std::vector<HeredityFit> fits;
    double lambda_max = 0.0;
};

// sign(x) * max(|x| - u, 0)
double soft_threshold(double x, double u);

// Smallest lambda for which the penalized parameter vector is all zero,
// evaluated at the zero parameter vector (both partial residuals equal the
// centered response). Each screening term is divided by its penalty factor;
// factor-0 terms are excluded and reported as always active.
LambdaMax lambda_max(const DesignBlocks& blocks, const Eigen::VectorXd& y,
                     const Eigen::VectorXd& w, double alpha, const PenaltyFactors& factors,
                     bool weighted_screening = true);

// Blockwise coordinate descent on centered (optionally standardized) blocks.
// Heredity mode alternates the psi0 update, the beta sweep and the tau sweep,
// each an exact univariate soft-threshold step; plain mode runs standard
// one-coordinate weighted lasso updates over (psi0, beta, psi).
// All normalizations use sum(w) rather than the row count, so zero-weight
// rows drop out of the fit exactly.
HeredityFit cd_fit(const DesignBlocks& blocks, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                   const PenaltySpec& spec, const std::optional<HeredityFit>& init = std::nullopt,
                   const CdOptions& opts = {});

// Warm-started fits along a given decreasing lambda sequence.
std::vector<HeredityFit> fit_lambda_sequence(const DesignBlocks& blocks, const Eigen::VectorXd& y,
                                             const Eigen::VectorXd& w, double alpha,
                                             const PenaltyFactors& factors, PenaltyMode mode,
                                             const Eigen::VectorXd& lambdas,
                                             const CdOptions& opts = {});

// Logarithmically spaced path from lambda_max down to min_ratio * lambda_max.
// min_ratio < 0 selects the default: 1e-3 when n exceeds the coefficient
// count, 5e-2 otherwise.
LambdaPath fit_path(const DesignBlocks& blocks, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                    double alpha, const PenaltyFactors& factors, PenaltyMode mode,
                    int n_lambda = 100, double min_ratio = -1.0, const CdOptions& opts = {});

// Maximum subgradient violation of a fit. Zero coefficients must satisfy
// |gradient| <= lambda*factor, nonzero ones |gradient + lambda*factor*sign|
// ~ 0; tau coordinates whose psi0*beta product vanishes are exempt.
double kkt_check(const HeredityFit& fit, const DesignBlocks& blocks, const Eigen::VectorXd& y,
                 const Eigen::VectorXd& w, const PenaltySpec& spec);

double path_min_ratio_default(Eigen::Index n, Eigen::Index n_coef);

// Original-scale linear model over the raw design columns.
struct LinearModelCoefs {
    double intercept = 0.0;
    double psi0 = 0.0;
    Eigen::VectorXd beta;
    Eigen::VectorXd psi;
};

LinearModelCoefs to_original_scale(const HeredityFit& fit);
Eigen::VectorXd predict(const LinearModelCoefs& coefs, const DesignBlocks& raw_blocks);

}  // namespace pdwols
