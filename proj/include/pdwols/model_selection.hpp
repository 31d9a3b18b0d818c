#pragma once

#include "pdwols/solver.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace pdwols {

struct CvOptions {
    int k = 4;
    std::uint64_t seed = 0;
    int n_lambda = 100;
    double min_ratio = -1.0;  // < 0: default by n vs coefficient count
    bool one_se = false;      // largest lambda within one SE of the minimum
    bool standardize = true;
    CdOptions cd;
    std::optional<std::vector<int>> folds;  // explicit fold ids override the seeded shuffle
};

struct CvResult {
    Eigen::VectorXd lambdas;
    Eigen::VectorXd cv_mean;  // held-out weighted squared error, averaged over folds
    Eigen::VectorXd cv_se;
    double lambda_min = 0.0;
    int lambda_min_index = 0;
    std::vector<int> fold_assignments;
};

// K-fold cross-validation on the raw (uncentered) design: the lambda grid is
// fixed on the full data, each fold's path is fit on the centered training
// complement, and held-out rows are scored on the original scale with
// sum(w_i (y_i - yhat_i)^2) / sum(w_i). Ties in the mean pick the largest
// lambda. A training complement with constant treatment triggers one redraw
// of the folds, then an error.
CvResult kfold_cv(const DesignBlocks& raw_blocks, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& w, double alpha, const PenaltyFactors& factors,
                  PenaltyMode mode, const CvOptions& opts);

enum class PilotKind { wls, ridge };

struct AdaptiveFactors {
    double w0 = 0.0;
    Eigen::VectorXd wj;
    Eigen::VectorXd tau_j;
    PilotKind pilot = PilotKind::wls;
    double pilot_penalty = 0.0;  // ridge only

    PenaltyFactors as_penalty_factors(bool penalize_psi0) const;
};

// Oracle-style penalty factors w0 = 1/|psi0^|, w_j = 1/|beta_j^|,
// tau~_j = |beta_j^ psi0^ / psi_j^| from an unpenalized pilot fit of the
// saturated model on the given (centered) blocks. Magnitudes cap at 1e8.
// pilot=wls requires a numerically full-rank design; ridge_penalty < 0 picks
// the default 1e-2 * max_col |col' W y| / sum(w).
AdaptiveFactors adaptive_factors(const DesignBlocks& blocks, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& w, PilotKind pilot,
                                 double ridge_penalty = -1.0);

struct Support {
    bool psi0 = false;
    std::vector<int> main;
    std::vector<int> inter;
};

// Nonzero pattern of original-scale coefficients (threshold 1e-10); factor-0
// coefficients count as selected.
Support support_of(const LinearModelCoefs& coefs, const PenaltyFactors& factors);

struct RefitResult {
    LinearModelCoefs coefs;             // zeros outside the support
    std::vector<std::string> dropped;   // collinear columns removed, in scan order
};

// Unpenalized weighted least squares restricted to the selected columns;
// coefficients return on the original scale. Collinear columns are dropped
// in deterministic (scan) order.
RefitResult refit(const DesignBlocks& raw_blocks, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& w, const Support& support,
                  CenterDenominator denom = CenterDenominator::sum_weights);

// Unpenalized WLS of centered y on all centered columns (A, mains, inters);
// shared by the adaptive pilot and the oracle tests.
Eigen::VectorXd solve_wls(const DesignBlocks& blocks, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& w, double ridge = 0.0);

}  // namespace pdwols
