#pragma once

#include "pdwols/data.hpp"
#include "pdwols/model_selection.hpp"
#include "pdwols/propensity.hpp"
#include "pdwols/solver.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pdwols {

// Linear blip on the original scale: gamma(h, a) = a * (psi0 + sum psi_j t_j(h)).
// Evaluating with a = 0 yields 0 (reference coding).
struct BlipModel {
    double psi0 = 0.0;
    std::vector<Term> terms;
    Eigen::VectorXd psi;

    // psi0 + sum psi_j t_j(h) for every row
    Eigen::VectorXd contrast(const Eigen::MatrixXd& X, const std::vector<std::string>& names) const;
};

struct TreatmentFreeModel {
    double intercept = 0.0;
    std::vector<Term> terms;
    Eigen::VectorXd beta;

    Eigen::VectorXd eval(const Eigen::MatrixXd& X, const std::vector<std::string>& names) const;
};

double blip_value(const BlipModel& model, const Eigen::RowVectorXd& h,
                  const std::vector<std::string>& names, int a);
// I(psi0 + psi'x > 0); the boundary maps to the reference treatment 0.
int optimal_action(const BlipModel& model, const Eigen::RowVectorXd& h,
                   const std::vector<std::string>& names);
double regret(const BlipModel& model, const Eigen::RowVectorXd& h,
              const std::vector<std::string>& names, int a);

struct PseudoOutcome {
    Eigen::VectorXd values;
    int stage = 0;
};

// Regret form: y_i + gamma(h_i, a_opt) - gamma(h_i, a_i); always >= y_i.
PseudoOutcome pseudo_outcome(const Eigen::VectorXd& y_next, const BlipModel& model,
                             const Eigen::MatrixXd& H, const std::vector<std::string>& names,
                             const Eigen::VectorXd& a, int stage = 0);

// Q-learning form: fhat(h_i) + gamma(h_i, a_opt).
Eigen::VectorXd pseudo_outcome_q(const TreatmentFreeModel& tf, const BlipModel& model,
                                 const Eigen::MatrixXd& H, const std::vector<std::string>& names);

enum class Method { pdwols, qlasso };
enum class WeightChoice { estimate, all_ones, null_model, user_supplied };

struct FitOptions {
    Method method = Method::pdwols;
    bool refit = false;
    bool adaptive = false;
    double alpha = 0.5;
    std::optional<double> lambda;   // fixed lambda instead of CV
    int cv_folds = 4;
    int n_lambda = 100;
    double min_ratio = -1.0;
    bool one_se = false;
    bool standardize = true;
    std::uint64_t seed = 0;
    WeightChoice weights = WeightChoice::estimate;   // qlasso forces all-ones
    Eigen::VectorXd user_weights;
    std::vector<Term> propensity_terms;              // empty: all covariates, identity
    CdOptions cd;
};

struct StageModel {
    BlipModel blip;
    TreatmentFreeModel tf;
};

struct EstimatorTag {
    std::string method;   // "pdwols" or "qlasso"
    bool refit = false;
    bool adaptive = false;
    double alpha = 0.5;
    std::vector<double> stage_lambdas;  // stage 1..K
};

struct Regime {
    std::vector<StageModel> stages;  // stage 1..K
    EstimatorTag estimator_tag;
};

struct StageFit {
    HeredityFit fit;                 // solver-space coefficients
    LinearModelCoefs penalized;      // original scale
    LinearModelCoefs reported;       // refit applied when requested
    StageModel model;                // blip + treatment-free built from `reported`
    Support support;
    std::vector<std::string> refit_dropped;
    double lambda = 0.0;
    std::optional<CvResult> cv;
    WeightVector weights;
    std::optional<PropensityModel> propensity;
    PenaltyFactors factors;
    bool refitted = false;
};

// One stage of the estimation pipeline: weights, design, centering, tuning,
// penalized fit, optional refit, and the original-scale stage model.
StageFit fit_stage(const StageDataset& data, const ModelSpec& spec, const FitOptions& opts);

struct BackwardFitResult {
    Regime regime;
    std::vector<StageFit> stage_fits;       // stage 1..K
    std::vector<PseudoOutcome> pseudo;      // pseudo-outcomes fed into stages K-1..1
};

// Backward recursion over stages K..1 with method-specific pseudo-outcomes:
// the regret form for pdwols, the fitted-outcome form for qlasso. With K = 1
// this reduces exactly to fit_stage.
BackwardFitResult backward_fit(const TrialData& trial, const std::vector<ModelSpec>& specs,
                               const FitOptions& opts);

Eigen::VectorXd recommended_actions(const BlipModel& model, const Eigen::MatrixXd& X,
                                    const std::vector<std::string>& names);

}  // namespace pdwols
