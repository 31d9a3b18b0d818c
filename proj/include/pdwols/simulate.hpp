#pragma once

#include "pdwols/dtr.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pdwols {

enum class GeneratorKind { one_stage, high_dim, two_stage_s1 };

struct MethodVariant {
    Method method = Method::pdwols;
    bool refit = false;
    std::string label() const;
};

struct ScenarioConfig {
    GeneratorKind generator = GeneratorKind::one_stage;
    int scenario = 4;        // one_stage only: 1..4 misspecification pattern
    int n = 500;
    int p = 10;              // high_dim default 400
    int reps = 100;
    int n_test = 10000;
    std::uint64_t base_seed = 0;
    std::vector<MethodVariant> methods;
    double alpha = 0.5;
    bool adaptive = false;
    int cv_folds = 4;
    int n_lambda = 100;
    int jobs = 1;

    void validate() const;
};

// --- generators -------------------------------------------------------------

struct OneStageTruth {
    Eigen::VectorXd optimal_action;   // I(1 - 1.5 x1 > 0)
    Eigen::VectorXd treatment_free;   // f(x)
    Eigen::VectorXd propensity;       // P(A=1 | x)
};

struct GeneratedStage {
    StageDataset data;
    OneStageTruth truth;
};

// Covariates AR(1)-correlated N(0,1) with Corr(Xj,Xk) = 0.25^|j-k|;
// P(A=1|x) = expit(1 + x1 + x2); blip a(1 - 1.5 x1);
// treatment-free 0.5 - 0.6 e^{x1} - 2 x1 - 2 x2; Y ~ N(f + blip, 1).
GeneratedStage gen_one_stage(int n, std::uint64_t seed, int p = 10);

// Same outcome law with P(A=1) = 0.5 for everyone and p columns.
GeneratedStage gen_high_dim(int n, int p, std::uint64_t seed);

struct TwoStageTruth {
    Eigen::VectorXd opt1, opt2;   // optimal actions at observed histories
    Eigen::VectorXd regret1, regret2;
};

struct GeneratedTrial {
    TrialData trial;
    TwoStageTruth truth;
};

// Stage-1 covariates N(0,1); P(A_k=1) = expit(x1k - x2k); stage-2 covariates
// X12 ~ N(0.5 a1 + 0.8 x11, 1), Xj2 ~ N(0.8 xj1, 1); blips a1(0.8 - 2 x11)
// and a2(1 - 1.5 x12); Y ~ N(yopt - mu1 - mu2, 1) with yopt = 0.5 + 2 x11 + 2 x12.
GeneratedTrial gen_two_stage_s1(int n, std::uint64_t seed);

// STAR*D-style noise augmentation: d extra N(0,1) columns at stage 1 and, for
// later stages, N(log|previous draw|, 1).
TrialData augment_noise(const TrialData& trial, int d, std::uint64_t seed);

// --- regime evaluation ------------------------------------------------------

struct RegimeEvaluation {
    double value = 0.0;                // mean simulated outcome under the regime
    std::vector<double> stage_error;   // per-stage disagreement with the oracle rule
    double total_error = 0.0;          // any-stage disagreement (multi-stage)
};

// Simulates a fresh test set with treatment assigned by the regime; identical
// seeds share the underlying draws across regimes.
RegimeEvaluation evaluate_regime(const Regime& regime, GeneratorKind kind, int p, int n_test,
                                 std::uint64_t seed);

double value_estimate(const Regime& regime, GeneratorKind kind, int p, int n_test,
                      std::uint64_t seed);

// Stage-wise disagreement on an oracle-labeled test set.
double error_rate(const Regime& regime, const StageDataset& test,
                  const Eigen::VectorXd& oracle_actions);
RegimeEvaluation error_rate(const Regime& regime, GeneratorKind kind, int p, int n_test,
                            std::uint64_t seed);

// --- replicated experiments -------------------------------------------------

struct ReplicateRecord {
    int rep = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    double seconds = 0.0;
    std::string error;
    std::vector<double> stage_error;
    double total_error = 0.0;
    double value = 0.0;
    // per stage: blip coefficient estimates and selection flags by term label
    std::vector<double> psi0;                              // stage 1..K
    std::vector<std::vector<double>> psi;                  // stage -> per blip term
    std::vector<std::vector<int>> selected;                // stage -> per blip term
};

struct MethodReport {
    std::string label;
    std::vector<std::vector<std::string>> blip_terms;      // stage -> term labels
    std::vector<std::map<std::string, double>> selection_rate;  // stage -> term -> rate
    double fp_rate = 0.0;   // noise interactions selected, averaged over terms and reps
    double fn_rate = 0.0;   // true interactions missed
    std::vector<double> stage_error_rate;
    double total_error_rate = 0.0;
    double value = 0.0;
    std::vector<ReplicateRecord> reps;
    int n_failed = 0;
};

struct MetricsReport {
    ScenarioConfig config;
    std::vector<MethodReport> methods;
};

// Per-replicate seeding (base_seed + index); each method sees the same
// training data and the same test seed within a replicate. Failures are
// recorded and excluded from the aggregates, never silently dropped.
MetricsReport run_experiment(const ScenarioConfig& config);

// Scenario model specs: the misspecification patterns of the one-stage
// designs, the high-dimensional design, and the per-stage two-stage design.
struct ScenarioPipeline {
    std::vector<ModelSpec> specs;
    WeightChoice weights = WeightChoice::estimate;
    std::vector<Term> propensity_terms;
    std::vector<std::string> true_interactions;  // labels of truly nonzero blip terms
};

ScenarioPipeline scenario_pipeline(const ScenarioConfig& config);

const char* generator_name(GeneratorKind kind);
GeneratorKind generator_from_name(const std::string& name);
MethodVariant method_variant_from_label(const std::string& label);

}  // namespace pdwols
