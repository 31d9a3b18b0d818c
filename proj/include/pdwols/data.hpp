#pragma once

#include "pdwols/expr.hpp"

#include <Eigen/Core>

#include <string>
#include <utility>
#include <vector>

namespace pdwols {

// One decision stage: outcome (or pseudo-outcome), binary treatment, covariates.
// y may be empty for non-final stages; it is filled with pseudo-outcomes during
// backward estimation.
struct StageDataset {
    Eigen::VectorXd y;
    Eigen::VectorXd a;
    Eigen::MatrixXd X;
    std::vector<std::string> column_names;
    std::string treatment_note;  // non-empty if treatment levels were remapped to 0/1

    Eigen::Index n() const { return a.size(); }
    void validate() const;
};

struct TrialData {
    std::vector<StageDataset> stages;  // outcome lives in stages.back().y

    int n_stages() const { return static_cast<int>(stages.size()); }
    void validate() const;
};

struct ModelSpec {
    std::vector<Term> treatment_free_terms;
    std::vector<Term> blip_terms;
    bool penalize_psi0 = false;
};

enum class CenterDenominator { sum_weights, n_rows };

// Raw or centered/scaled design: main-effect columns, treatment column, and
// interaction columns a∘x_j formed from the raw data before any centering.
struct DesignBlocks {
    Eigen::MatrixXd Xmain;  // n x m
    Eigen::VectorXd Avec;   // n
    Eigen::MatrixXd XA;     // n x b
    std::vector<std::string> main_names;
    std::vector<std::string> inter_names;   // "A:<term>"
    std::vector<int> inter_main_index;      // interaction l -> main column, -1 if unmatched

    bool centered = false;
    bool standardized = false;
    CenterDenominator center_denominator = CenterDenominator::sum_weights;
    double y_mean = 0.0;
    double a_mean = 0.0;
    Eigen::VectorXd main_means;   // empty until centered
    Eigen::VectorXd inter_means;
    double a_scale = 1.0;
    Eigen::VectorXd main_scales;  // empty until standardized
    Eigen::VectorXd inter_scales;
    bool a_degenerate = false;
    std::vector<int> degenerate_main;   // zero-variance columns, scale kept at 1
    std::vector<int> degenerate_inter;

    Eigen::Index n() const { return Avec.size(); }
    Eigen::Index n_main() const { return Xmain.cols(); }
    Eigen::Index n_inter() const { return XA.cols(); }
};

DesignBlocks build_design(const StageDataset& data, const ModelSpec& spec);

// Centers every column of Xmain, Avec, XA and y to weighted mean zero and
// records the means for back-transformation. Weighted means of the outputs
// are zero within 1e-10.
std::pair<DesignBlocks, Eigen::VectorXd> weighted_center(
    const DesignBlocks& blocks, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
    CenterDenominator denom = CenterDenominator::sum_weights);

// Scales each centered column to unit weighted second moment. Zero-variance
// columns keep scale 1 and are flagged, not fatal.
DesignBlocks standardize(const DesignBlocks& blocks, const Eigen::VectorXd& w, bool enable);

DesignBlocks subset_rows(const DesignBlocks& blocks, const std::vector<int>& rows);
Eigen::VectorXd subset(const Eigen::VectorXd& v, const std::vector<int>& rows);

// CSV ingestion: one file per stage (columns `a`, covariates, and `y` on the
// final stage), or a single long file with a `stage` column. Missing values
// are an error except blank `y` on non-final stages.
StageDataset read_stage_csv(const std::string& path, bool expect_outcome);
TrialData read_trial_csv(const std::vector<std::string>& stage_paths);
TrialData read_trial_long_csv(const std::string& path);

void write_stage_csv(const std::string& path, const StageDataset& data, bool include_outcome);

}  // namespace pdwols
