#pragma once

#include "pdwols/dtr.hpp"
#include "pdwols/simulate.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace pdwols {

using ordered_json = nlohmann::ordered_json;

ordered_json stage_fit_to_json(const StageFit& fit);
ordered_json cv_result_to_json(const CvResult& cv);

ordered_json regime_to_json(const Regime& regime);
Regime regime_from_json(const ordered_json& j);

ordered_json metrics_report_to_json(const MetricsReport& report);
ordered_json scenario_config_to_json(const ScenarioConfig& config);
ScenarioConfig scenario_config_from_json(const ordered_json& j);

// Model-spec file: {"treatment_free": [...], "blip": [...],
//                   "propensity": [...], "penalize_psi0": false}
struct AnalysisSpec {
    ModelSpec model;
    std::vector<Term> propensity_terms;
};
AnalysisSpec analysis_spec_from_json(const ordered_json& j);

ordered_json load_json_file(const std::string& path);
// Dispatches on extension: .json, or the supported TOML subset.
ordered_json load_config_file(const std::string& path);
void write_json_file(const std::string& path, const ordered_json& j);

std::uint64_t fnv1a64_file(const std::string& path);

// Flat CSVs backing the report: one row per replicate x method, one per
// term x method, and the long-format blip-estimate draws.
void write_report_csvs(const MetricsReport& report, const std::string& out_dir);

}  // namespace pdwols
