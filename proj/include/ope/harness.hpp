#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ope/estimators.hpp"
#include "ope/model_io.hpp"

namespace ope {

/// Named environment builder ("medical", "figure3", "assumption1",
/// "random-pomdp", "random-dpomdp") or "files" with explicit paths.
struct EnvironmentSpec {
    std::string name = "medical";
    nlohmann::json params = nlohmann::json::object();
    std::string model_path;
    std::string behavior_path;
    std::string eval_path;
};

struct EstimatorSpec {
    std::string name;  // theorem1, theorem2, prop1, naive-is, oracle-is
    ContextMode mode = ContextMode::FullHistory;
    int min_count = 5;
    std::optional<double> clip;
};

struct ExperimentConfig {
    EnvironmentSpec environment;
    std::vector<EstimatorSpec> estimators;
    std::vector<double> alphas;
    double gamma = 0.9;
    int horizon = 4;
    std::size_t n = 0;  // 0 runs the estimators on population matrices
    std::vector<std::uint64_t> seeds{0};
    std::string output_dir = ".";
    double smoothing = 0.0;
    double ridge = 0.0;
    bool pool_steps = false;
    bool dump_matrices = false;

    static ExperimentConfig from_json(const nlohmann::json& j, const std::string& base_dir = ".");
    nlohmann::json to_json() const;
    void validate() const;
};

ExperimentConfig load_experiment_config(const std::string& path);

enum class CellError { None, Numerical, Other };

struct ResultRow {
    double alpha = 0.0;
    std::string estimator;
    double v_hat = 0.0;
    double oracle_v_pie = 0.0;
    double oracle_v_pib = 0.0;
    double norm_residual = 0.0;
    double cond_number = 0.0;
    std::size_t dropped = 0;
    std::uint64_t seed = 0;
    std::size_t n = 0;
    std::string error;
    CellError error_kind = CellError::None;
};

struct ResultTable {
    std::vector<ResultRow> rows;

    static const char* header();
    void write_csv(std::ostream& out) const;
    std::string csv() const;
    bool has_error(CellError kind) const;
};

/// A concrete problem instance for one (alpha, seed) cell.
struct Problem {
    AnyModel model;
    BehaviorPolicy behavior;
    EvaluationPolicy evaluation;
    int horizon = 0;
};

Problem build_problem(const EnvironmentSpec& env, double alpha, double gamma, int horizon, std::uint64_t seed);

/// Runs every (alpha, seed) cell on up to `threads` threads; row order is
/// alpha-major, then seed, then estimator, independent of the thread count.
ResultTable run_experiment(const ExperimentConfig& cfg, int threads = 1);

/// Writes results.csv and plot.svg into cfg.output_dir.
void write_experiment_outputs(const ExperimentConfig& cfg, const ResultTable& table);

struct SvgSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

std::string render_svg(const std::vector<SvgSeries>& series, const std::string& x_label, const std::string& y_label,
                       const std::string& title);

/// One polyline per estimator (mean over seeds) plus the two oracle series.
std::string experiment_svg(const ResultTable& table);

struct AffineFit {
    double c_alpha = 0.0;
    double c_gamma = 0.0;
    double max_residual = 0.0;
};

struct GridPoint {
    double alpha = 0.0;
    double gamma = 0.0;
    double v = 0.0;
};

/// Least squares v ~ c_alpha * alpha + c_gamma * gamma without intercept.
AffineFit fit_affine(const std::vector<GridPoint>& points);

struct Figure3Values {
    double v_pib = 0.0;
    double v_pie = 0.0;
    double naive_is = 0.0;
};

Figure3Values figure3_values(double alpha, double gamma);

struct Figure3Report {
    AffineFit behavior;
    AffineFit evaluation;
    AffineFit naive_is;
    std::vector<double> gammas;
    std::vector<double> crossing;  // alpha where v(pi_b) - IS changes sign, per gamma (NaN if none)
};

/// Fits over alpha in {0.2, ..., 1.0} and gamma in {0.3, 0.6, 0.9}.
Figure3Report figure3_report();

/// Writes the conditional matrices used by an estimator as JSON files in `dir`.
void dump_estimator_matrices(const MatrixSource& src, int horizon, const std::string& dir,
                             const std::optional<IndexSets>& sets = std::nullopt);

}  // namespace ope
