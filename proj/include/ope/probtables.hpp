#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ope/model.hpp"
#include "ope/model_io.hpp"

namespace ope {

/// Raised when a matrix that must be inverted is numerically singular.
class SingularMatrixError : public Error {
public:
    SingularMatrixError(const std::string& descriptor, double condition_number);

    const std::string& descriptor() const { return descriptor_; }
    double condition_number() const { return condition_number_; }

private:
    std::string descriptor_;
    double condition_number_;
};

/// A random variable of the logged process. Z at t = -1 is the pre-observation.
enum class VarKind { U, Z, O, A, R };

struct Var {
    VarKind kind = VarKind::Z;
    int t = 0;

    auto operator<=>(const Var&) const = default;
};

std::string to_string(const Var& v);
int cardinality(const Var& v, const SpaceSpec& s);

inline Var U(int t) { return {VarKind::U, t}; }
inline Var Z(int t) { return {VarKind::Z, t}; }
inline Var O(int t) { return {VarKind::O, t}; }
inline Var A(int t) { return {VarKind::A, t}; }
inline Var R(int t) { return {VarKind::R, t}; }

using Assignment = std::vector<std::pair<Var, int>>;

/// Describes the matrix P(X, x_f | Y, y_g): rows enumerate the free outcome
/// variables X, columns the free conditioning variables Y; x_f and y_g are
/// fixed coordinates. Multi-variable rows/columns use mixed radix with the
/// first variable most significant.
struct MatrixDescriptor {
    std::vector<Var> rows;
    Assignment row_fixed;
    std::vector<Var> cols;
    Assignment given;

    std::string label() const;
    std::vector<Var> variables() const;
    int max_step() const;
};

/// Labeled conditional-probability matrix.
struct CondProbMatrix {
    std::string descriptor;
    std::vector<std::vector<int>> row_labels;
    std::vector<std::vector<int>> col_labels;
    Eigen::MatrixXd values;
    std::vector<double> counts;  // per column; zeros for population matrices
    double condition_number = std::numeric_limits<double>::quiet_NaN();

    bool column_is_nan(int c) const;
    bool has_nan() const;
    /// Sub-matrix on the given row and column index subsets.
    CondProbMatrix select(const std::vector<int>& rows, const std::vector<int>& cols) const;
    nlohmann::json to_json() const;
};

/// 2-norm condition number via SVD; +inf for singular or NaN-containing input.
double condition_number(const Eigen::MatrixXd& a);

/// Dense table over a set of variables (probabilities or counts).
struct JointTable {
    std::vector<Var> vars;  // sorted
    std::vector<int> dims;
    std::vector<double> values;
    double total = 0.0;  // record count for empirical tables, 1 for population

    std::size_t stride(std::size_t var_index) const;
    int position(const Var& v) const;  // -1 if absent
};

/// Builds a CondProbMatrix from a joint table containing all descriptor variables.
/// Entry = (J(x, x_f, y, y_g) + eps) / (J(y, y_g) + eps * n_rows); columns whose
/// denominator is zero are NaN.
CondProbMatrix slice_conditional(const JointTable& joint, const MatrixDescriptor& d, const SpaceSpec& s,
                                 double smoothing, bool record_counts);

struct SolveOptions {
    double ridge = 0.0;
    double condition_cap = 1e8;
};

struct SolveResult {
    Eigen::MatrixXd x;
    double condition_number = 0.0;
};

/// X minimizing ||A X - B||_F^2 + ridge ||X||_F^2. With ridge = 0 a square A
/// is solved directly and must have condition number <= cap.
SolveResult solve_weights(const CondProbMatrix& a, const Eigen::MatrixXd& b, const SolveOptions& opts = {});
SolveResult solve_weights(const CondProbMatrix& a, const CondProbMatrix& b, const SolveOptions& opts = {});

/// Source of conditional-probability matrices: exact (population) or counted (empirical).
class MatrixSource {
public:
    virtual ~MatrixSource() = default;

    virtual ModelKind kind() const = 0;
    virtual const SpaceSpec& spaces() const = 0;
    virtual int horizon() const = 0;
    virtual bool is_population() const = 0;

    CondProbMatrix matrix(const MatrixDescriptor& d) const;
    const JointTable& joint(const std::vector<Var>& vars) const;

protected:
    virtual JointTable build_joint(const std::vector<Var>& sorted_vars) const = 0;
    virtual double smoothing() const { return 0.0; }

private:
    mutable std::mutex mutex_;
    mutable std::map<std::vector<Var>, std::shared_ptr<JointTable>> cache_;
};

/// Exact joint distributions of the behavior process, by forward marginalization.
class PopulationSource : public MatrixSource {
public:
    PopulationSource(AnyModel model, BehaviorPolicy behavior);

    ModelKind kind() const override { return kind_of(model_); }
    const SpaceSpec& spaces() const override { return spaces_of(model_); }
    int horizon() const override { return behavior_.horizon(); }
    bool is_population() const override { return true; }

    const AnyModel& model() const { return model_; }
    const BehaviorPolicy& behavior() const { return behavior_; }

protected:
    JointTable build_joint(const std::vector<Var>& sorted_vars) const override;

private:
    AnyModel model_;
    BehaviorPolicy behavior_;
};

struct EmpiricalOptions {
    double smoothing = 0.0;
    /// Adds the counts of the same descriptor shifted to every other valid step.
    bool pool_steps = false;
};

/// Counts over observable records. Hidden variables are rejected.
class EmpiricalSource : public MatrixSource {
public:
    EmpiricalSource(std::vector<ObservableRecord> records, ModelKind kind, SpaceSpec spaces,
                    EmpiricalOptions opts = {});

    ModelKind kind() const override { return kind_; }
    const SpaceSpec& spaces() const override { return spaces_; }
    int horizon() const override { return horizon_; }
    bool is_population() const override { return false; }
    std::size_t size() const { return records_.size(); }

protected:
    JointTable build_joint(const std::vector<Var>& sorted_vars) const override;
    double smoothing() const override { return opts_.smoothing; }

private:
    std::vector<ObservableRecord> records_;
    ModelKind kind_;
    SpaceSpec spaces_;
    EmpiricalOptions opts_;
    int horizon_ = 0;
};

CondProbMatrix empirical_cond_matrix(const std::vector<ObservableRecord>& data, ModelKind kind,
                                     const SpaceSpec& spaces, const MatrixDescriptor& d, double smoothing = 0.0);

/// Row subsets K_i into O and column subsets J_{i-1} into Z for Theorem 2.
/// rows[i] = K_i and cols[i] = J_{i-1} for i = 0..L (cols[0] indexes z_{-1}).
struct IndexSets {
    std::vector<std::vector<int>> rows;
    std::vector<std::vector<int>> cols;
    std::vector<double> worst_condition;  // per step, from selection

    int horizon() const { return static_cast<int>(rows.size()) - 1; }
    static IndexSets full(const SpaceSpec& s, int horizon);
    nlohmann::json to_json() const;
};

struct IndexSelectionOptions {
    std::size_t exhaustive_limit = 10000;
    double condition_cap = 1e8;
};

/// Per step, the K_i and J_{i-1} minimizing the worst condition number of
/// P_(K,J)(O_i | z_i, a_i, Z_{i-1}) over all reachable (a_i, z_i).
IndexSets select_index_sets(const MatrixSource& src, int horizon, const IndexSelectionOptions& opts = {});

/// Descriptor of P(O_i | z_i, a_i, Z_{i-1}) for one context.
MatrixDescriptor decoupled_b_descriptor(int i, int a, int z);

enum class ContextMode { FullHistory, LastObservation };
const char* to_string(ContextMode m);
ContextMode parse_context_mode(const std::string& s);

/// Empirical P^b(a_t | context) with minimum-count exclusion.
class BehaviorActionTable {
public:
    BehaviorActionTable(const std::vector<ObservableRecord>& data, int n_a, ContextMode mode, int min_count = 5);

    ContextMode mode() const { return mode_; }
    int min_count() const { return min_count_; }
    /// Context key of step t of a record.
    std::vector<int> key(const ObservableRecord& r, int t) const;
    /// nullopt if the context was not seen or is below the minimum count.
    std::optional<double> prob(const ObservableRecord& r, int t, int a) const;
    std::size_t excluded_contexts() const { return excluded_; }
    std::size_t contexts() const { return counts_.size(); }

private:
    int n_a_;
    ContextMode mode_;
    int min_count_;
    std::map<std::vector<int>, std::vector<double>> counts_;
    std::size_t excluded_ = 0;
};

}  // namespace ope
