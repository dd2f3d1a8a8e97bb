#include <doctest.h>

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "ope/environments.hpp"
#include "ope/oracle.hpp"
#include "ope/probtables.hpp"
#include "ope/simulate.hpp"

using namespace ope;

TEST_CASE("descriptor labels and validation") {
    const MatrixDescriptor d{{Z(1)}, {}, {Z(0)}, {{A(1), 1}}};
    CHECK(d.label() == "P(Z_1|a_1=1,Z_0)");
    CHECK(d.max_step() == 1);
    const MatrixDescriptor bad{{Z(1)}, {}, {Z(1)}, {}};
    CHECK_THROWS_AS(bad.variables(), UsageError);
}

TEST_CASE("conditional columns sum to one") {
    const PopulationSource src(AnyModel{fixtures::tiny_dpomdp()}, fixtures::tiny_dbehavior(2));
    const auto m = src.matrix({{O(2), R(2)}, {}, {Z(1), A(1)}, {{Z(2), 1}}});
    CHECK(m.values.rows() == 2 * 3);
    CHECK(m.values.cols() == 2 * 2);
    for (Eigen::Index c = 0; c < m.values.cols(); ++c) CHECK(std::abs(m.values.col(c).sum() - 1.0) <= 1e-12);
    CHECK(m.row_labels.size() == 6);
    CHECK(m.row_labels[5] == std::vector<int>{1, 2});
}

TEST_CASE("O variables need a Decoupled model") {
    const PopulationSource src(AnyModel{fixtures::tiny_pomdp()}, fixtures::tiny_behavior(1));
    CHECK_THROWS_AS(src.matrix({{O(0)}, {}, {}, {}}), UsageError);
    CHECK_THROWS_AS(src.matrix({{Z(2)}, {}, {}, {}}), UsageError);
}

TEST_CASE("empirical sources reject hidden variables and handle empty columns") {
    const AnyModel m = fixtures::tiny_pomdp();
    const auto d = sample_dataset(m, fixtures::tiny_behavior(1), 1, 30, 1);
    const EmpiricalSource src(d.observable(), ModelKind::Pomdp, spaces_of(m));
    CHECK_THROWS_AS(src.matrix({{U(0)}, {}, {}, {}}), UsageError);

    std::vector<ObservableRecord> one{ObservableRecord{0, {0, 1}, {}, {0, 0}, {1, 0}}};
    const MatrixDescriptor desc{{Z(1)}, {}, {Z(0)}, {}};
    const auto raw = empirical_cond_matrix(one, ModelKind::Pomdp, spaces_of(m), desc);
    CHECK(raw.values(1, 0) == 1.0);
    CHECK(raw.column_is_nan(1));
    const auto smooth = empirical_cond_matrix(one, ModelKind::Pomdp, spaces_of(m), desc, 1.0);
    CHECK(smooth.values(1, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(smooth.values(0, 1) == doctest::Approx(0.5));
    CHECK(smooth.counts[0] == 1.0);
}

TEST_CASE("empirical medical matrix within 3 standard errors of the population matrix") {
    const auto cfg = MedicalConfig::from_seed(166, 0.5);
    const auto mp = medical_dpomdp(cfg);
    const AnyModel model = mp.model;
    const auto data = sample_dataset(model, mp.behavior, 1, 200000, 17, 2);
    const EmpiricalSource emp(data.observable(), ModelKind::Decoupled, mp.model.spaces);
    const PopulationSource pop(model, mp.behavior);
    const MatrixDescriptor d = decoupled_b_descriptor(1, 0, 0);
    const auto e = emp.matrix(d);
    const auto p = pop.matrix(d);
    int outside = 0;
    for (Eigen::Index c = 0; c < p.values.cols(); ++c) {
        REQUIRE(e.counts[c] > 100);
        for (Eigen::Index r = 0; r < p.values.rows(); ++r) {
            const double q = p.values(r, c);
            const double se = std::sqrt(q * (1 - q) / e.counts[c]);
            if (std::abs(e.values(r, c) - q) > 3 * se) ++outside;
        }
    }
    // 16 entries; a 3-sigma miss is rare but allowed once.
    CHECK(outside <= 1);
}

TEST_CASE("condition numbers") {
    CHECK(condition_number(Eigen::MatrixXd::Identity(3, 3)) == doctest::Approx(1.0));
    Eigen::MatrixXd s(2, 2);
    s << 1, 2, 2, 4;
    CHECK(std::isinf(condition_number(s)));
    s(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK(std::isinf(condition_number(s)));
}

TEST_CASE("solve_weights: direct, singular and ridge") {
    CondProbMatrix a;
    a.descriptor = "A";
    a.values.resize(2, 2);
    a.values << 0.8, 0.3, 0.2, 0.7;
    Eigen::MatrixXd b(2, 1);
    b << 0.5, 0.5;
    const auto x = solve_weights(a, b);
    CHECK((a.values * x.x - b).norm() <= 1e-14);
    CHECK(x.condition_number > 1.0);

    CondProbMatrix sing = a;
    sing.values << 0.5, 0.5, 0.5, 0.5;
    CHECK_THROWS_AS(solve_weights(sing, b), SingularMatrixError);

    SolveOptions ridge;
    ridge.ridge = 0.1;
    const auto xr = solve_weights(sing, b, ridge);
    const Eigen::MatrixXd want =
        (sing.values.transpose() * sing.values + 0.1 * Eigen::MatrixXd::Identity(2, 2)).inverse() * sing.values.transpose() * b;
    CHECK((xr.x - want).norm() <= 1e-12);

    SolveOptions strict;
    strict.condition_cap = 1.5;
    CHECK_THROWS_AS(solve_weights(a, b, strict), SingularMatrixError);
}

TEST_CASE("index selection beats the leading-index baseline") {
    RandomSizes sz;
    sz.n_u = 2;
    sz.n_z = 4;
    sz.n_o = 4;
    sz.horizon = 2;
    const auto r = random_dpomdp(5, sz);
    const PopulationSource src(AnyModel{r.model}, r.behavior);
    const auto sets = select_index_sets(src, 2);
    for (int i = 0; i <= 2; ++i) {
        double baseline = 0.0, chosen = 0.0;
        for (int a = 0; a < 2; ++a)
            for (int z = 0; z < 4; ++z) {
                const auto m = src.matrix(decoupled_b_descriptor(i, a, z));
                baseline = std::max(baseline, condition_number(m.select({0, 1}, {0, 1}).values));
                chosen = std::max(chosen, condition_number(m.select(sets.rows[i], sets.cols[i]).values));
            }
        CHECK(chosen <= baseline * (1 + 1e-12));
        CHECK(chosen == doctest::Approx(sets.worst_condition[i]));
    }
}

TEST_CASE("behavior action table") {
    std::vector<ObservableRecord> data;
    for (int i = 0; i < 6; ++i) data.push_back({0, {0, 1}, {}, {i % 2, 0}, {0, 0}});
    data.push_back({0, {1, 1}, {}, {1, 1}, {0, 0}});
    const BehaviorActionTable full(data, 2, ContextMode::FullHistory, 5);
    CHECK(full.prob(data[0], 0, 1).value() == doctest::Approx(0.5));
    CHECK_FALSE(full.prob(data[6], 0, 1).has_value());
    CHECK(full.excluded_contexts() >= 1);

    const BehaviorActionTable last(data, 2, ContextMode::LastObservation, 5);
    // z_1 = 1 is shared by all seven records.
    CHECK(last.prob(data[6], 1, 1).value() == doctest::Approx(1.0 / 7.0));
    CHECK(parse_context_mode("last-observation") == ContextMode::LastObservation);
    CHECK_THROWS_AS(parse_context_mode("both"), UsageError);
}
