#include <doctest.h>

#include <cmath>
#include <limits>

#include "ope/environments.hpp"
#include "ope/estimators.hpp"
#include "ope/model_io.hpp"
#include "ope/oracle.hpp"

using namespace ope;

TEST_CASE("medical model is valid and deterministic per seed") {
    for (std::uint64_t seed : {0, 7, 166})
        for (double alpha : {0.0, 0.5, 1.0}) {
            const auto cfg = MedicalConfig::from_seed(seed, alpha);
            const auto mp = medical_dpomdp(cfg);
            CHECK(validate_dpomdp(mp.model).ok());
            CHECK(validate_behavior(mp.behavior, mp.model.spaces).ok());
            CHECK(validate_evaluation(medical_eval_policy(cfg), mp.model.spaces).ok());
            CHECK(mp.model.spaces.n_u == kMedicalStates);
            CHECK(mp.model.spaces.n_r() <= kMedicalRewardLevels);
        }
    const auto a = medical_dpomdp(MedicalConfig::from_seed(3, 0.5));
    const auto b = medical_dpomdp(MedicalConfig::from_seed(3, 0.5));
    CHECK(model_to_json(AnyModel{a.model}) == model_to_json(AnyModel{b.model}));
    CHECK(a.behavior.tables == b.behavior.tables);
    CHECK(medical_eval_policy(MedicalConfig::from_seed(3, 0.5)).tables() ==
          medical_eval_policy(MedicalConfig::from_seed(3, 0.1)).tables());
}

TEST_CASE("medical model without confounding ignores u in rewards and actions") {
    const auto mp = medical_dpomdp(MedicalConfig::from_seed(11, 0.0));
    const auto& m = mp.model;
    const int nz = m.spaces.n_z;
    double worst = 0.0;
    for (int z = 0; z < nz; ++z)
        for (int a = 0; a < 2; ++a)
            for (int u = 1; u < m.spaces.n_u; ++u) {
                worst = std::max(worst, std::abs(m.reward_value(u, z, a) - m.reward_value(0, z, a)));
                worst = std::max(worst, std::abs(mp.behavior.prob(0, u * nz + z, a) - mp.behavior.prob(0, z, a)));
            }
    CHECK(worst <= 1e-12);
}

TEST_CASE("medical config validation") {
    auto bad = MedicalConfig::from_seed(1, 0.5);
    bad.alpha = 1.5;
    CHECK_THROWS_AS(medical_dpomdp(bad), UsageError);
    auto cfg = MedicalConfig::from_seed(1, 0.5);
    cfg.c_look.clear();
    CHECK_THROWS_AS(cfg.validate(), UsageError);
}

TEST_CASE("acceptance medical seed separates the two policies") {
    const auto cfg = MedicalConfig::from_seed(166, 1.0);
    const auto mp = medical_dpomdp(cfg);
    const AnyModel m = mp.model;
    const double ve = exact_value(m, medical_eval_policy(cfg), cfg.horizon).v;
    const double vb = exact_value(m, mp.behavior, cfg.horizon).v;
    CHECK(std::abs(ve - vb) >= 0.02);
    const PopulationSource src(m, mp.behavior);
    for (int a = 0; a < 2; ++a)
        for (int z = 0; z < 4; ++z) CHECK(std::isfinite(condition_number(src.matrix(decoupled_b_descriptor(1, a, z)).values)));
}

TEST_CASE("counterexample model") {
    const auto f = figure3_pomdp(0.5, 0.6);
    CHECK(validate_pomdp(f.model).ok());
    CHECK(f.horizon == figure3_horizon());
    CHECK(f.model.spaces.n_u == 6);
    CHECK(f.model.spaces.n_z == 2);
    CHECK(f.evaluation.prob(0, 1, 1) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(figure3_pomdp(0.0, 0.5), UsageError);
    CHECK_THROWS_AS(figure3_pomdp(0.5, 1.0), UsageError);
}

TEST_CASE("assumption 1 environment") {
    const auto c = assumption1_env(2);
    CHECK(validate_pomdp(c.model).ok());
    CHECK(check_assumption1(AnyModel{c.model}, c.behavior, c.evaluation, c.horizon).holds);
    CHECK(std::isfinite(exact_value(AnyModel{c.model}, c.evaluation, c.horizon).v));
}

TEST_CASE("random generators certify invertibility") {
    RandomSizes sz;
    const auto first = random_pomdp(4, sz);
    CHECK(first.tries == 1);

    const auto capped = random_pomdp(4, sz, 1e3);
    CHECK(capped.certificate <= 1e3);
    const PopulationSource src(AnyModel{capped.model}, capped.behavior);
    double worst = 0.0;
    for (int i = 1; i <= sz.horizon; ++i)
        for (int a = 0; a < 2; ++a)
            worst = std::max(worst, condition_number(src.matrix({{Z(i)}, {}, {Z(i - 1)}, {{A(i), a}}}).values));
    CHECK(worst <= 1e3);

    RandomSizes dz;
    dz.n_z = 3;
    dz.n_o = 3;
    const auto d = random_dpomdp(4, dz, 1e3);
    CHECK(d.certificate <= 1e3);
    CHECK(validate_dpomdp(d.model).ok());
    CHECK(d.index_sets.horizon() == dz.horizon);
}

TEST_CASE("i.i.d. hidden states are rejected under a finite cap") {
    RandomSizes sz;
    sz.iid_hidden = true;
    CHECK_THROWS_AS(random_pomdp(1, sz, 1e6, 20), Error);
    CHECK_THROWS_AS(random_dpomdp(1, sz, 1e6, 20), Error);
    sz.n_z = 1;
    CHECK_THROWS_AS(random_pomdp(1, sz), UsageError);
}

TEST_CASE("random evaluation policy rows") {
    const auto e = random_eval_policy(9, ModelKind::Decoupled, 6, 3, 2);
    SpaceSpec s{2, 3, 3, 2, {0.0}};
    CHECK(validate_evaluation(e, s).ok());
    CHECK(e.tables() == random_eval_policy(9, ModelKind::Decoupled, 6, 3, 2).tables());
}
