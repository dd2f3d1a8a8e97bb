#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "ope/environments.hpp"
#include "ope/estimators.hpp"
#include "ope/oracle.hpp"
#include "reference.hpp"

using namespace ope;

namespace {

double reference_value(const TabularPOMDP& m, const EvaluationPolicy& e, int L) {
    return ref::value(ref::enumerate(m, ref::evaluation(e, m.spaces), L), m.spaces, m.gamma);
}

double reference_value(const TabularDPOMDP& m, const EvaluationPolicy& e, int L) {
    return ref::value(ref::enumerate(m, ref::evaluation(e, m.spaces), L), m.spaces, m.gamma);
}

}  // namespace

TEST_CASE("theorem1 population estimate equals the reference value") {
    const auto m = fixtures::tiny_pomdp();
    const PopulationSource src(AnyModel{m}, fixtures::tiny_behavior(3));
    ChainOptions enumerate;
    enumerate.force_enumeration = true;
    for (int L = 0; L <= 3; ++L) {
        const auto pe = fixtures::tiny_eval(L);
        const double want = reference_value(m, pe, L);
        const auto dp = theorem1_value(src, pe, L, m.gamma);
        const auto en = theorem1_value(src, pe, L, m.gamma, enumerate);
        CHECK(std::abs(dp.v_hat - want) <= 1e-10);
        CHECK(std::abs(en.v_hat - want) <= 1e-10);
        CHECK(dp.diag.path == "dynamic-program");
        CHECK(en.diag.path == "enumeration");
        CHECK(dp.diag.max_norm_residual() <= 1e-10);
    }
}

TEST_CASE("theorem1 handles history-dependent policies") {
    const auto m = fixtures::tiny_pomdp();
    const int L = 2;
    const PopulationSource src(AnyModel{m}, fixtures::tiny_behavior(L));
    const auto g = EvaluationPolicy::general(ModelKind::Pomdp, 2, L, [](int t, const ObservableHistory& h) {
        const int s = t == 0 ? h.z[0] : h.z[t] ^ h.a[t - 1];
        return s == 0 ? ProbVector{0.3, 0.7} : ProbVector{0.9, 0.1};
    });
    const auto pol = [](int t, const ref::Path& p) {
        const int s = t == 0 ? p.z[0] : p.z[t] ^ p.a[t - 1];
        return s == 0 ? std::vector<double>{0.3, 0.7} : std::vector<double>{0.9, 0.1};
    };
    const double want = ref::value(ref::enumerate(m, pol, L), m.spaces, m.gamma);
    CHECK(std::abs(theorem1_value(src, g, L, m.gamma).v_hat - want) <= 1e-10);
}

TEST_CASE("theorem1 weight chain on one trajectory") {
    const auto m = fixtures::tiny_pomdp();
    const PopulationSource src(AnyModel{m}, fixtures::tiny_behavior(2));
    const auto pe = fixtures::tiny_eval(2);
    const auto w = theorem1_chain(src, pe, {0, 1, 1}, {1, 0, 0});
    CHECK(w.w.size() == 3);
    CHECK(w.pi_e == doctest::Approx(0.9 * 0.6 * 0.6));
    CHECK(w.omega.size() == 2);
    CHECK_THROWS_AS(theorem1_chain(src, pe, {0, 1}, {1}), UsageError);
}

TEST_CASE("theorem2 population estimate equals the reference value") {
    const auto m = fixtures::tiny_dpomdp();
    const PopulationSource src(AnyModel{m}, fixtures::tiny_dbehavior(3));
    ChainOptions enumerate;
    enumerate.force_enumeration = true;
    for (int L = 0; L <= 3; ++L) {
        const auto pe = fixtures::tiny_deval(L);
        const double want = reference_value(m, pe, L);
        CHECK(std::abs(theorem2_value(src, pe, L, m.gamma).v_hat - want) <= 1e-10);
        CHECK(std::abs(theorem2_value(src, pe, L, m.gamma, std::nullopt, enumerate).v_hat - want) <= 1e-10);
    }
}

TEST_CASE("estimators reject mismatched inputs") {
    const PopulationSource pomdp(AnyModel{fixtures::tiny_pomdp()}, fixtures::tiny_behavior(2));
    const PopulationSource dpomdp(AnyModel{fixtures::tiny_dpomdp()}, fixtures::tiny_dbehavior(2));
    CHECK_THROWS_AS(theorem1_value(dpomdp, fixtures::tiny_deval(2), 2, 0.9), UsageError);
    CHECK_THROWS_AS(theorem2_value(pomdp, fixtures::tiny_eval(2), 2, 0.9), UsageError);
    CHECK_THROWS_AS(theorem1_value(pomdp, fixtures::tiny_eval(3), 3, 0.9), UsageError);
    CHECK_THROWS_AS(theorem1_value(pomdp, fixtures::tiny_eval(1), 2, 0.9), UsageError);
}

TEST_CASE("singular proxies are reported") {
    RandomSizes sz;
    sz.iid_hidden = true;
    const auto r = random_pomdp(1, sz);
    const PopulationSource src(AnyModel{r.model}, r.behavior);
    const auto pe = random_eval_policy(1, ModelKind::Pomdp, 2, 2, 2);
    CHECK_THROWS_AS(theorem1_value(src, pe, 2, 0.9), SingularMatrixError);
}

TEST_CASE("proposition1 matches the composite policy") {
    const auto m = fixtures::tiny_pomdp();
    for (int L = 1; L <= 2; ++L) {
        const auto b = fixtures::tiny_behavior(L);
        const auto pe = fixtures::tiny_eval(L);
        const PopulationSource src(AnyModel{m}, b);
        const auto paths =
            ref::enumerate(m, ref::switch_at(ref::behavior(b, m.spaces), ref::evaluation(pe, m.spaces), L), L);
        const auto want = ref::reward_dist(paths, 2, L);
        const auto got = proposition1_value(src, pe, L);
        CHECK(std::abs(got.prob[0] - want[0]) <= 1e-10);
        CHECK(std::abs(got.prob[1] - want[1]) <= 1e-10);
    }
}

TEST_CASE("theorem1 on data converges to the truth") {
    const auto m = fixtures::tiny_pomdp();
    const int L = 2;
    const auto d = sample_dataset(AnyModel{m}, fixtures::tiny_behavior(L), L, 200000, 5, 2);
    const EmpiricalSource src(d.observable(), ModelKind::Pomdp, m.spaces);
    const auto pe = fixtures::tiny_eval(L);
    CHECK(std::abs(theorem1_value(src, pe, L, m.gamma).v_hat - reference_value(m, pe, L)) < 0.02);
}

TEST_CASE("naive IS on a hand-built dataset") {
    SpaceSpec s{2, 2, 2, 0, {0.0, 1.0}};
    std::vector<ObservableRecord> data;
    for (int i = 0; i < 5; ++i) {
        data.push_back({0, {0}, {}, {0}, {1}});
        data.push_back({0, {0}, {}, {1}, {0}});
    }
    const auto pe = fixtures::tiny_eval(0);
    // P^b(a | z = 0) = 1/2, weights 0.2 and 1.8; only a = 0 records pay 1.
    const auto est = naive_is_value(data, s, pe, 0.9);
    CHECK(est.v_hat == doctest::Approx(0.1));
    CHECK(est.per_step[0].prob[1] == doctest::Approx(0.1));
    CHECK(est.per_step[0].prob[0] == doctest::Approx(0.9));

    ISOptions clip;
    clip.clip = 1.0;
    const auto clipped = naive_is_value(data, s, pe, 0.9, clip);
    CHECK(clipped.diag.clip_events == 5);
    CHECK(clipped.per_step[0].prob[0] == doctest::Approx(0.5));

    ISOptions strict;
    strict.min_count = 11;
    const auto dropped = naive_is_value(data, s, pe, 0.9, strict);
    CHECK(dropped.diag.dropped_records == 10);
}

TEST_CASE("naive IS on data agrees with its population expectation") {
    const auto m = fixtures::tiny_pomdp();
    const int L = 2;
    const auto b = fixtures::tiny_behavior(L);
    const auto pe = fixtures::tiny_eval(L);
    const auto d = sample_dataset(AnyModel{m}, b, L, 40000, 21, 2);
    for (auto mode : {ContextMode::FullHistory, ContextMode::LastObservation}) {
        ISOptions o;
        o.mode = mode;
        const auto est = naive_is_value(d.observable(), m.spaces, pe, m.gamma, o);
        const auto pop = naive_is_population(AnyModel{m}, b, pe, L, mode);
        CHECK(std::abs(est.v_hat - pop.v_hat) < 4 * est.diag.stderr_v);
    }
}

TEST_CASE("oracle IS is unbiased") {
    const auto m = fixtures::tiny_dpomdp();
    const int L = 2;
    const auto b = fixtures::tiny_dbehavior(L);
    const auto pe = fixtures::tiny_deval(L);
    const auto d = sample_dataset(AnyModel{m}, b, L, 40000, 8, 2);
    const auto est = oracle_is_value(d, m.spaces, pe, b, m.gamma);
    CHECK(std::abs(est.v_hat - reference_value(m, pe, L)) < 4 * est.diag.stderr_v);
}

TEST_CASE("assumption 1 control and counterexample") {
    const auto c = assumption1_env(3);
    const auto ok = check_assumption1(AnyModel{c.model}, c.behavior, c.evaluation, c.horizon);
    CHECK(ok.holds);
    CHECK(ok.reward_condition);
    const auto is = naive_is_population(AnyModel{c.model}, c.behavior, c.evaluation, c.horizon, ContextMode::FullHistory);
    CHECK(std::abs(is.v_hat - exact_value(AnyModel{c.model}, c.evaluation, c.horizon).v) <= 1e-12);

    const auto f = figure3_pomdp(1.0, 0.9);
    CHECK_FALSE(check_assumption1(AnyModel{f.model}, f.behavior, f.evaluation, f.horizon).holds);
}

TEST_CASE("value_of discounts per-step expectations") {
    std::vector<RewardDistribution> steps{{0, {0.0, 1.0}, {0.5, 0.5}}, {1, {0.0, 1.0}, {0.0, 1.0}}};
    CHECK(value_of(steps, 0.5) == doctest::Approx(1.0));
}
