#include "gpo/pomdp.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "gpo/benchmarks.hpp"
#include "test_util.hpp"

namespace gpo {
namespace {

TEST(ValidateModel, TigerMiningIsValid) {
    EXPECT_TRUE(validate_model(gen_tiger_mining()).empty());
}

TEST(ValidateModel, ReportsBadTransitionSum) {
    PomdpModel m = gen_tiger_mining();
    const int t1 = m.find_state("t1"), ms = m.find_action("ms");
    m.transition_row_mut(t1, ms) = {{m.find_state("mnd"), 0.6}, {t1, 0.3}};
    const auto report = validate_model(m);
    ASSERT_EQ(report.size(), 1u);
    EXPECT_EQ(report[0].state, t1);
    EXPECT_EQ(report[0].action, ms);
    EXPECT_NE(report[0].message.find("t1"), std::string::npos);
    EXPECT_NE(report[0].message.find("ms"), std::string::npos);
}

TEST(ValidateModel, ReportsMissingObservation) {
    PomdpModel m = gen_tiger_mining();
    const int mnd = m.find_state("mnd");
    m.obs_map[mnd] = -1;
    const auto report = validate_model(m);
    ASSERT_EQ(report.size(), 1u);
    EXPECT_EQ(report[0].state, mnd);
    EXPECT_NE(report[0].message.find("mnd"), std::string::npos);
}

TEST(BeliefUpdate, SafeMiningKeepsBeliefFixed) {
    const PomdpModel m = gen_tiger_mining();
    Belief b{std::vector<double>(m.num_states(), 0.0)};
    b.probs[m.find_state("t1")] = 0.9;
    b.probs[m.find_state("t2")] = 0.1;
    const Belief after =
        belief_update(m, b, m.find_action("ms"), m.find_observation("o_t"));
    EXPECT_NEAR(after.probs[m.find_state("t1")], 0.9, 1e-12);
    EXPECT_NEAR(after.probs[m.find_state("t2")], 0.1, 1e-12);
}

TEST(BeliefUpdate, SensingResolvesTheType) {
    const PomdpModel m = gen_tiger_mining();
    Belief b{std::vector<double>(m.num_states(), 0.0)};
    b.probs[m.find_state("t1")] = 0.9;
    b.probs[m.find_state("t2")] = 0.1;
    const Belief after =
        belief_update(m, b, m.find_action("sense"), m.find_observation("o_t1p"));
    EXPECT_EQ(after.probs[m.find_state("t1p")], 1.0);
    EXPECT_EQ(after.support(), std::vector<int>{m.find_state("t1p")});
}

TEST(BeliefUpdate, ImpossibleObservationThrows) {
    // Neither t1 nor t2 can reach fin in one m1 step.
    const PomdpModel m = gen_tiger_mining();
    Belief b{std::vector<double>(m.num_states(), 0.0)};
    b.probs[m.find_state("t1")] = 0.9;
    b.probs[m.find_state("t2")] = 0.1;
    EXPECT_THROW(belief_update(m, b, m.find_action("m1"), m.find_observation("o_fin")),
                 ObservationImpossibleError);
}

TEST(BeliefUpdate, OutputIsANormalizedBeliefInsideTheObservationClass) {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const PomdpModel m = test::make_random_model(rng, 6, 3, 3);
        Belief b{m.initial_belief};
        for (int step = 0; step < 6; ++step) {
            const int a = static_cast<int>(rng.below(m.num_actions()));
            int s = 0;  // sample an outcome to get a reachable observation
            {
                double u = rng.uniform();
                for (int i = 0; i < m.num_states(); ++i) {
                    if (b.probs[i] <= 0.0) continue;
                    s = i;
                    if (u < b.probs[i]) break;
                    u -= b.probs[i];
                }
            }
            Rng step_rng(rng.next_u64());
            const StepResult outcome = sample_step(m, s, a, step_rng);
            b = belief_update(m, b, a, outcome.observation);
            double sum = 0.0;
            for (int i = 0; i < m.num_states(); ++i) {
                EXPECT_GE(b.probs[i], 0.0);
                if (b.probs[i] > 0.0) EXPECT_EQ(m.obs_map[i], outcome.observation);
                sum += b.probs[i];
            }
            EXPECT_NEAR(sum, 1.0, kProbTolerance);
        }
    }
}

TEST(DiscountedPrefix, MatchesTheWorkedExample) {
    const std::vector<double> rewards{0.0, 0.0, 0.0, 100.0};
    EXPECT_DOUBLE_EQ(discounted_prefix(rewards, 0.5), 12.5);
}

TEST(DiscountedPrefix, EmptySequenceIsZero) {
    EXPECT_EQ(discounted_prefix({}, 0.5), 0.0);
}

TEST(DiscountedPrefix, DirectArithmetic) {
    const std::vector<double> rewards{0.0, 100.0};
    EXPECT_DOUBLE_EQ(discounted_prefix(rewards, 0.5), 50.0);
}

TEST(DiscountedPrefix, LinearAndAppendConsistent) {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const double gamma = 0.9 * rng.uniform();
        std::vector<double> a, b;
        const int n = 1 + static_cast<int>(rng.below(8));
        for (int i = 0; i < n; ++i) {
            a.push_back(rng.uniform() * 10 - 5);
            b.push_back(rng.uniform() * 10 - 5);
        }
        std::vector<double> sum;
        for (int i = 0; i < n; ++i) sum.push_back(a[i] + 2.0 * b[i]);
        EXPECT_NEAR(discounted_prefix(sum, gamma),
                    discounted_prefix(a, gamma) + 2.0 * discounted_prefix(b, gamma),
                    1e-12);

        const double x = rng.uniform() * 10 - 5;
        std::vector<double> appended = a;
        appended.push_back(x);
        EXPECT_NEAR(discounted_prefix(appended, gamma),
                    discounted_prefix(a, gamma) + std::pow(gamma, n) * x, 1e-12);
    }
}

TEST(SampleStep, MinedOreAlwaysFinishes) {
    const PomdpModel m = gen_tiger_mining();
    Rng rng(3);
    for (int a = 0; a < m.num_actions(); ++a) {
        const StepResult r = sample_step(m, m.find_state("mnd"), a, rng);
        EXPECT_EQ(r.state, m.find_state("fin"));
        EXPECT_EQ(r.observation, m.find_observation("o_fin"));
        EXPECT_EQ(r.reward, 100.0);
    }
}

TEST(SampleStep, FailIsAbsorbing) {
    const PomdpModel m = gen_tiger_mining();
    Rng rng(3);
    for (int a = 0; a < m.num_actions(); ++a) {
        const StepResult r = sample_step(m, m.find_state("fail"), a, rng);
        EXPECT_EQ(r.state, m.find_state("fail"));
        EXPECT_EQ(r.reward, 0.0);
    }
}

TEST(SampleStep, DeterministicGivenSeed) {
    const PomdpModel m = gen_tiger_mining();
    Rng rng1(42), rng2(42);
    for (int i = 0; i < 100; ++i) {
        const StepResult a = sample_step(m, m.find_state("t1"), m.find_action("ms"), rng1);
        const StepResult b = sample_step(m, m.find_state("t1"), m.find_action("ms"), rng2);
        EXPECT_EQ(a.state, b.state);
        EXPECT_EQ(a.observation, b.observation);
        EXPECT_EQ(a.reward, b.reward);
    }
}

TEST(SampleStep, FrequenciesMatchTheTransitionFunction) {
    const PomdpModel m = gen_tiger_mining();
    const int t1 = m.find_state("t1"), ms = m.find_action("ms");
    Rng rng(2024);
    const int n = 100000;
    std::map<int, int> counts;
    for (int i = 0; i < n; ++i) counts[sample_step(m, t1, ms, rng).state] += 1;
    for (const auto& e : m.transition_row(t1, ms)) {
        const double freq = static_cast<double>(counts[e.state]) / n;
        const double sigma = std::sqrt(e.prob * (1.0 - e.prob) / n);
        EXPECT_LE(std::abs(freq - e.prob), 3.0 * sigma)
            << "state " << e.state << " freq " << freq;
    }
}

TEST(PathTrace, ConsistencyCheck) {
    const PomdpModel m = gen_tiger_mining();
    PathTrace trace;
    trace.start_state = m.find_state("t1");
    trace.steps.push_back({m.find_action("sense"), 0.0, m.find_state("t1p"),
                           m.find_observation("o_t1p")});
    trace.steps.push_back(
        {m.find_action("m1"), 0.0, m.find_state("mnd"), m.find_observation("o_mnd")});
    EXPECT_TRUE(trace_is_consistent(m, trace));

    PathTrace broken = trace;
    broken.steps[1].reward = 5.0;  // wrong reward
    EXPECT_FALSE(trace_is_consistent(m, broken));
    broken = trace;
    broken.steps[1].next_state = m.find_state("fail");  // impossible transition
    EXPECT_FALSE(trace_is_consistent(m, broken));
}

TEST(Determinize, DiracDistributionsConvertInPlace) {
    Rng rng(5);
    const PomdpModel base = test::make_random_model(rng, 4, 2, 3);
    RawObsModel raw;
    raw.state_names = base.state_names;
    raw.action_names = base.action_names;
    raw.observation_names = base.observation_names;
    raw.transitions = base.transitions;
    raw.rewards = base.rewards;
    raw.initial_belief = base.initial_belief;
    raw.discount = base.discount;
    raw.obs_probs.resize(base.num_states());
    for (int s = 0; s < base.num_states(); ++s) raw.obs_probs[s] = {{base.obs_map[s], 1.0}};

    const PomdpModel out = determinize_observations(raw);
    EXPECT_EQ(out.state_names, base.state_names);
    EXPECT_EQ(out.obs_map, base.obs_map);
    EXPECT_EQ(out.transitions, base.transitions);
}

TEST(Determinize, ProductStaysWithinTheSizeBound) {
    Rng rng(6);
    const RawObsModel raw = test::make_random_raw_model(rng, 2, 2, 2);
    const PomdpModel out = determinize_observations(raw);
    EXPECT_LE(out.num_states(), 4);
    EXPECT_TRUE(validate_model(out).empty());
}

// Probability of each length-2 history (a0 o1 a1 o2) under fixed actions,
// computed by direct enumeration.
std::map<std::vector<int>, double> history_distribution_raw(const RawObsModel& raw) {
    std::map<std::vector<int>, double> dist;
    const int A = raw.num_actions();
    for (int a0 = 0; a0 < A; ++a0)
        for (int a1 = 0; a1 < A; ++a1)
            for (int s0 = 0; s0 < raw.num_states(); ++s0) {
                if (raw.initial_belief[s0] <= 0.0) continue;
                for (const auto& e1 : raw.transitions[s0 * A + a0])
                    for (const auto& [z1, p1] : raw.obs_probs[e1.state])
                        for (const auto& e2 : raw.transitions[e1.state * A + a1])
                            for (const auto& [z2, p2] : raw.obs_probs[e2.state]) {
                                const double p = raw.initial_belief[s0] * e1.prob * p1 *
                                                 e2.prob * p2;
                                if (p > 0.0) dist[{a0, z1, a1, z2}] += p;
                            }
            }
    return dist;
}

std::map<std::vector<int>, double> history_distribution_det(const PomdpModel& m) {
    std::map<std::vector<int>, double> dist;
    const int A = m.num_actions();
    for (int a0 = 0; a0 < A; ++a0)
        for (int a1 = 0; a1 < A; ++a1)
            for (int s0 = 0; s0 < m.num_states(); ++s0) {
                if (m.initial_belief[s0] <= 0.0) continue;
                for (const auto& e1 : m.transition_row(s0, a0))
                    for (const auto& e2 : m.transition_row(e1.state, a1)) {
                        const double p = m.initial_belief[s0] * e1.prob * e2.prob;
                        if (p > 0.0)
                            dist[{a0, m.obs_map[e1.state], a1, m.obs_map[e2.state]}] += p;
                    }
            }
    return dist;
}

TEST(Determinize, PreservesShortHistoryDistributions) {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const RawObsModel raw = test::make_random_raw_model(rng, 3, 2, 3);
        const PomdpModel det = determinize_observations(raw);
        ASSERT_TRUE(validate_model(det).empty());
        const auto expected = history_distribution_raw(raw);
        auto actual = history_distribution_det(det);
        for (const auto& [h, p] : expected) {
            EXPECT_NEAR(actual[h], p, 1e-12);
            actual.erase(h);
        }
        for (const auto& [h, p] : actual) EXPECT_NEAR(p, 0.0, 1e-12);
    }
}

}  // namespace
}  // namespace gpo
