#include "gpo/model_io.hpp"

#include <gtest/gtest.h>

#include "gpo/benchmarks.hpp"
#include "test_util.hpp"

namespace gpo {
namespace {

TEST(ParseModel, MiningRobotRoundTrip) {
    const PomdpModel m = gen_tiger_mining();
    const std::string text = serialize_model(m);
    const PomdpModel back = parse_model(text);
    EXPECT_EQ(back.num_states(), 7);
    EXPECT_EQ(back.num_actions(), 4);
    EXPECT_EQ(back.num_observations(), 6);
    EXPECT_TRUE(models_equal(m, back));
    EXPECT_TRUE(validate_model(back).empty());
}

TEST(ParseModel, RoundTripOnRandomModels) {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const PomdpModel m = test::make_random_model(rng, 5, 3, 3, false);
        const PomdpModel back = parse_model(serialize_model(m));
        EXPECT_TRUE(models_equal(m, back));
    }
}

TEST(ParseModel, MissingTransitionMassIsAnError) {
    const std::string text =
        "pomdp v1\n"
        "discount 0.5\n"
        "states t1 mnd\n"
        "actions ms\n"
        "observations o1 o2\n"
        "init t1 1\n"
        "obs t1 o1\n"
        "obs mnd o2\n"
        "T t1 ms mnd 0.6\n"
        "T mnd ms mnd 1\n";
    try {
        parse_model(text);
        FAIL() << "expected a distribution-sum error";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("t1"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("ms"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("sum"), std::string::npos);
    }
}

TEST(ParseModel, UndeclaredNameCarriesLineNumber) {
    const std::string text =
        "pomdp v1\n"
        "discount 0.5\n"
        "states s0\n"
        "actions a0\n"
        "observations z0\n"
        "init s0 1\n"
        "obs s0 z0\n"
        "T s0 a0 nowhere 1\n";
    try {
        parse_model(text);
        FAIL() << "expected an undeclared-name error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line, 8);
        EXPECT_NE(std::string(e.what()).find("nowhere"), std::string::npos);
    }
}

TEST(ParseModel, DuplicateDeclarationRejected) {
    const std::string text =
        "pomdp v1\n"
        "discount 0.5\n"
        "states s0 s0\n"
        "actions a0\n"
        "observations z0\n";
    EXPECT_THROW(parse_model(text), ParseError);
}

TEST(ParseModel, SyntaxErrorsCarryLineNumbers) {
    const std::string text =
        "pomdp v1\n"
        "discount 0.5\n"
        "states s0\n"
        "actions a0\n"
        "observations z0\n"
        "init s0 not-a-number\n";
    try {
        parse_model(text);
        FAIL() << "expected a syntax error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line, 6);
    }
}

TEST(ParseModel, CommentsAndBlankLinesIgnored) {
    const std::string text =
        "pomdp v1\n"
        "# a comment\n"
        "\n"
        "discount 0.5   # trailing comment\n"
        "states s0\n"
        "actions a0\n"
        "observations z0\n"
        "init s0 1\n"
        "obs s0 z0\n"
        "T s0 a0 s0 1\n";
    const PomdpModel m = parse_model(text);
    EXPECT_EQ(m.num_states(), 1);
    EXPECT_EQ(m.discount, 0.5);
}

TEST(ParseModel, ProbabilisticObservationsAreDeterminized) {
    const std::string text =
        "pomdp v1\n"
        "discount 0.5\n"
        "states s0 s1\n"
        "actions a0\n"
        "observations z0 z1\n"
        "init s0 1\n"
        "obs s0 z0\n"
        "obs s1 z0 0.75\n"
        "obs s1 z1 0.25\n"
        "T s0 a0 s1 1\n"
        "T s1 a0 s0 1\n";
    const PomdpModel m = parse_model(text);
    EXPECT_TRUE(validate_model(m).empty());
    // s1 splits into (s1, z0) and (s1, z1); s0 keeps a single copy.
    EXPECT_EQ(m.num_states(), 3);
    for (int s = 0; s < m.num_states(); ++s) EXPECT_GE(m.obs_map[s], 0);
}

TEST(SerializeModel, CanonicalAndStable) {
    const PomdpModel m = gen_tiger_mining();
    EXPECT_EQ(serialize_model(m), serialize_model(m));

    // A name-permuted copy serializes to byte-identical text.
    PomdpModel shuffled = parse_model(serialize_model(m));
    EXPECT_EQ(serialize_model(shuffled), serialize_model(m));
}

TEST(SerializeModel, ZeroRewardsGetNoRLines) {
    Rng rng(3);
    PomdpModel m = test::make_random_model(rng, 3, 2, 2);
    for (double& r : m.rewards) r = 0.0;
    const std::string text = serialize_model(m);
    EXPECT_EQ(text.find("\nR "), std::string::npos);
    EXPECT_TRUE(models_equal(m, parse_model(text)));
}

TEST(SerializeModel, SeventeenDigitsRoundTripExactly) {
    Rng rng(4);
    PomdpModel m = test::make_random_model(rng, 4, 2, 2);
    // Awkward non-dyadic values must survive the text round trip bit-exactly.
    m.reward_mut(0, 0) = 1.0 / 3.0;
    m.reward_mut(1, 1) = -0.123456789012345678;
    const PomdpModel back = parse_model(serialize_model(m));
    const int s0 = back.find_state("s0"), s1 = back.find_state("s1");
    EXPECT_EQ(back.reward(s0, back.find_action("a0")), 1.0 / 3.0);
    EXPECT_EQ(back.reward(s1, back.find_action("a1")), -0.123456789012345678);
}

TEST(ModelHash, DiscriminatesAndAgrees) {
    const PomdpModel a = gen_tiger_mining();
    PomdpModel b = gen_tiger_mining();
    EXPECT_EQ(model_hash(a), model_hash(b));
    b.reward_mut(b.find_state("mnd"), 0) = 99.0;
    EXPECT_NE(model_hash(a), model_hash(b));
}

}  // namespace
}  // namespace gpo
