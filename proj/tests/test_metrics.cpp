#include "doctest.h"

#include <vector>

#include "grade/errors.hpp"
#include "grade/metrics.hpp"

using namespace grade;

namespace {

ValueDistribution dist(std::string question_id,
                       std::map<std::string, double> probs,
                       std::size_t n_counted = 10,
                       DistributionScope scope = DistributionScope::multi_prompt) {
    ValueDistribution d;
    d.question_id = std::move(question_id);
    d.scope = scope;
    d.probabilities = std::move(probs);
    d.n_counted = n_counted;
    return d;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("normalized entropy matches hand-computed references") {
    // H(.8,.1,.1)/log2(4)
    const auto s1 = normalized_entropy(
        dist("q", {{"a", 0.8}, {"b", 0.1}, {"c", 0.1}}), 4);
    CHECK(s1.entropy == doctest::Approx(0.46096404744368114).epsilon(1e-12));
    CHECK(s1.support_cardinality == 4);

    // Binary support: H(.8,.2)/log2(2) = H(.8,.2)
    const auto s2 = normalized_entropy(dist("q", {{"a", 0.8}, {"b", 0.2}}), 2);
    CHECK(s2.entropy == doctest::Approx(0.7219280948873623).epsilon(1e-12));

    const auto s3 = normalized_entropy(dist("q", {{"a", 0.75}, {"b", 0.25}}), 2);
    CHECK(s3.entropy == doctest::Approx(0.8112781244591328).epsilon(1e-12));
}

TEST_CASE("entropy conventions: point mass, uniform, missing values, |V|=1") {
    CHECK(normalized_entropy(dist("q", {{"a", 1.0}}), 4).entropy == 0.0);

    // Uniform over the full support maxes out at exactly 1.
    CHECK(normalized_entropy(dist("q", {{"a", 0.25}, {"b", 0.25}, {"c", 0.25}, {"d", 0.25}}), 4)
              .entropy == doctest::Approx(1.0).epsilon(1e-12));

    // The denominator uses the full cardinality even when values are unseen:
    // uniform over 2 of 4 values gives 1/log2(4) = 0.5.
    CHECK(normalized_entropy(dist("q", {{"a", 0.5}, {"b", 0.5}}), 4).entropy ==
          doctest::Approx(0.5).epsilon(1e-12));

    CHECK(normalized_entropy(dist("q", {{"a", 1.0}}), 1).entropy == 0.0);
}

TEST_CASE("entropy rejects invalid inputs") {
    CHECK_THROWS_AS(normalized_entropy(dist("q", {}, 0), 2), ValidationError);
    CHECK_THROWS_AS(normalized_entropy(dist("q", {{"a", 1.0}}), 0), ValidationError);
}

TEST_CASE("score aggregation mean and standard error") {
    const std::vector<double> xs{0.2, 0.6, 1.0};
    const auto agg = aggregate_scores(xs);
    CHECK(agg.mean == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(agg.standard_error == doctest::Approx(0.23094010767585033).epsilon(1e-12));
    CHECK(agg.count == 3);

    const std::vector<double> one{0.4};
    CHECK(aggregate_scores(one).standard_error == 0.0);
    CHECK_THROWS_AS(aggregate_scores(std::vector<double>{}), ValidationError);
}

TEST_CASE("model_score splits by scope") {
    std::vector<GradeScore> scores;
    scores.push_back({"q1", DistributionScope::multi_prompt, "", 0.8, 2});
    scores.push_back({"q1", DistributionScope::single_prompt, "p0", 0.2, 2});
    scores.push_back({"q1", DistributionScope::single_prompt, "p1", 0.6, 2});
    scores.push_back({"q1", DistributionScope::single_prompt, "p2", 1.0, 2});
    const auto frag = model_score(scores);
    CHECK(frag.multi.mean == doctest::Approx(0.8));
    CHECK(frag.multi.count == 1);
    CHECK(frag.single.mean == doctest::Approx(0.6));
    CHECK(frag.single.standard_error == doctest::Approx(0.23094010767585033).epsilon(1e-12));
}

TEST_CASE("default behavior threshold is inclusive") {
    std::vector<ConceptDistribution> items;
    items.push_back({"cookie", dist("q1", {{"round", 0.8}, {"square", 0.2}})});
    items.push_back({"cookie", dist("q2", {{"choc", 0.79}, {"plain", 0.21}})});
    items.push_back({"teapot", dist("q3", {{"steel", 0.95}, {"clay", 0.05}})});
    items.push_back({"teapot", dist("q4", {{"curved", 0.5}, {"straight", 0.5}})});

    const auto summary = detect_default_behaviors(items, 0.8);
    REQUIRE(summary.behaviors.size() == 2);
    CHECK(summary.behaviors[0].value == "round");
    CHECK(summary.behaviors[0].frequency == doctest::Approx(0.8));
    CHECK(summary.behaviors[1].value == "steel");
    CHECK(summary.stats.n_total == 4);
    CHECK(summary.stats.n_flagged == 2);
    CHECK(summary.stats.pct_total == doctest::Approx(0.5));
    // Both concepts have at least one flagged distribution.
    CHECK(summary.stats.pct_at_least_one == doctest::Approx(1.0));
}

TEST_CASE("default behavior skips invalid distributions") {
    std::vector<ConceptDistribution> items;
    ValueDistribution bad;
    bad.question_id = "q";
    bad.n_discarded = 7;
    items.push_back({"cookie", bad});
    items.push_back({"cookie", dist("q2", {{"round", 1.0}})});
    const auto summary = detect_default_behaviors(items, 0.8);
    CHECK(summary.stats.n_total == 1);
    CHECK(summary.stats.n_flagged == 1);
}

TEST_CASE("nota rate") {
    std::vector<AnswerRecord> answers;
    for (int i = 0; i < 7; ++i) answers.push_back({"img", "q", "round", "round"});
    for (int i = 0; i < 3; ++i) answers.push_back({"img", "q", "blob", kSentinel});
    CHECK(nota_rate(answers) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK_THROWS_AS(nota_rate(std::vector<AnswerRecord>{}), ValidationError);
}

TEST_CASE("total variation over union of supports") {
    const auto p = dist("q", {{"a", 0.5}, {"b", 0.5}});
    const auto q = dist("q", {{"b", 0.5}, {"c", 0.5}});
    CHECK(total_variation(p, q) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(total_variation(p, p) == doctest::Approx(0.0));
    CHECK(total_variation(q, p) == total_variation(p, q));

    // Disjoint supports are maximally far apart.
    const auto r = dist("q", {{"x", 1.0}});
    CHECK(total_variation(p, r) == doctest::Approx(1.0).epsilon(1e-12));

    ValueDistribution invalid;
    invalid.question_id = "q";
    CHECK_THROWS_AS(total_variation(p, invalid), ValidationError);
}

TEST_CASE("pearson and spearman") {
    const std::vector<double> x{1, 2, 3, 4, 5};
    const std::vector<double> y{2, 4, 6, 8, 10};
    CHECK(pearson(x, y) == doctest::Approx(1.0));
    std::vector<double> ny{-2, -4, -6, -8, -10};
    CHECK(pearson(x, ny) == doctest::Approx(-1.0));

    // Monotone but nonlinear: spearman 1, pearson < 1.
    const std::vector<double> z{1, 8, 27, 64, 125};
    CHECK(spearman(x, z) == doctest::Approx(1.0));
    CHECK(pearson(x, z) < 1.0);

    // Ties share averaged ranks.
    const std::vector<double> tx{1, 2, 2, 3};
    const std::vector<double> ty{10, 20, 20, 30};
    CHECK(spearman(tx, ty) == doctest::Approx(1.0));

    const std::vector<double> flat{3, 3, 3};
    const std::vector<double> vary{1, 2, 3};
    CHECK_THROWS_AS(pearson(flat, vary), ValidationError);
    CHECK_THROWS_AS(pearson(x, std::vector<double>{1.0}), ValidationError);
}

}  // TEST_SUITE
