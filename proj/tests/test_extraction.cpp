#include "doctest.h"

#include <sstream>

#include "grade/errors.hpp"
#include "grade/extraction.hpp"
#include "grade/util.hpp"
#include "test_helpers.hpp"

using namespace grade;
using nlohmann::json;

namespace {

ConceptSchema two_question_schema() {
    ConceptSchema schema;
    SchemaConcept c;
    c.subject = {"cookie", "cookie"};
    c.prompts.push_back({"cookie_common_0", "cookie", "a cookie on a table", PromptKind::common, 0});
    SchemaQuestion shape;
    shape.question = {"cookie_shape", "cookie", "shape", "What is the shape of the cookie?"};
    shape.support = {"cookie_shape", {"round", "square"}};
    SchemaQuestion topping;
    topping.question = {"cookie_topping", "cookie", "topping",
                        "What topping does the cookie have?"};
    topping.support = {"cookie_topping", {"frosting", "sprinkles"}};
    c.questions.push_back(shape);
    c.questions.push_back(topping);
    schema.concepts.push_back(c);
    return schema;
}

BackendProfile vqa_profile(const std::filesystem::path& fixtures) {
    BackendProfile p;
    p.role = BackendRole::vqa;
    p.kind = BackendKind::mock;
    p.endpoint = fixtures.string();
    p.model_name = "mock-vqa";
    return p;
}

std::vector<ImageRecord> make_images(const testutil::TempDir& tmp, int n) {
    std::vector<ImageRecord> images;
    for (int i = 0; i < n; ++i) {
        const auto path = tmp / ("img" + std::to_string(i) + ".png");
        // Alternate tags so the two fixture rules split the answers.
        write_file(path, std::string("tag=") + (i % 2 == 0 ? "even" : "odd") + "\n");
        ImageRecord r;
        r.prompt_id = "cookie_common_0";
        r.model_id = "m";
        r.seed = i;
        r.id = ImageRecord::make_id("m", "cookie_common_0", i);
        r.uri = path.string();
        r.content_hash = sha256_hex(read_file(path));
        images.push_back(std::move(r));
    }
    return images;
}

const char* kFixtures =
    R"({"contains": ["shape", "tag=even"], "response": {"answer": "round"}})" "\n"
    R"({"contains": ["shape", "tag=odd"], "response": {"answer": "square"}})" "\n"
    R"({"contains": ["topping", "tag=even"], "response": {"answer": "frosting"}})" "\n"
    R"({"contains": ["topping", "tag=odd"], "response": {"answer": "none of the above"}})" "\n";

}  // namespace

TEST_SUITE("extraction") {

TEST_CASE("extract_answers visits every (image, question) pair in order") {
    testutil::TempDir tmp;
    write_file(tmp / "fx.jsonl", kFixtures);
    Backend vqa(vqa_profile(tmp / "fx.jsonl"));
    const ConceptSchema schema = two_question_schema();
    const auto images = make_images(tmp, 4);

    std::vector<AnswerRecord> got;
    ExtractionOptions opt;
    opt.workers = 3;
    opt.answer_template = "{question} options: {values}";
    const auto stats =
        extract_answers(schema, images, vqa, {}, [&](const AnswerRecord& r) { got.push_back(r); },
                        opt);

    CHECK(stats.emitted == 8);
    CHECK(stats.skipped_existing == 0);
    CHECK(stats.failed == 0);
    REQUIRE(got.size() == 8);
    // Task order: image-major, question-minor — stable under parallelism.
    CHECK(got[0].image_id == "m:cookie_common_0:0");
    CHECK(got[0].question_id == "cookie_shape");
    CHECK(got[1].question_id == "cookie_topping");
    CHECK(got[2].image_id == "m:cookie_common_0:1");
    CHECK(got[0].mapped_value == "round");
    CHECK(got[1].mapped_value == "frosting");
    CHECK(got[2].mapped_value == "square");
    CHECK(got[3].mapped_value == kSentinel);

    // Re-running with a different worker count produces the same sequence.
    std::vector<AnswerRecord> again;
    opt.workers = 1;
    extract_answers(schema, images, vqa, {}, [&](const AnswerRecord& r) { again.push_back(r); },
                    opt);
    CHECK(again == got);
}

TEST_CASE("extraction resumes by skipping already-answered pairs") {
    testutil::TempDir tmp;
    write_file(tmp / "fx.jsonl", kFixtures);
    const ConceptSchema schema = two_question_schema();
    const auto images = make_images(tmp, 4);
    const auto answers_path = tmp / "answers.jsonl";

    ExtractionOptions opt;
    opt.answer_template = "{question} options: {values}";

    {
        Backend vqa(vqa_profile(tmp / "fx.jsonl"));
        const auto stats = extract_answers_to_file(schema, images, vqa, answers_path, opt);
        CHECK(stats.emitted == 8);
        CHECK(vqa.requests_served() == 8);
    }

    // Chop the file in half to simulate an interrupted run.
    const std::string full = read_file(answers_path);
    std::vector<std::string> lines;
    std::size_t start = 0;
    for (std::size_t pos; (pos = full.find('\n', start)) != std::string::npos; start = pos + 1) {
        lines.push_back(full.substr(start, pos - start));
    }
    REQUIRE(lines.size() == 8);
    std::string half;
    for (std::size_t i = 0; i < 4; ++i) half += lines[i] + "\n";
    write_file(answers_path, half);

    {
        Backend vqa(vqa_profile(tmp / "fx.jsonl"));
        const auto stats = extract_answers_to_file(schema, images, vqa, answers_path, opt);
        CHECK(stats.emitted == 4);
        CHECK(stats.skipped_existing == 4);
        CHECK(vqa.requests_served() == 4);  // only the missing pairs hit the backend
    }
    CHECK(read_file(answers_path) == full);
    CHECK(answered_keys(answers_path).size() == 8);
}

TEST_CASE("per-pair failures are tallied and logged, not fatal") {
    testutil::TempDir tmp;
    // No rule covers the topping question: those calls throw inside the pool.
    write_file(tmp / "fx.jsonl",
               R"({"contains": ["shape"], "response": {"answer": "round"}})" "\n");
    Backend vqa(vqa_profile(tmp / "fx.jsonl"));
    const ConceptSchema schema = two_question_schema();
    const auto images = make_images(tmp, 2);

    std::ostringstream log;
    ExtractionOptions opt;
    opt.answer_template = "{question}";
    std::size_t emitted = 0;
    const auto stats = extract_answers(schema, images, vqa, {},
                                       [&](const AnswerRecord&) { ++emitted; }, opt, &log);
    CHECK(stats.emitted == 2);
    CHECK(stats.failed == 2);
    CHECK(emitted == 2);
    CHECK(log.str().find("cookie_topping") != std::string::npos);
}

TEST_CASE("extraction validates its inputs") {
    testutil::TempDir tmp;
    write_file(tmp / "fx.jsonl", kFixtures);
    Backend vqa(vqa_profile(tmp / "fx.jsonl"));
    const ConceptSchema schema = two_question_schema();

    std::vector<ImageRecord> bad = make_images(tmp, 1);
    bad[0].prompt_id = "unknown_prompt";
    ExtractionOptions opt;
    opt.answer_template = "{question}";
    CHECK_THROWS_AS(extract_answers(schema, bad, vqa, {}, [](const AnswerRecord&) {}, opt),
                    ValidationError);

    const auto images = make_images(tmp, 1);
    ExtractionOptions no_template;
    CHECK_THROWS_AS(extract_answers(schema, images, vqa, {}, [](const AnswerRecord&) {},
                                    no_template),
                    ValidationError);
    ExtractionOptions zero_workers;
    zero_workers.workers = 0;
    zero_workers.answer_template = "{question}";
    CHECK_THROWS_AS(extract_answers(schema, images, vqa, {}, [](const AnswerRecord&) {},
                                    zero_workers),
                    ValidationError);
}

TEST_CASE("single-prompt estimator discards sentinels and renormalizes") {
    std::vector<AnswerRecord> answers;
    for (int i = 0; i < 6; ++i) answers.push_back({"m:p0:" + std::to_string(i), "q", "round", "round"});
    for (int i = 6; i < 8; ++i)
        answers.push_back({"m:p0:" + std::to_string(i), "q", "square", "square"});
    for (int i = 8; i < 10; ++i)
        answers.push_back({"m:p0:" + std::to_string(i), "q", "junk", kSentinel});

    const auto dist = estimate_single_prompt(answers, "q", "p0");
    CHECK(dist.valid());
    CHECK(dist.n_counted == 8);
    CHECK(dist.n_discarded == 2);
    CHECK(dist.probabilities.at("round") == doctest::Approx(0.75));
    CHECK(dist.probabilities.at("square") == doctest::Approx(0.25));
    CHECK(dist.scope == DistributionScope::single_prompt);
    CHECK(dist.prompt_id == "p0");
}

TEST_CASE("single-prompt estimator flags all-sentinel cells invalid") {
    std::vector<AnswerRecord> answers{{"m:p0:0", "q", "junk", kSentinel},
                                      {"m:p0:1", "q", "junk", kSentinel}};
    const auto dist = estimate_single_prompt(answers, "q", "p0");
    CHECK_FALSE(dist.valid());
    CHECK(dist.n_discarded == 2);
    CHECK(dist.probabilities.empty());
}

TEST_CASE("single-prompt estimator rejects mixed questions or prompts") {
    std::vector<AnswerRecord> wrong_q{{"m:p0:0", "other", "round", "round"}};
    CHECK_THROWS_AS(estimate_single_prompt(wrong_q, "q", "p0"), ValidationError);
    std::vector<AnswerRecord> wrong_p{{"m:p1:0", "q", "round", "round"}};
    CHECK_THROWS_AS(estimate_single_prompt(wrong_p, "q", "p0"), ValidationError);
}

TEST_CASE("multi-prompt estimator averages normalized conditionals") {
    ValueDistribution a;
    a.question_id = "q";
    a.scope = DistributionScope::single_prompt;
    a.prompt_id = "p0";
    a.probabilities = {{"round", 0.8}, {"square", 0.2}};
    a.n_counted = 10;
    ValueDistribution b = a;
    b.prompt_id = "p1";
    b.probabilities = {{"round", 0.6}, {"square", 0.4}};
    b.n_discarded = 3;

    const std::vector<ValueDistribution> singles{a, b};
    const auto multi = estimate_multi_prompt(singles);
    CHECK(multi.scope == DistributionScope::multi_prompt);
    CHECK(multi.probabilities.at("round") == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(multi.probabilities.at("square") == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(multi.n_counted == 20);
    CHECK(multi.n_discarded == 3);
}

TEST_CASE("multi-prompt estimator weights prompts equally, not by sample size") {
    ValueDistribution big;
    big.question_id = "q";
    big.probabilities = {{"round", 1.0}};
    big.n_counted = 1000;
    ValueDistribution small;
    small.question_id = "q";
    small.probabilities = {{"square", 1.0}};
    small.n_counted = 2;

    const std::vector<ValueDistribution> singles{big, small};
    const auto multi = estimate_multi_prompt(singles);
    CHECK(multi.probabilities.at("round") == doctest::Approx(0.5));
    CHECK(multi.probabilities.at("square") == doctest::Approx(0.5));
}

TEST_CASE("multi-prompt estimator drops invalid inputs and shrinks the divisor") {
    ValueDistribution good;
    good.question_id = "q";
    good.probabilities = {{"round", 0.5}, {"square", 0.5}};
    good.n_counted = 4;
    ValueDistribution dead;
    dead.question_id = "q";
    dead.n_discarded = 9;  // all sentinel

    const std::vector<ValueDistribution> singles{good, dead};
    const auto multi = estimate_multi_prompt(singles);
    CHECK(multi.valid());
    CHECK(multi.probabilities.at("round") == doctest::Approx(0.5));
    CHECK(multi.n_discarded == 9);  // discards still accumulate

    const std::vector<ValueDistribution> all_dead{dead};
    const auto invalid = estimate_multi_prompt(all_dead);
    CHECK_FALSE(invalid.valid());

    ValueDistribution other;
    other.question_id = "different";
    other.probabilities = {{"x", 1.0}};
    other.n_counted = 1;
    const std::vector<ValueDistribution> mixed{good, other};
    CHECK_THROWS_AS(estimate_multi_prompt(mixed), ValidationError);
    CHECK_THROWS_AS(estimate_multi_prompt(std::vector<ValueDistribution>{}), ValidationError);
}

}  // TEST_SUITE
