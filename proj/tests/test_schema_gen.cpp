#include "doctest.h"

#include "grade/backends.hpp"
#include "grade/errors.hpp"
#include "grade/schema_gen.hpp"
#include "grade/util.hpp"
#include "test_helpers.hpp"

using namespace grade;
using nlohmann::json;

namespace {

// Minimal one-line templates with distinct markers the fixtures key on.
std::filesystem::path write_templates(const testutil::TempDir& tmp) {
    const auto dir = tmp / "templates";
    std::filesystem::create_directories(dir);
    write_file(dir / "concept_collection.txt", "concepts n={n} exclude=[{exclude}]");
    write_file(dir / "common_prompt_generation.txt",
               "everyday {concept} n={n} exclude=[{exclude}]");
    write_file(dir / "uncommon_prompt_generation.txt",
               "unusual {concept} n={n} exclude=[{exclude}]");
    write_file(dir / "attribute_generation.txt", "attributes {concept} n={n} exclude=[{exclude}]");
    write_file(dir / "attribute_values_generation.txt", "values {concept} | {question} | {prompt}");
    write_file(dir / "answer_generation.txt", "answer {question} options {values}");
    write_file(dir / "caption_filtering.txt", "caption {concept} {attribute} {caption}");
    write_file(dir / "synonym_check.txt", "synonyms {values}");
    return dir;
}

BackendProfile mock_llm(const std::filesystem::path& fixtures) {
    BackendProfile p;
    p.role = BackendRole::llm;
    p.kind = BackendKind::mock;
    p.endpoint = fixtures.string();
    p.model_name = "mock-llm";
    return p;
}

}  // namespace

TEST_SUITE("schema_gen") {

TEST_CASE("slugify") {
    CHECK(slugify("Chocolate  Chip!") == "chocolate_chip");
    CHECK(slugify("tea party") == "tea_party");
    CHECK(slugify("--x--") == "x");
    CHECK_THROWS_AS(slugify("!!!"), ValidationError);
}

TEST_CASE("template loading fails on a missing file") {
    testutil::TempDir tmp;
    CHECK_THROWS_AS(TemplateSet::load(tmp / "nowhere"), IoError);
    const auto dir = write_templates(tmp);
    const TemplateSet t = TemplateSet::load(dir);
    CHECK(t.concept_collection.find("{exclude}") != std::string::npos);
    CHECK(t.synonym_check.find("{values}") != std::string::npos);
}

TEST_CASE("concept generation dedupes, skips sentinels, and retries with all proposals") {
    testutil::TempDir tmp;
    const TemplateSet templates = TemplateSet::load(write_templates(tmp));
    write_file(tmp / "fx.jsonl",
               R"({"contains": ["concepts", "exclude=[]"], "response": {"concepts": ["Cookie", "cookie", "Suitcase", "none"]}})"
               "\n"
               R"({"contains": ["concepts", "suitcase, none"], "response": {"concepts": ["teapot", "bear"]}})"
               "\n");
    Backend llm(mock_llm(tmp / "fx.jsonl"));

    const auto concepts = generate_concepts(llm, templates, 4);
    REQUIRE(concepts.size() == 4);
    CHECK(concepts[0].name == "cookie");
    CHECK(concepts[1].name == "suitcase");
    CHECK(concepts[2].name == "teapot");
    CHECK(concepts[3].name == "bear");
    CHECK(concepts[0].id == "cookie");
    // Round 2 only matched because its {exclude} carried the rejected
    // sentinel too — the retry is a genuinely different request.
    CHECK(llm.requests_served() == 2);
}

TEST_CASE("concept generation shortfall terminates after bounded rounds") {
    testutil::TempDir tmp;
    const TemplateSet templates = TemplateSet::load(write_templates(tmp));
    write_file(tmp / "fx.jsonl",
               R"({"contains": ["concepts"], "response": {"concepts": ["cookie"]}})" "\n");
    Backend llm(mock_llm(tmp / "fx.jsonl"));
    try {
        generate_concepts(llm, templates, 2);
        FAIL("expected shortfall");
    } catch (const BackendError& e) {
        CHECK(e.kind == BackendError::Kind::shortfall);
    }
    CHECK(llm.requests_served() == 4);  // 1 + 3 extra rounds
}

TEST_CASE("prompt generation keeps only prompts that mention the concept and leak nothing") {
    testutil::TempDir tmp;
    const TemplateSet templates = TemplateSet::load(write_templates(tmp));
    write_file(
        tmp / "fx.jsonl",
        R"({"contains": ["everyday cookie"], "response": {"prompts": ["a cookie on a table", "a biscuit on a plate", "a red cookie on a mat", "a cookie near a window", "a cookie by the door"]}})"
        "\n");
    Backend llm(mock_llm(tmp / "fx.jsonl"));

    const Concept cookie{"cookie", "cookie"};
    const auto prompts = generate_prompts(llm, templates, cookie, PromptKind::common, 3,
                                          default_attribute_blocklist());
    REQUIRE(prompts.size() == 3);
    // "a biscuit..." lacks the concept token; "a red cookie..." leaks a color.
    CHECK(prompts[0].text == "a cookie on a table");
    CHECK(prompts[1].text == "a cookie near a window");
    CHECK(prompts[2].text == "a cookie by the door");
    CHECK(prompts[0].id == "cookie_common_0");
    CHECK(prompts[2].id == "cookie_common_2");
    CHECK(prompts[2].ordinal == 2);
    CHECK(prompts[0].kind == PromptKind::common);
}

TEST_CASE("uncommon prompts use their own template") {
    testutil::TempDir tmp;
    const TemplateSet templates = TemplateSet::load(write_templates(tmp));
    write_file(tmp / "fx.jsonl",
               R"({"contains": ["unusual cookie"], "response": {"prompts": ["a cookie in a volcano crater"]}})"
               "\n");
    Backend llm(mock_llm(tmp / "fx.jsonl"));
    const Concept cookie{"cookie", "cookie"};
    const auto prompts = generate_prompts(llm, templates, cookie, PromptKind::uncommon, 1,
                                          default_attribute_blocklist());
    REQUIRE(prompts.size() == 1);
    CHECK(prompts[0].id == "cookie_uncommon_0");
    CHECK(prompts[0].kind == PromptKind::uncommon);
}

TEST_CASE("attribute generation dedupes labels and completes question marks") {
    testutil::TempDir tmp;
    const TemplateSet templates = TemplateSet::load(write_templates(tmp));
    write_file(
        tmp / "fx.jsonl",
        R"({"contains": ["attributes cookie"], "response": {"attributes": [{"attribute_label": "Shape", "question_text": "What is the shape of the cookie"}, {"attribute_label": "shape", "question_text": "duplicate"}, {"attribute_label": "topping", "question_text": "What topping does the cookie have?"}]}})"
        "\n");
    Backend llm(mock_llm(tmp / "fx.jsonl"));

    const Concept cookie{"cookie", "cookie"};
    const auto questions = generate_attributes(llm, templates, cookie, 2);
    REQUIRE(questions.size() == 2);
    CHECK(questions[0].attribute_label == "shape");
    CHECK(questions[0].question_text == "What is the shape of the cookie?");
    CHECK(questions[0].id == "cookie_shape");
    CHECK(questions[1].attribute_label == "topping");
    CHECK(questions[1].concept_id == "cookie");
}

TEST_CASE("value support is a prompt-order-independent union with synonyms collapsed") {
    testutil::TempDir tmp;
    const TemplateSet templates = TemplateSet::load(write_templates(tmp));
    write_file(
        tmp / "fx.jsonl",
        R"({"contains": ["values cookie", "on a table"], "response": {"values": ["Frosting", "sprinkles", "none"]}})"
        "\n"
        R"({"contains": ["values cookie", "volcano"], "response": {"values": ["icing", "chocolate chips", "sprinkles"]}})"
        "\n"
        R"({"contains": ["synonyms"], "response": {"groups": [["frosting", "icing"]]}})" "\n");
    Backend llm(mock_llm(tmp / "fx.jsonl"));

    const Concept cookie{"cookie", "cookie"};
    const AttributeQuestion q{"cookie_topping", "cookie", "topping",
                              "What topping does the cookie have?"};
    std::vector<Prompt> prompts{
        {"cookie_common_0", "cookie", "a cookie on a table", PromptKind::common, 0},
        {"cookie_uncommon_0", "cookie", "a cookie in a volcano crater", PromptKind::uncommon, 0}};

    const SupportSet support = generate_value_support(llm, templates, cookie, q, prompts);
    CHECK(support.question_id == "cookie_topping");
    // "none" dropped (sentinel), "icing" collapsed into "frosting".
    CHECK(support.values == std::vector<std::string>{"chocolate chips", "frosting", "sprinkles"});

    std::swap(prompts[0], prompts[1]);
    const SupportSet swapped = generate_value_support(llm, templates, cookie, q, prompts);
    CHECK(swapped.values == support.values);
}

TEST_CASE("generate_schema regenerates prompts that leak support values") {
    testutil::TempDir tmp;
    const TemplateSet templates = TemplateSet::load(write_templates(tmp));
    write_file(
        tmp / "fx.jsonl",
        // Regeneration rule first: it matches only once the old prompt text
        // shows up inside {exclude}.
        R"({"contains": ["everyday cookie", "star sticker"], "response": {"prompts": ["a cookie on a plain plate"]}})"
        "\n"
        R"({"contains": ["concepts"], "response": {"concepts": ["cookie"]}})" "\n"
        R"({"contains": ["everyday cookie"], "response": {"prompts": ["a cookie near a star sticker"]}})"
        "\n"
        R"({"contains": ["unusual cookie"], "response": {"prompts": ["a cookie in a volcano crater"]}})"
        "\n"
        R"({"contains": ["attributes cookie"], "response": {"attributes": [{"attribute_label": "shape", "question_text": "What is the shape of the cookie?"}]}})"
        "\n"
        R"({"contains": ["values cookie", "star sticker"], "response": {"values": ["star", "round"]}})"
        "\n"
        R"({"contains": ["values cookie", "volcano"], "response": {"values": ["round"]}})" "\n"
        R"({"contains": ["synonyms"], "response": {"groups": []}})" "\n");
    Backend llm(mock_llm(tmp / "fx.jsonl"));

    GenCounts counts;
    counts.concepts = 1;
    counts.prompts_common = 1;
    counts.prompts_uncommon = 1;
    counts.attributes_per_concept = 1;
    const ConceptSchema schema = generate_schema(llm, templates, counts);

    REQUIRE(schema.concepts.size() == 1);
    const SchemaConcept& c = schema.concepts[0];
    REQUIRE(c.prompts.size() == 2);
    // The original common prompt mentioned "star", which ended up in the
    // support, so it was replaced; the support itself stands.
    CHECK(c.prompts[0].text == "a cookie on a plain plate");
    CHECK(c.prompts[0].kind == PromptKind::common);
    CHECK(c.prompts[1].text == "a cookie in a volcano crater");
    REQUIRE(c.questions.size() == 1);
    CHECK(c.questions[0].support.values == std::vector<std::string>{"round", "star"});
    CHECK(validate_schema(schema).empty());
}

TEST_CASE("generation counts default to the standard run shape") {
    const GenCounts counts;
    CHECK(counts.concepts == 100);
    CHECK(counts.prompts_common == 3);
    CHECK(counts.prompts_uncommon == 3);
    CHECK(counts.attributes_per_concept == 4);
}

}  // TEST_SUITE
