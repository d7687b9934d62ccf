#include "doctest.h"

#include <sstream>

#include "grade/caption_filter.hpp"
#include "grade/errors.hpp"
#include "grade/reporting.hpp"
#include "grade/util.hpp"
#include "test_helpers.hpp"

using namespace grade;
using nlohmann::json;

namespace {

std::filesystem::path write_templates(const testutil::TempDir& tmp) {
    const auto dir = tmp / "templates";
    std::filesystem::create_directories(dir);
    write_file(dir / "concept_collection.txt", "concepts n={n} exclude=[{exclude}]");
    write_file(dir / "common_prompt_generation.txt", "common {concept} n={n}");
    write_file(dir / "uncommon_prompt_generation.txt", "uncommon {concept} n={n}");
    write_file(dir / "attribute_generation.txt", "attributes {concept} n={n}");
    write_file(dir / "attribute_values_generation.txt", "values {concept} | {question} | {prompt}");
    write_file(dir / "answer_generation.txt", "answer {question} options {values}");
    write_file(dir / "caption_filtering.txt",
               "Does this caption mention a {concept} without its {attribute}? \"{caption}\"");
    write_file(dir / "synonym_check.txt", "synonyms {values}");
    return dir;
}

BackendProfile llm_profile(const std::filesystem::path& fixtures) {
    BackendProfile p;
    p.role = BackendRole::llm;
    p.kind = BackendKind::mock;
    p.endpoint = fixtures.string();
    p.model_name = "mock-llm";
    return p;
}

// The three worked classification examples for (cookie, shape).
const char* kCaptionFixtures =
    R"({"contains": ["a cookie on a table"], "response": {"answer": "yes"}})" "\n"
    R"({"contains": ["chocolate chip"], "response": {"answer": "no"}})" "\n"
    R"({"contains": ["cookie cutter"], "response": {"answer": "no"}})" "\n";

const Concept kCookie{"cookie", "cookie"};
const AttributeQuestion kShape{"cookie_shape", "cookie", "shape",
                               "What is the shape of the cookie?"};

ValueDistribution dist(std::map<std::string, double> probs) {
    ValueDistribution d;
    d.question_id = "q";
    d.scope = DistributionScope::multi_prompt;
    d.probabilities = std::move(probs);
    d.n_counted = 100;
    return d;
}

}  // namespace

TEST_SUITE("caption_filter") {

TEST_CASE("captions jsonl loads and rejects empties") {
    testutil::TempDir tmp;
    write_file(tmp / "captions.jsonl",
               R"({"caption": "a cookie on a table", "image_uri": "imgs/1.jpg"})" "\n"
               R"({"caption": "cookie cutter set"})" "\n");
    const auto records = load_captions_jsonl(tmp / "captions.jsonl");
    REQUIRE(records.size() == 2);
    CHECK(records[0].caption == "a cookie on a table");
    CHECK(records[0].image_uri == "imgs/1.jpg");
    CHECK(records[1].image_uri.empty());

    write_file(tmp / "bad.jsonl", R"({"caption": "   "})" "\n");
    CHECK_THROWS_AS(load_captions_jsonl(tmp / "bad.jsonl"), ValidationError);
}

TEST_CASE("filter_caption classifies the three reference examples") {
    testutil::TempDir tmp;
    const TemplateSet templates = TemplateSet::load(write_templates(tmp));
    write_file(tmp / "fx.jsonl", kCaptionFixtures);
    Backend llm(llm_profile(tmp / "fx.jsonl"));

    CHECK(filter_caption(llm, templates, kCookie, kShape, "a cookie on a table").verdict ==
          CaptionVerdict::keep);
    // States the attribute-adjacent look of the object.
    CHECK(filter_caption(llm, templates, kCookie, kShape, "a classic chocolate chip cookie")
              .verdict == CaptionVerdict::reject);
    // Mentions the word but not the object itself.
    CHECK(filter_caption(llm, templates, kCookie, kShape, "cookie cutter").verdict ==
          CaptionVerdict::reject);

    CHECK_THROWS_AS(filter_caption(llm, templates, kCookie, kShape, "  "), ValidationError);
}

TEST_CASE("backend failures mark captions undecided instead of throwing") {
    testutil::TempDir tmp;
    const TemplateSet templates = TemplateSet::load(write_templates(tmp));
    write_file(tmp / "fx.jsonl", kCaptionFixtures);
    Backend llm(llm_profile(tmp / "fx.jsonl"));

    const auto decision =
        filter_caption(llm, templates, kCookie, kShape, "an unmatched caption about teapots");
    CHECK(decision.verdict == CaptionVerdict::undecided);
    CHECK_FALSE(decision.reason.empty());
}

TEST_CASE("collect_filtered keeps input order, caps, and assigns seed blocks") {
    testutil::TempDir tmp;
    const TemplateSet templates = TemplateSet::load(write_templates(tmp));
    write_file(tmp / "fx.jsonl", kCaptionFixtures);
    Backend llm(llm_profile(tmp / "fx.jsonl"));

    const std::vector<CaptionRecord> captions{
        {"a cookie on a table", "d/0.jpg"},
        {"a classic chocolate chip cookie", "d/1.jpg"},
        {"a cookie on a table by the window", "d/2.jpg"},
        {"nothing to match here", "d/3.jpg"},   // undecided (no fixture rule)
        {"a cookie on a table at dawn", "d/4.jpg"},
        {"a cookie on a table at dusk", "d/5.jpg"},
    };

    std::ostringstream log;
    const auto outcome =
        collect_filtered(llm, templates, kCookie, kShape, captions, 3, 20, 2, &log);
    REQUIRE(outcome.kept.size() == 3);
    CHECK(outcome.kept[0].record.caption == "a cookie on a table");
    CHECK(outcome.kept[1].record.caption == "a cookie on a table by the window");
    CHECK(outcome.kept[2].record.caption == "a cookie on a table at dawn");
    CHECK(outcome.kept[0].input_index == 0);
    CHECK(outcome.kept[1].input_index == 2);
    CHECK(outcome.kept[2].input_index == 4);
    // 20 images per caption: sequential, non-overlapping seed blocks.
    CHECK(outcome.kept[0].seed_base == 0);
    CHECK(outcome.kept[1].seed_base == 20);
    CHECK(outcome.kept[2].seed_base == 40);
    CHECK(outcome.stats.considered == 6);
    CHECK(outcome.stats.kept == 3);
    CHECK(outcome.stats.rejected == 1);
    CHECK(outcome.stats.undecided == 1);
    CHECK(log.str().find("undecided") != std::string::npos);
}

TEST_CASE("collect_filtered stops consuming input once the cap is reached") {
    testutil::TempDir tmp;
    const TemplateSet templates = TemplateSet::load(write_templates(tmp));
    write_file(tmp / "fx.jsonl", kCaptionFixtures);
    Backend llm(llm_profile(tmp / "fx.jsonl"));

    std::vector<CaptionRecord> captions(6, CaptionRecord{"a cookie on a table", ""});
    const auto outcome = collect_filtered(llm, templates, kCookie, kShape, captions, 1, 20, 1);
    CHECK(outcome.kept.size() == 1);
    CHECK(outcome.stats.considered == 1);
    CHECK(llm.requests_served() == 1);  // later captions were never classified
}

TEST_CASE("collect_filtered tolerates running out of input below the cap") {
    testutil::TempDir tmp;
    const TemplateSet templates = TemplateSet::load(write_templates(tmp));
    write_file(tmp / "fx.jsonl", kCaptionFixtures);
    Backend llm(llm_profile(tmp / "fx.jsonl"));

    const std::vector<CaptionRecord> captions{{"a cookie on a table", ""}, {"cookie cutter", ""}};
    std::ostringstream log;
    const auto outcome =
        collect_filtered(llm, templates, kCookie, kShape, captions, 150, 20, 2, &log);
    CHECK(outcome.kept.size() == 1);
    CHECK(log.str().find("cap was 150") != std::string::npos);

    CHECK_THROWS_AS(collect_filtered(llm, templates, kCookie, kShape, captions, 0, 20, 2),
                    ValidationError);
}

TEST_CASE("filtered captions round trip through jsonl") {
    testutil::TempDir tmp;
    FilterOutcome outcome;
    outcome.kept.push_back({{"a cookie on a table", "d/0.jpg"}, 0, 0});
    outcome.kept.push_back({{"a cookie on a plate", ""}, 3, 20});
    outcome.stats.kept = 2;
    outcome.stats.considered = 2;

    save_filtered_jsonl(outcome, tmp / "filtered.jsonl");
    const auto back = load_filtered_jsonl(tmp / "filtered.jsonl");
    REQUIRE(back.kept.size() == 2);
    CHECK(back.kept[0] == outcome.kept[0]);
    CHECK(back.kept[1] == outcome.kept[1]);
}

TEST_CASE("compare_to_reference on identical distributions") {
    const auto d = dist({{"round", 0.7}, {"square", 0.2}, {"star", 0.1}});
    const auto c = compare_to_reference(d, d, 4);
    CHECK(c.entropy_model == doctest::Approx(c.entropy_dataset));
    CHECK(c.tvd == doctest::Approx(0.0));
    REQUIRE(c.pcc.has_value());
    CHECK(*c.pcc == doctest::Approx(1.0));
}

TEST_CASE("compare_to_reference on disjoint distributions") {
    const auto model = dist({{"round", 1.0}});
    const auto data = dist({{"square", 1.0}});
    const auto c = compare_to_reference(model, data, 2);
    CHECK(c.tvd == doctest::Approx(1.0));
    CHECK(c.entropy_model == doctest::Approx(0.0));
    REQUIRE(c.pcc.has_value());
    CHECK(*c.pcc == doctest::Approx(-1.0));
}

TEST_CASE("pcc is absent when a frequency vector has zero variance") {
    const auto model = dist({{"round", 0.5}, {"square", 0.5}});
    const auto data = dist({{"round", 0.5}, {"square", 0.5}});
    const auto c = compare_to_reference(model, data, 2);
    CHECK_FALSE(c.pcc.has_value());
    CHECK(c.tvd == doctest::Approx(0.0));
    CHECK(comparison_to_json(c).at("pcc").is_null());
}

TEST_CASE("comparison is symmetric in tvd and pcc") {
    const auto model = dist({{"round", 0.8}, {"square", 0.2}});
    const auto data = dist({{"round", 0.4}, {"square", 0.35}, {"star", 0.25}});
    const auto ab = compare_to_reference(model, data, 3);
    const auto ba = compare_to_reference(data, model, 3);
    CHECK(ab.tvd == doctest::Approx(ba.tvd));
    REQUIRE(ab.pcc.has_value());
    REQUIRE(ba.pcc.has_value());
    CHECK(*ab.pcc == doctest::Approx(*ba.pcc));
    CHECK(ab.entropy_model == doctest::Approx(ba.entropy_dataset));
}

TEST_CASE("comparison json renders a reference-style row at fixed precision") {
    ReferenceComparison c;
    c.entropy_model = 0.62;
    c.entropy_dataset = 0.64;
    c.pcc = 0.88;
    c.tvd = 0.10;
    const std::string text = dump_json_fixed4(comparison_to_json(c));
    CHECK(text.find("\"entropy_model\": 0.6200") != std::string::npos);
    CHECK(text.find("\"entropy_dataset\": 0.6400") != std::string::npos);
    CHECK(text.find("\"pcc\": 0.8800") != std::string::npos);
    CHECK(text.find("\"tvd\": 0.1000") != std::string::npos);
}

TEST_CASE("compare_to_reference rejects invalid inputs") {
    ValueDistribution invalid;
    invalid.question_id = "q";
    const auto ok = dist({{"round", 1.0}});
    CHECK_THROWS_AS(compare_to_reference(ok, invalid, 2), ValidationError);
}

}  // TEST_SUITE
