#include "grade/schema_gen.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "grade/errors.hpp"
#include "grade/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace grade {

namespace {

std::string load_template(const fs::path& dir, const char* name) {
    const fs::path path = dir / name;
    if (!fs::exists(path)) {
        throw IoError("missing template: " + path.string());
    }
    std::string text = read_file(path);
    if (trim(text).empty()) {
        throw ValidationError("template is empty: " + path.string());
    }
    return text;
}

}  // namespace

TemplateSet TemplateSet::load(const fs::path& dir) {
    TemplateSet t;
    t.concept_collection = load_template(dir, "concept_collection.txt");
    t.common_prompts = load_template(dir, "common_prompt_generation.txt");
    t.uncommon_prompts = load_template(dir, "uncommon_prompt_generation.txt");
    t.attribute_generation = load_template(dir, "attribute_generation.txt");
    t.attribute_values = load_template(dir, "attribute_values_generation.txt");
    t.answer = load_template(dir, "answer_generation.txt");
    t.caption_filter = load_template(dir, "caption_filtering.txt");
    t.synonym_check = load_template(dir, "synonym_check.txt");
    return t;
}

const std::vector<std::string>& default_attribute_blocklist() {
    static const std::vector<std::string> words{
        // colors
        "red", "orange", "yellow", "green", "blue", "purple", "pink", "brown", "black",
        "white", "gray", "grey", "golden", "beige", "tan",
        // shapes
        "round", "circular", "square", "rectangular", "triangular", "oval", "heart-shaped",
        "star-shaped", "spherical", "flat",
        // materials
        "wooden", "metal", "metallic", "plastic", "glass", "ceramic", "leather", "stone",
        "paper", "fabric", "chocolate"};
    return words;
}

std::string slugify(std::string_view name) {
    std::string out;
    out.reserve(name.size());
    for (char c : normalize_value(name)) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            out.push_back(c);
        } else if (!out.empty() && out.back() != '_') {
            out.push_back('_');
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    if (out.empty()) throw ValidationError("cannot make an identifier from: " + std::string(name));
    return out;
}

namespace {

constexpr int kExtraRounds = 3;

std::string join_comma(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += items[i];
    }
    return out;
}

// LLM list replies arrive either as a bare JSON array or wrapped in a
// single-field object; strings containing JSON are parsed through.
json unwrap_response(const json& response, std::initializer_list<const char*> fields) {
    json r = response;
    if (r.is_string()) {
        try {
            r = json::parse(r.get<std::string>());
        } catch (const json::parse_error&) {
            throw BackendError(BackendError::Kind::schema,
                               "llm reply is not JSON: " + r.get<std::string>().substr(0, 120),
                               false);
        }
    }
    if (r.is_array()) return r;
    if (r.is_object()) {
        for (const char* f : fields) {
            if (r.contains(f) && r.at(f).is_array()) return r.at(f);
        }
    }
    throw BackendError(BackendError::Kind::schema,
                       "llm reply is not a list: " + r.dump().substr(0, 120), false);
}

std::vector<std::string> string_list(const json& response,
                                     std::initializer_list<const char*> fields) {
    std::vector<std::string> out;
    for (const json& item : unwrap_response(response, fields)) {
        if (item.is_string()) out.push_back(item.get<std::string>());
    }
    return out;
}

}  // namespace

std::vector<Concept> generate_concepts(Backend& llm, const TemplateSet& templates, int n) {
    if (n <= 0) throw ValidationError("concept count must be positive");
    std::vector<std::string> names;
    // {exclude} lists everything already proposed — accepted or not — so a
    // retry round is a different request, never a replay of the last one.
    std::vector<std::string> proposed;
    std::set<std::string> seen;
    for (int round = 0; round <= kExtraRounds && static_cast<int>(names.size()) < n; ++round) {
        const int missing = n - static_cast<int>(names.size());
        StructuredRequest req;
        req.prompt_text = render_template(templates.concept_collection,
                                          {{"n", std::to_string(missing)},
                                           {"exclude", join_comma(proposed)}});
        const json reply = llm_complete(llm, req);
        for (const std::string& raw : string_list(reply, {"concepts", "values"})) {
            const std::string norm = normalize_value(raw);
            if (norm.empty()) continue;
            if (seen.insert(norm).second) proposed.push_back(norm);
            if (is_sentinel(norm)) continue;
            if (std::find(names.begin(), names.end(), norm) == names.end()) {
                names.push_back(norm);
                if (static_cast<int>(names.size()) == n) break;
            }
        }
    }
    if (static_cast<int>(names.size()) < n) {
        throw BackendError(BackendError::Kind::shortfall,
                           "collected " + std::to_string(names.size()) + " of " +
                               std::to_string(n) + " concepts after " +
                               std::to_string(1 + kExtraRounds) + " rounds",
                           false);
    }
    std::vector<Concept> out;
    out.reserve(names.size());
    for (const std::string& name : names) out.push_back({slugify(name), name});
    return out;
}

namespace {

// A prompt is usable when it mentions the concept and leaks no blocked
// attribute word.
bool prompt_ok(const std::string& text, const Concept& subject,
               std::span<const std::string> blocklist) {
    if (!contains_token(text, subject.name)) return false;
    for (const std::string& word : blocklist) {
        if (contains_token(text, word)) return false;
    }
    return true;
}

}  // namespace

std::vector<Prompt> generate_prompts(Backend& llm, const TemplateSet& templates,
                                     const Concept& subject, PromptKind kind, int n,
                                     std::span<const std::string> blocklist) {
    if (n <= 0) throw ValidationError("prompt count must be positive");
    const std::string& tmpl =
        kind == PromptKind::common ? templates.common_prompts : templates.uncommon_prompts;

    std::vector<std::string> texts;
    std::vector<std::string> proposed;  // rejected candidates included, for {exclude}
    std::set<std::string> seen;
    for (int round = 0; round <= kExtraRounds && static_cast<int>(texts.size()) < n; ++round) {
        const int missing = n - static_cast<int>(texts.size());
        StructuredRequest req;
        req.prompt_text = render_template(tmpl, {{"concept", subject.name},
                                                 {"n", std::to_string(missing)},
                                                 {"exclude", join_comma(proposed)}});
        const json reply = llm_complete(llm, req);
        for (const std::string& raw : string_list(reply, {"prompts", "values"})) {
            const std::string text = trim(raw);
            if (text.empty()) continue;
            if (!seen.insert(normalize_value(text)).second) continue;
            proposed.push_back(text);
            if (!prompt_ok(text, subject, blocklist)) continue;
            texts.push_back(text);
            if (static_cast<int>(texts.size()) == n) break;
        }
    }
    if (static_cast<int>(texts.size()) < n) {
        throw BackendError(BackendError::Kind::shortfall,
                           "collected " + std::to_string(texts.size()) + " of " +
                               std::to_string(n) + " " + to_string(kind) + " prompts for " +
                               subject.name + " after " + std::to_string(1 + kExtraRounds) +
                               " rounds",
                           false);
    }
    std::vector<Prompt> out;
    out.reserve(texts.size());
    for (int i = 0; i < n; ++i) {
        Prompt p;
        p.concept_id = subject.id;
        p.kind = kind;
        p.ordinal = i;
        p.text = texts[static_cast<std::size_t>(i)];
        p.id = subject.id + "_" + to_string(kind) + "_" + std::to_string(i);
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<AttributeQuestion> generate_attributes(Backend& llm, const TemplateSet& templates,
                                                   const Concept& subject, int n) {
    if (n <= 0) throw ValidationError("attribute count must be positive");
    struct Pending {
        std::string label;
        std::string question;
    };
    std::vector<Pending> kept;
    std::vector<std::string> proposed;  // rejected labels included, for {exclude}
    std::set<std::string> seen;
    for (int round = 0; round <= kExtraRounds && static_cast<int>(kept.size()) < n; ++round) {
        const int missing = n - static_cast<int>(kept.size());
        StructuredRequest req;
        req.prompt_text = render_template(templates.attribute_generation,
                                          {{"concept", subject.name},
                                           {"n", std::to_string(missing)},
                                           {"exclude", join_comma(proposed)}});
        const json reply = llm_complete(llm, req);
        for (const json& item : unwrap_response(reply, {"attributes", "values"})) {
            if (!item.is_object()) continue;
            std::string label;
            for (const char* key : {"attribute_label", "attribute", "label"}) {
                if (item.contains(key) && item.at(key).is_string()) {
                    label = normalize_value(item.at(key).get<std::string>());
                    break;
                }
            }
            std::string question;
            for (const char* key : {"question_text", "question"}) {
                if (item.contains(key) && item.at(key).is_string()) {
                    question = trim(item.at(key).get<std::string>());
                    break;
                }
            }
            if (label.empty() || question.empty()) continue;
            if (question.back() != '?') question += '?';
            if (!seen.insert(label).second) continue;
            proposed.push_back(label);
            if (is_sentinel(label)) continue;
            kept.push_back({label, question});
            if (static_cast<int>(kept.size()) == n) break;
        }
    }
    if (static_cast<int>(kept.size()) < n) {
        throw BackendError(BackendError::Kind::shortfall,
                           "collected " + std::to_string(kept.size()) + " of " +
                               std::to_string(n) + " attributes for " + subject.name + " after " +
                               std::to_string(1 + kExtraRounds) + " rounds",
                           false);
    }
    std::vector<AttributeQuestion> out;
    out.reserve(kept.size());
    for (const Pending& p : kept) {
        AttributeQuestion q;
        q.concept_id = subject.id;
        q.attribute_label = p.label;
        q.question_text = p.question;
        q.id = subject.id + "_" + slugify(p.label);
        out.push_back(std::move(q));
    }
    return out;
}

SupportSet generate_value_support(Backend& llm, const TemplateSet& templates,
                                  const Concept& subject, const AttributeQuestion& question,
                                  std::span<const Prompt> prompts) {
    if (prompts.empty()) throw ValidationError("value support needs at least one prompt");

    // Union over per-prompt candidates. A set keeps the result independent of
    // prompt order and duplicates.
    std::set<std::string> support;
    for (const Prompt& prompt : prompts) {
        StructuredRequest req;
        req.prompt_text = render_template(templates.attribute_values,
                                          {{"concept", subject.name},
                                           {"question", question.question_text},
                                           {"prompt", prompt.text}});
        const json reply = llm_complete(llm, req);
        for (const std::string& raw : string_list(reply, {"values"})) {
            const std::string norm = normalize_value(raw);
            if (norm.empty() || is_sentinel(norm)) continue;
            support.insert(norm);
        }
    }
    if (support.empty()) {
        throw BackendError(BackendError::Kind::schema,
                           "empty value support for question " + question.id, false);
    }

    // Synonym pass over the sorted union: within each reported group, the
    // lexicographically smallest member stays.
    std::vector<std::string> sorted(support.begin(), support.end());
    StructuredRequest req;
    req.prompt_text =
        render_template(templates.synonym_check, {{"values", json(sorted).dump()}});
    const json reply = llm_complete(llm, req);
    for (const json& group : unwrap_response(reply, {"groups", "synonyms"})) {
        if (!group.is_array()) continue;
        std::vector<std::string> members;
        for (const json& item : group) {
            if (!item.is_string()) continue;
            const std::string norm = normalize_value(item.get<std::string>());
            if (support.count(norm)) members.push_back(norm);
        }
        if (members.size() < 2) continue;
        std::sort(members.begin(), members.end());
        for (std::size_t i = 1; i < members.size(); ++i) support.erase(members[i]);
    }

    SupportSet out;
    out.question_id = question.id;
    out.values.assign(support.begin(), support.end());
    return out;
}

ConceptSchema generate_schema(Backend& llm, const TemplateSet& templates,
                              const GenCounts& counts) {
    ConceptSchema schema;
    const std::vector<Concept> concepts = generate_concepts(llm, templates, counts.concepts);
    for (const Concept& subject : concepts) {
        SchemaConcept sc;
        sc.subject = subject;

        const std::vector<std::string>& base_blocklist = default_attribute_blocklist();
        std::vector<Prompt> common = generate_prompts(llm, templates, subject, PromptKind::common,
                                                      counts.prompts_common, base_blocklist);
        std::vector<Prompt> uncommon =
            generate_prompts(llm, templates, subject, PromptKind::uncommon,
                             counts.prompts_uncommon, base_blocklist);
        sc.prompts = common;
        sc.prompts.insert(sc.prompts.end(), uncommon.begin(), uncommon.end());

        const std::vector<AttributeQuestion> questions =
            generate_attributes(llm, templates, subject, counts.attributes_per_concept);
        for (const AttributeQuestion& q : questions) {
            sc.questions.push_back({q, generate_value_support(llm, templates, subject, q,
                                                              sc.prompts)});
        }

        // Leak check against the now-final supports: any prompt that mentions
        // a support value gets its whole kind regenerated with the support
        // values added to the blocklist. Supports themselves stay fixed; they
        // capture concept-level attribute values, and per-prompt conditioning
        // only ever widened the union.
        std::vector<std::string> enriched(base_blocklist);
        for (const SchemaQuestion& sq : sc.questions) {
            enriched.insert(enriched.end(), sq.support.values.begin(), sq.support.values.end());
        }
        for (PromptKind kind : {PromptKind::common, PromptKind::uncommon}) {
            const bool leaked = std::any_of(
                sc.prompts.begin(), sc.prompts.end(), [&](const Prompt& p) {
                    return p.kind == kind && !prompt_ok(p.text, subject, enriched);
                });
            if (!leaked) continue;
            const int kind_count =
                kind == PromptKind::common ? counts.prompts_common : counts.prompts_uncommon;
            std::vector<Prompt> replacement =
                generate_prompts(llm, templates, subject, kind, kind_count, enriched);
            std::erase_if(sc.prompts, [&](const Prompt& p) { return p.kind == kind; });
            sc.prompts.insert(sc.prompts.end(), replacement.begin(), replacement.end());
        }
        std::stable_sort(sc.prompts.begin(), sc.prompts.end(),
                         [](const Prompt& a, const Prompt& b) {
                             if (a.kind != b.kind) return a.kind == PromptKind::common;
                             return a.ordinal < b.ordinal;
                         });

        schema.concepts.push_back(std::move(sc));
    }

    const std::vector<Violation> violations = validate_schema(schema);
    if (!violations.empty()) {
        std::ostringstream msg;
        msg << "generated schema is invalid:";
        for (const Violation& v : violations) msg << "\n  " << v;
        throw ValidationError(msg.str());
    }
    return schema;
}

}  // namespace grade
