#include "grade/caption_filter.hpp"

#include <algorithm>
#include <future>
#include <set>
#include <sstream>

#include "grade/errors.hpp"
#include "grade/metrics.hpp"
#include "grade/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace grade {

const char* to_string(CaptionVerdict v) {
    switch (v) {
        case CaptionVerdict::keep: return "keep";
        case CaptionVerdict::reject: return "reject";
        case CaptionVerdict::undecided: return "undecided";
    }
    return "undecided";
}

std::vector<CaptionRecord> load_captions_jsonl(const fs::path& path) {
    std::vector<CaptionRecord> out;
    for_each_line(path, [&](std::string_view line, std::size_t lineno) {
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        CaptionRecord rec;
        rec.caption = trim(j.at("caption").get<std::string>());
        if (rec.caption.empty()) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": empty caption");
        }
        if (j.contains("image_uri")) rec.image_uri = j.at("image_uri").get<std::string>();
        out.push_back(std::move(rec));
    });
    return out;
}

CaptionDecision filter_caption(Backend& llm, const TemplateSet& templates, const Concept& subject,
                               const AttributeQuestion& question, const std::string& caption) {
    if (trim(caption).empty()) throw ValidationError("caption must be non-empty");

    StructuredRequest req;
    req.prompt_text = render_template(templates.caption_filter,
                                      {{"concept", subject.name},
                                       {"attribute", question.attribute_label},
                                       {"caption", caption}});
    req.enumerated = {"yes", "no"};
    req.enum_strict = true;

    CaptionDecision decision;
    try {
        const json reply = llm_complete(llm, req);
        const std::string verdict = normalize_value(response_answer(reply).value_or(""));
        decision.verdict = verdict == "yes" ? CaptionVerdict::keep : CaptionVerdict::reject;
        decision.reason = verdict;
    } catch (const BackendError& e) {
        decision.verdict = CaptionVerdict::undecided;
        decision.reason = e.what();
    }
    return decision;
}

FilterOutcome collect_filtered(Backend& llm, const TemplateSet& templates, const Concept& subject,
                               const AttributeQuestion& question,
                               std::span<const CaptionRecord> captions, std::size_t cap,
                               int images_per_caption, int workers, std::ostream* log) {
    if (cap == 0) throw ValidationError("caption cap must be positive");
    if (images_per_caption <= 0) throw ValidationError("images_per_caption must be positive");
    if (workers <= 0) throw ValidationError("filter workers must be positive");

    FilterOutcome outcome;
    const auto batch_size = static_cast<std::size_t>(workers);
    for (std::size_t base = 0; base < captions.size() && outcome.kept.size() < cap;
         base += batch_size) {
        const std::size_t batch = std::min(batch_size, captions.size() - base);
        std::vector<std::future<CaptionDecision>> futures;
        futures.reserve(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            const CaptionRecord& rec = captions[base + i];
            futures.push_back(std::async(std::launch::async, [&llm, &templates, &subject,
                                                              &question, &rec] {
                return filter_caption(llm, templates, subject, question, rec.caption);
            }));
        }
        // Collect in input order so the kept list never depends on timing.
        for (std::size_t i = 0; i < batch; ++i) {
            const CaptionDecision decision = futures[i].get();
            ++outcome.stats.considered;
            switch (decision.verdict) {
                case CaptionVerdict::keep:
                    if (outcome.kept.size() < cap) {
                        FilteredCaption fc;
                        fc.record = captions[base + i];
                        fc.input_index = base + i;
                        fc.seed_base = static_cast<std::int64_t>(outcome.kept.size()) *
                                       images_per_caption;
                        outcome.kept.push_back(std::move(fc));
                        ++outcome.stats.kept;
                    }
                    break;
                case CaptionVerdict::reject:
                    ++outcome.stats.rejected;
                    break;
                case CaptionVerdict::undecided:
                    ++outcome.stats.undecided;
                    if (log) {
                        *log << "caption undecided (backend failure): \""
                             << captions[base + i].caption << "\": " << decision.reason << "\n";
                    }
                    break;
            }
        }
    }
    if (outcome.kept.size() < cap && log) {
        *log << "kept " << outcome.kept.size() << " captions for " << subject.name << "/"
             << question.attribute_label << "; cap was " << cap << "\n";
    }
    return outcome;
}

void save_filtered_jsonl(const FilterOutcome& outcome, const fs::path& path) {
    std::ostringstream out;
    for (const FilteredCaption& fc : outcome.kept) {
        json j{{"caption", fc.record.caption},
               {"input_index", fc.input_index},
               {"seed_base", fc.seed_base}};
        if (!fc.record.image_uri.empty()) j["image_uri"] = fc.record.image_uri;
        out << j.dump() << "\n";
    }
    const json stats{{"considered", outcome.stats.considered},
                     {"kept", outcome.stats.kept},
                     {"rejected", outcome.stats.rejected},
                     {"undecided", outcome.stats.undecided}};
    out << json{{"stats", stats}}.dump() << "\n";
    write_file_atomic(path, out.str());
}

FilterOutcome load_filtered_jsonl(const fs::path& path) {
    FilterOutcome outcome;
    bool saw_stats = false;
    for_each_line(path, [&](std::string_view line, std::size_t lineno) {
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (j.contains("stats")) {
            const json& s = j.at("stats");
            outcome.stats.considered = s.at("considered").get<std::size_t>();
            outcome.stats.kept = s.at("kept").get<std::size_t>();
            outcome.stats.rejected = s.at("rejected").get<std::size_t>();
            outcome.stats.undecided = s.at("undecided").get<std::size_t>();
            saw_stats = true;
            return;
        }
        FilteredCaption fc;
        fc.record.caption = j.at("caption").get<std::string>();
        if (j.contains("image_uri")) fc.record.image_uri = j.at("image_uri").get<std::string>();
        fc.input_index = j.at("input_index").get<std::size_t>();
        fc.seed_base = j.at("seed_base").get<std::int64_t>();
        outcome.kept.push_back(std::move(fc));
    });
    // Files assembled by hand may lack the trailer; infer the obvious counts.
    if (!saw_stats) {
        outcome.stats.kept = outcome.kept.size();
        outcome.stats.considered = outcome.kept.size();
    }
    return outcome;
}

ReferenceComparison compare_to_reference(const ValueDistribution& model_dist,
                                         const ValueDistribution& dataset_dist,
                                         std::size_t support_cardinality) {
    if (!model_dist.valid() || !dataset_dist.valid()) {
        throw ValidationError("compare_to_reference needs two valid distributions");
    }

    ReferenceComparison c;
    c.entropy_model = normalized_entropy(model_dist, support_cardinality).entropy;
    c.entropy_dataset = normalized_entropy(dataset_dist, support_cardinality).entropy;
    c.tvd = total_variation(model_dist, dataset_dist);

    // Frequency vectors aligned over the value union, in sorted value order.
    std::set<std::string> values;
    for (const auto& [v, p] : model_dist.probabilities) values.insert(v);
    for (const auto& [v, p] : dataset_dist.probabilities) values.insert(v);
    std::vector<double> a, b;
    a.reserve(values.size());
    b.reserve(values.size());
    for (const std::string& v : values) {
        a.push_back(model_dist.probability_of(v));
        b.push_back(dataset_dist.probability_of(v));
    }
    try {
        c.pcc = pearson(a, b);
    } catch (const ValidationError&) {
        c.pcc.reset();  // zero variance or a single shared value
    }
    return c;
}

json comparison_to_json(const ReferenceComparison& c) {
    json j{{"entropy_model", c.entropy_model},
           {"entropy_dataset", c.entropy_dataset},
           {"tvd", c.tvd}};
    if (c.pcc) {
        j["pcc"] = *c.pcc;
    } else {
        j["pcc"] = nullptr;
    }
    return j;
}

}  // namespace grade
