#include "grade/extraction.hpp"

#include <algorithm>
#include <fstream>
#include <future>

#include "grade/errors.hpp"
#include "grade/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace grade {

std::set<AnswerKey> answered_keys(const fs::path& answers_jsonl) {
    std::set<AnswerKey> keys;
    if (!fs::exists(answers_jsonl)) return keys;
    for_each_line(answers_jsonl, [&](std::string_view line, std::size_t lineno) {
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ValidationError(answers_jsonl.string() + ":" + std::to_string(lineno) + ": " +
                                  e.what());
        }
        keys.emplace(j.at("image_id").get<std::string>(),
                     j.at("question_id").get<std::string>());
    });
    return keys;
}

namespace {

struct Task {
    const ImageRecord* image;
    const AttributeQuestion* question;
    const SupportSet* support;
};

}  // namespace

ExtractionStats extract_answers(const ConceptSchema& schema, std::span<const ImageRecord> images,
                                Backend& vqa, const std::set<AnswerKey>& already,
                                const std::function<void(const AnswerRecord&)>& sink,
                                const ExtractionOptions& options, std::ostream* log) {
    if (options.workers <= 0) throw ValidationError("extraction workers must be positive");
    if (trim(options.answer_template).empty()) {
        throw ValidationError("extraction needs an answer template");
    }

    ExtractionStats stats;
    std::vector<Task> tasks;
    for (const ImageRecord& image : images) {
        const Prompt* prompt = schema.find_prompt(image.prompt_id);
        if (!prompt) {
            throw ValidationError("image " + image.id + " references unknown prompt " +
                                  image.prompt_id);
        }
        const SchemaConcept* owner = schema.find_concept(prompt->concept_id);
        if (!owner) {
            throw ValidationError("prompt " + prompt->id + " references unknown concept " +
                                  prompt->concept_id);
        }
        for (const SchemaQuestion& sq : owner->questions) {
            if (already.count({image.id, sq.question.id})) {
                ++stats.skipped_existing;
                continue;
            }
            tasks.push_back({&image, &sq.question, &sq.support});
        }
    }

    // Batches of `workers` keep the sink order equal to task order, so output
    // files are deterministic regardless of parallelism.
    const auto worker_count = static_cast<std::size_t>(options.workers);
    for (std::size_t base = 0; base < tasks.size(); base += worker_count) {
        const std::size_t batch = std::min(worker_count, tasks.size() - base);
        std::vector<std::future<AnswerRecord>> futures;
        futures.reserve(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            const Task& task = tasks[base + i];
            futures.push_back(std::async(std::launch::async, [&vqa, &options, task] {
                return vqa_answer(vqa, *task.image, *task.question, *task.support,
                                  options.answer_template);
            }));
        }
        for (std::size_t i = 0; i < batch; ++i) {
            const Task& task = tasks[base + i];
            try {
                const AnswerRecord rec = futures[i].get();
                sink(rec);
                ++stats.emitted;
            } catch (const std::exception& e) {
                ++stats.failed;
                if (log) {
                    *log << "extraction failed for image " << task.image->id << " question "
                         << task.question->id << ": " << e.what() << "\n";
                }
            }
        }
    }
    return stats;
}

ExtractionStats extract_answers_to_file(const ConceptSchema& schema,
                                        std::span<const ImageRecord> images, Backend& vqa,
                                        const fs::path& answers_path,
                                        const ExtractionOptions& options, std::ostream* log) {
    const std::set<AnswerKey> already = answered_keys(answers_path);
    if (answers_path.has_parent_path()) fs::create_directories(answers_path.parent_path());
    std::ofstream out(answers_path, std::ios::app);
    if (!out) throw IoError("cannot open for append: " + answers_path.string());
    const auto sink = [&out, &answers_path](const AnswerRecord& rec) {
        out << answer_to_json(rec).dump() << "\n";
        out.flush();
        if (!out) throw IoError("write failed: " + answers_path.string());
    };
    return extract_answers(schema, images, vqa, already, sink, options, log);
}

ValueDistribution estimate_single_prompt(std::span<const AnswerRecord> answers,
                                         const std::string& question_id,
                                         const std::string& prompt_id) {
    ValueDistribution dist;
    dist.question_id = question_id;
    dist.scope = DistributionScope::single_prompt;
    dist.prompt_id = prompt_id;

    std::map<std::string, std::size_t> counts;
    for (const AnswerRecord& a : answers) {
        if (a.question_id != question_id) {
            throw ValidationError("answer for question " + a.question_id +
                                  " mixed into estimate for " + question_id);
        }
        if (auto parsed = parse_image_id(a.image_id); parsed && parsed->prompt_id != prompt_id) {
            throw ValidationError("answer from prompt " + parsed->prompt_id +
                                  " mixed into estimate for prompt " + prompt_id);
        }
        if (is_sentinel(a.mapped_value)) {
            ++dist.n_discarded;
        } else {
            ++counts[a.mapped_value];
            ++dist.n_counted;
        }
    }
    if (dist.n_counted == 0) return dist;  // all sentinel (or empty): invalid
    for (const auto& [value, count] : counts) {
        dist.probabilities[value] =
            static_cast<double>(count) / static_cast<double>(dist.n_counted);
    }
    return dist;
}

ValueDistribution estimate_multi_prompt(std::span<const ValueDistribution> singles) {
    if (singles.empty()) {
        throw ValidationError("multi-prompt estimate needs at least one input distribution");
    }
    ValueDistribution dist;
    dist.question_id = singles.front().question_id;
    dist.scope = DistributionScope::multi_prompt;

    std::size_t n_valid = 0;
    std::map<std::string, double> sums;
    for (const ValueDistribution& s : singles) {
        if (s.question_id != dist.question_id) {
            throw ValidationError("cannot pool distributions across questions " +
                                  dist.question_id + " and " + s.question_id);
        }
        dist.n_discarded += s.n_discarded;
        if (!s.valid()) continue;  // all-sentinel prompts drop out of the mean
        ++n_valid;
        dist.n_counted += s.n_counted;
        for (const auto& [value, p] : s.probabilities) sums[value] += p;
    }
    if (n_valid == 0) {
        dist.n_counted = 0;
        return dist;
    }
    for (const auto& [value, sum] : sums) {
        dist.probabilities[value] = sum / static_cast<double>(n_valid);
    }
    return dist;
}

}  // namespace grade
