#include "grade/cli.hpp"

#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"

#include "grade/caption_filter.hpp"
#include "grade/config.hpp"
#include "grade/errors.hpp"
#include "grade/extraction.hpp"
#include "grade/pipeline.hpp"
#include "grade/reporting.hpp"
#include "grade/schema_gen.hpp"
#include "grade/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace grade {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitBackend = 2;
constexpr int kExitUsage = 64;

// --config is applied before CLI11 parses, so explicit flags override the
// file, which overrides the built-in defaults.
RunConfig preload_config(const std::vector<std::string>& args) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw ValidationError("--config needs a file path");
            return load_config_file(args[i + 1]);
        }
        if (args[i].rfind("--config=", 0) == 0) {
            return load_config_file(args[i].substr(9));
        }
    }
    return RunConfig{};
}

ConceptSchema load_schema_checked(const fs::path& path) {
    const ConceptSchema schema = load_schema(path);
    const std::vector<Violation> violations = validate_schema(schema);
    if (!violations.empty()) {
        std::ostringstream msg;
        msg << path.string() << " is not a valid schema:";
        for (const Violation& v : violations) msg << "\n  " << v;
        throw ValidationError(msg.str());
    }
    return schema;
}

void save_schema_with_config(const ConceptSchema& schema, const json& config,
                             const fs::path& path) {
    json doc = schema_to_json(schema);
    doc["config"] = config;
    write_file_atomic(path, doc.dump(2) + "\n");
}

// Shared by `score` and `report`: CSV table plus score histograms.
void emit_score_artifacts(std::span<const ModelReport> reports, const json& config,
                          const fs::path& out_dir) {
    emit_report_csv(reports, config, out_dir / "report.csv");

    std::map<std::string, std::vector<double>> per_question;
    for (const ModelReport& r : reports) {
        std::vector<double> all;
        for (const GradeScore& s : r.per_distribution_scores) {
            per_question[s.question_id].push_back(s.entropy);
            all.push_back(s.entropy);
        }
        if (!all.empty()) {
            emit_histogram_svg(all, "GRADE scores: " + r.model_id, config,
                               out_dir / ("hist_model_" + r.model_id + ".svg"));
        }
    }
    for (const auto& [question_id, scores] : per_question) {
        emit_histogram_svg(scores, question_id, config,
                           out_dir / ("hist_" + question_id + ".svg"));
    }
}

int dispatch(std::vector<std::string> args) {
    RunConfig cfg = preload_config(args);

    CLI::App app{"Reference-free diversity evaluation for text-to-image models"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (flags override it)");
    // Accept --config after the subcommand name too; preload_config already
    // consumed its value either way.
    const auto add_config_opt = [&config_path](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file (flags override it)");
    };

    // schema ------------------------------------------------------------
    auto* schema_cmd = app.add_subcommand(
        "schema", "Generate concepts, prompts, attribute questions, and value supports");
    std::string schema_out = "schema.json";
    schema_cmd->add_option("--out", schema_out, "Output schema path");
    schema_cmd->add_option("--concepts", cfg.concepts, "Number of concepts");
    schema_cmd->add_option("--prompts-common", cfg.prompts_common, "Common prompts per concept");
    schema_cmd->add_option("--prompts-uncommon", cfg.prompts_uncommon,
                           "Uncommon prompts per concept");
    schema_cmd->add_option("--attributes", cfg.attributes_per_concept,
                           "Attribute questions per concept");
    schema_cmd->add_option("--templates", cfg.templates_dir, "Template directory");
    schema_cmd->add_option("--cache-dir", cfg.cache_dir, "Backend response cache root");
    add_config_opt(schema_cmd);

    // generate ----------------------------------------------------------
    auto* generate_cmd =
        app.add_subcommand("generate", "Generate images for every prompt in the schema");
    std::string generate_schema_path;
    std::string generate_manifest = "manifest.jsonl";
    generate_cmd->add_option("--schema", generate_schema_path, "Schema path")->required();
    generate_cmd->add_option("--out-manifest", generate_manifest, "Image manifest output");
    generate_cmd->add_option("--images-per-prompt", cfg.images_per_prompt, "Images per prompt");
    generate_cmd->add_option("--base-seed", cfg.base_seed, "First seed per prompt");
    generate_cmd->add_option("--runs-dir", cfg.runs_dir, "Image output root");
    generate_cmd->add_option("--cache-dir", cfg.cache_dir, "Backend response cache root");
    add_config_opt(generate_cmd);

    // extract -----------------------------------------------------------
    auto* extract_cmd =
        app.add_subcommand("extract", "Ask the VQA backend every question about every image");
    std::string extract_schema_path, extract_manifest, extract_answers = "answers.jsonl";
    extract_cmd->add_option("--schema", extract_schema_path, "Schema path")->required();
    extract_cmd->add_option("--manifest", extract_manifest, "Image manifest")->required();
    extract_cmd->add_option("--answers", extract_answers, "Answers JSONL (appended, resumable)");
    extract_cmd->add_option("--workers", cfg.workers, "Parallel backend calls");
    extract_cmd->add_option("--templates", cfg.templates_dir, "Template directory");
    extract_cmd->add_option("--cache-dir", cfg.cache_dir, "Backend response cache root");
    add_config_opt(extract_cmd);

    // score ---------------------------------------------------------------
    auto* score_cmd =
        app.add_subcommand("score", "Estimate distributions and compute GRADE scores");
    std::string score_answers_path, score_schema_path, score_model, score_out_dir = ".";
    score_cmd->add_option("--answers", score_answers_path, "Answers JSONL")->required();
    score_cmd->add_option("--schema", score_schema_path, "Schema path")->required();
    score_cmd->add_option("--tau", cfg.tau, "Default-behavior threshold");
    score_cmd->add_option("--model", score_model, "Model id (default: inferred from answers)");
    score_cmd->add_option("--out-dir", score_out_dir, "Output directory");
    add_config_opt(score_cmd);

    // compare -------------------------------------------------------------
    auto* compare_cmd =
        app.add_subcommand("compare", "Permutation tests (and TVD matrix) across models");
    std::vector<std::string> compare_reports_paths, compare_dists_paths;
    std::string compare_out_dir = ".";
    compare_cmd->add_option("--reports", compare_reports_paths, "report.json files")
        ->required()
        ->expected(-1);
    compare_cmd->add_option("--distributions", compare_dists_paths,
                            "distributions.json files (enables the TVD matrix)")
        ->expected(-1);
    compare_cmd->add_option("--permutations", cfg.permutations, "Monte-Carlo permutations");
    compare_cmd->add_option("--seed", cfg.seed, "Statistics seed");
    compare_cmd->add_option("--alpha", cfg.alpha, "Significance level");
    compare_cmd->add_option("--out-dir", compare_out_dir, "Output directory");
    add_config_opt(compare_cmd);

    // filter-captions -------------------------------------------------------
    auto* filter_cmd = app.add_subcommand(
        "filter-captions", "Keep captions that leave the queried attribute unstated");
    std::string filter_captions_path, filter_schema_path, filter_concept, filter_question;
    std::string filter_out = "filtered.jsonl";
    filter_cmd->add_option("--captions", filter_captions_path, "Captions JSONL")->required();
    filter_cmd->add_option("--schema", filter_schema_path, "Schema path")->required();
    filter_cmd->add_option("--concept", filter_concept, "Concept id")->required();
    filter_cmd->add_option("--question", filter_question, "Question id")->required();
    filter_cmd->add_option("--cap", cfg.caption_cap, "Maximum captions to keep");
    filter_cmd->add_option("--images-per-caption", cfg.images_per_caption,
                           "Generated images per kept caption (seed blocks)");
    filter_cmd->add_option("--workers", cfg.workers, "Parallel backend calls");
    filter_cmd->add_option("--out", filter_out, "Filtered captions output");
    filter_cmd->add_option("--templates", cfg.templates_dir, "Template directory");
    filter_cmd->add_option("--cache-dir", cfg.cache_dir, "Backend response cache root");
    add_config_opt(filter_cmd);

    // report ----------------------------------------------------------------
    auto* report_cmd =
        app.add_subcommand("report", "Re-emit CSV and histograms from an existing report.json");
    std::string report_in, report_out_dir = ".";
    report_cmd->add_option("--report", report_in, "report.json path")->required();
    report_cmd->add_option("--out-dir", report_out_dir, "Output directory");
    add_config_opt(report_cmd);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }
    cfg.validate();
    const json resolved = cfg.to_json();

    if (app.got_subcommand(schema_cmd)) {
        const TemplateSet templates = TemplateSet::load(cfg.templates_dir);
        Backend llm(backend_profile(cfg, BackendRole::llm));
        GenCounts counts;
        counts.concepts = cfg.concepts;
        counts.prompts_common = cfg.prompts_common;
        counts.prompts_uncommon = cfg.prompts_uncommon;
        counts.attributes_per_concept = cfg.attributes_per_concept;
        const ConceptSchema schema = generate_schema(llm, templates, counts);
        save_schema_with_config(schema, resolved, schema_out);
        std::cout << "wrote " << schema_out << " (" << schema.concepts.size() << " concepts)\n";
        return kExitOk;
    }

    if (app.got_subcommand(generate_cmd)) {
        const ConceptSchema schema = load_schema_checked(generate_schema_path);
        Backend t2i(backend_profile(cfg, BackendRole::t2i));
        std::vector<ImageRecord> all;
        for (const SchemaConcept& sc : schema.concepts) {
            for (const Prompt& prompt : sc.prompts) {
                std::vector<ImageRecord> records = generate_images(
                    t2i, prompt, cfg.images_per_prompt, cfg.base_seed, cfg.runs_dir);
                all.insert(all.end(), records.begin(), records.end());
            }
        }
        save_manifest_jsonl(all, generate_manifest);
        std::cout << "wrote " << generate_manifest << " (" << all.size() << " images)\n";
        return kExitOk;
    }

    if (app.got_subcommand(extract_cmd)) {
        const ConceptSchema schema = load_schema_checked(extract_schema_path);
        const std::vector<ImageRecord> images = load_manifest_jsonl(extract_manifest);
        const TemplateSet templates = TemplateSet::load(cfg.templates_dir);
        Backend vqa(backend_profile(cfg, BackendRole::vqa));
        ExtractionOptions options;
        options.workers = cfg.workers;
        options.answer_template = templates.answer;
        const ExtractionStats stats =
            extract_answers_to_file(schema, images, vqa, extract_answers, options, &std::cerr);
        std::cout << "answers: " << stats.emitted << " new, " << stats.skipped_existing
                  << " already present, " << stats.failed << " failed (backend calls: "
                  << vqa.requests_served() << ")\n";
        return stats.failed == 0 ? kExitOk : kExitBackend;
    }

    if (app.got_subcommand(score_cmd)) {
        const ConceptSchema schema = load_schema_checked(score_schema_path);
        const std::vector<AnswerRecord> answers = load_answers_jsonl(score_answers_path);
        const ScoreOutcome outcome = score_answers(schema, answers, score_model, cfg.tau);
        const fs::path out_dir = score_out_dir;
        fs::create_directories(out_dir);
        const ModelReport& report = outcome.report;
        emit_report_json({&report, 1}, resolved, out_dir / "report.json");
        save_distributions_json(outcome.distributions, report.model_id, resolved,
                                out_dir / "distributions.json");
        emit_score_artifacts({&report, 1}, resolved, out_dir);
        std::cout << "model " << report.model_id << ": mean GRADE (multi) "
                  << format_fixed4(report.mean_multi) << ", (single) "
                  << format_fixed4(report.mean_single) << ", sentinel rate "
                  << format_fixed4(report.nota_rate) << "\n";
        return kExitOk;
    }

    if (app.got_subcommand(compare_cmd)) {
        std::vector<ModelReport> reports;
        for (const std::string& path : compare_reports_paths) {
            const json doc = json::parse(read_file(path));
            for (const json& m : doc.at("models")) reports.push_back(report_from_json(m));
        }
        PermutationOptions options;
        options.n_permutations = cfg.permutations;
        options.alpha = cfg.alpha;
        options.seed = cfg.seed;
        const std::vector<PairComparison> pairs = compare_reports(reports, options);
        const fs::path out_dir = compare_out_dir;
        fs::create_directories(out_dir);
        write_file_atomic(out_dir / "compare.json",
                          comparisons_to_json(pairs, resolved).dump(2) + "\n");
        std::cout << "wrote compare.json (" << pairs.size() << " pairs)\n";

        if (!compare_dists_paths.empty()) {
            std::map<std::string, std::vector<ValueDistribution>> by_model;
            for (const std::string& path : compare_dists_paths) {
                DistributionsDoc doc = load_distributions_json(path);
                by_model[doc.model] = std::move(doc.distributions);
            }
            std::vector<std::string> models;
            std::vector<std::vector<ValueDistribution>> dists;
            for (const ModelReport& r : reports) {
                const auto it = by_model.find(r.model_id);
                if (it == by_model.end()) {
                    throw ValidationError("no distributions file for model " + r.model_id);
                }
                models.push_back(r.model_id);
                dists.push_back(it->second);
            }
            const auto pairs_tvd = mean_tvd_pairs(models, dists);
            emit_pairwise_matrix(models, pairs_tvd, MatrixKind::tvd, resolved,
                                 out_dir / "tvd_matrix.json", out_dir / "tvd_matrix.csv");
            std::cout << "wrote tvd_matrix.{json,csv}\n";
        }
        return kExitOk;
    }

    if (app.got_subcommand(filter_cmd)) {
        const ConceptSchema schema = load_schema_checked(filter_schema_path);
        const SchemaConcept* sc = schema.find_concept(filter_concept);
        if (!sc) throw ValidationError("schema has no concept " + filter_concept);
        const SchemaQuestion* sq = schema.find_question(filter_question);
        if (!sq || sq->question.concept_id != filter_concept) {
            throw ValidationError("concept " + filter_concept + " has no question " +
                                  filter_question);
        }
        const std::vector<CaptionRecord> captions = load_captions_jsonl(filter_captions_path);
        const TemplateSet templates = TemplateSet::load(cfg.templates_dir);
        Backend llm(backend_profile(cfg, BackendRole::llm));
        const FilterOutcome outcome =
            collect_filtered(llm, templates, sc->subject, sq->question, captions,
                             cfg.caption_cap, cfg.images_per_caption, cfg.workers, &std::cerr);
        save_filtered_jsonl(outcome, filter_out);
        std::cout << "kept " << outcome.stats.kept << " of " << outcome.stats.considered
                  << " captions (" << outcome.stats.rejected << " rejected, "
                  << outcome.stats.undecided << " undecided)\n";
        return kExitOk;
    }

    if (app.got_subcommand(report_cmd)) {
        const json doc = json::parse(read_file(report_in));
        std::vector<ModelReport> reports;
        for (const json& m : doc.at("models")) reports.push_back(report_from_json(m));
        if (reports.empty()) throw ValidationError(report_in + " holds no model reports");
        const json config = doc.contains("config") ? doc.at("config") : resolved;
        const fs::path out_dir = report_out_dir;
        fs::create_directories(out_dir);
        emit_score_artifacts(reports, config, out_dir);
        std::cout << "wrote report.csv and histograms for " << reports.size() << " model(s)\n";
        return kExitOk;
    }

    throw ValidationError("no subcommand dispatched");  // unreachable
}

}  // namespace

int run_cli(std::vector<std::string> args) {
    try {
        return dispatch(std::move(args));
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const GradeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    args.reserve(static_cast<std::size_t>(argc > 0 ? argc - 1 : 0));
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(std::move(args));
}

}  // namespace grade
