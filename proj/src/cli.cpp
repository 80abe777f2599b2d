#include "dialogkit/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dialogkit/config.hpp"
#include "dialogkit/corpus.hpp"
#include "dialogkit/decoding.hpp"
#include "dialogkit/error.hpp"
#include "dialogkit/filters.hpp"
#include "dialogkit/metrics.hpp"
#include "dialogkit/ngram_lm.hpp"
#include "dialogkit/parallel.hpp"
#include "dialogkit/quality.hpp"

namespace dialogkit {

namespace {

constexpr std::size_t kChunkSize = 4096;

struct Globals {
    std::string config_path;
    std::size_t workers = 1;
    bool strict = false;
};

struct Context {
    Globals globals;
    ToolConfig cfg;
    std::ostream* out;
    std::ostream* err;
};

class OutputFile {
public:
    OutputFile(const std::string& path, std::ostream& fallback, bool binary = false) {
        if (path.empty() || path == "-") {
            stream_ = &fallback;
            return;
        }
        file_.open(path, binary ? std::ios::binary | std::ios::out : std::ios::out);
        if (!file_) throw Error("cannot open output file: " + path);
        stream_ = &file_;
        path_ = path;
    }

    std::ostream& get() { return *stream_; }

    void close() {
        stream_->flush();
        if (!*stream_) throw Error("write failed: " + (path_.empty() ? std::string("<stdout>") : path_));
        if (file_.is_open()) file_.close();
    }

private:
    std::ofstream file_;
    std::ostream* stream_ = nullptr;
    std::string path_;
};

SessionReader open_reader(const std::string& path, const Context& ctx) {
    if (!std::filesystem::exists(path)) throw Error("cannot open input file: " + path);
    SessionReader reader(std::filesystem::path(path), ctx.globals.strict);
    std::ostream* err = ctx.err;
    reader.on_error([err, path](const RecordError& e) {
        *err << "warning: " << path << ": line " << e.line << ": " << e.message << "\n";
    });
    return reader;
}

// Feeds the corpus to `fn` in bounded chunks, preserving input order.
template <typename Fn>
void for_each_chunk(SessionReader& reader, Fn&& fn) {
    std::vector<DialogueSession> chunk;
    chunk.reserve(kChunkSize);
    while (auto s = reader.next()) {
        chunk.push_back(std::move(*s));
        if (chunk.size() == kChunkSize) {
            fn(chunk);
            chunk.clear();
        }
    }
    if (!chunk.empty()) fn(chunk);
}

std::vector<DialogueSession> read_corpus(const std::string& path, const Context& ctx) {
    auto reader = open_reader(path, ctx);
    std::vector<DialogueSession> out;
    while (auto s = reader.next()) out.push_back(std::move(*s));
    return out;
}

TokenizerConfig pipeline_tokenizer(const ToolConfig& cfg) {
    TokenizerConfig tok = cfg.tokenizer;
    tok.strip_punct_for_metrics = false;
    return tok;
}

std::shared_ptr<const NGramLM> load_lm(const std::string& path) {
    return std::make_shared<const NGramLM>(NGramLM::load(path));
}

std::shared_ptr<const RelevanceClassifier> train_classifier(const Context& ctx) {
    const auto& path = ctx.cfg.paths.classifier_train;
    if (path.empty()) return nullptr;
    const auto sessions = read_corpus(path, ctx);
    NaiveBayesOptions opts;
    opts.seed = ctx.cfg.classifier_seed;
    opts.tokenizer = pipeline_tokenizer(ctx.cfg);
    return reference_classifier(training_pairs(sessions), opts);
}

QualityScorer make_quality_scorer(const Context& ctx) {
    QualityScorer::Options opts;
    opts.tokenizer = pipeline_tokenizer(ctx.cfg);
    opts.relevance = ctx.cfg.relevance;
    opts.weights = ctx.cfg.weights;
    opts.s2_floor = ctx.cfg.s2_floor;
    if (opts.weights.beta != 0.0 && ctx.cfg.paths.classifier_train.empty()) {
        throw ConfigError("weights.beta is non-zero but paths.classifier_train is not set");
    }
    if (opts.weights.gamma != 0.0 && ctx.cfg.paths.lm.empty()) {
        throw ConfigError("weights.gamma is non-zero but paths.lm is not set");
    }
    auto lm = ctx.cfg.paths.lm.empty() ? nullptr : load_lm(ctx.cfg.paths.lm);
    auto clf = train_classifier(ctx);
    StarList stars = ctx.cfg.paths.star_list.empty() ? StarList() : StarList::load(ctx.cfg.paths.star_list);
    return QualityScorer(std::move(opts), std::move(lm), std::move(clf), std::move(stars));
}

std::unique_ptr<SequenceScorer> make_scorer(const std::string& table, const std::string& lm) {
    if (!table.empty() && !lm.empty()) throw ConfigError("give either a table scorer or a language model, not both");
    if (!table.empty()) {
        if (!std::filesystem::exists(table)) throw ConfigError("table scorer not found: " + table);
        return std::make_unique<TableScorer>(TableScorer::load(table));
    }
    if (!lm.empty()) {
        if (!std::filesystem::exists(lm)) throw ConfigError("language model not found: " + lm);
        return std::make_unique<NGramScorer>(load_lm(lm));
    }
    throw ConfigError("no scorer: pass --table or set paths.lm (--lm)");
}

// ---------------------------------------------------------------------------
// Subcommands

struct StatsArgs {
    std::string input;
};

int cmd_stats(const StatsArgs& a, Context& ctx) {
    auto reader = open_reader(a.input, ctx);
    const TokenizerConfig tok = pipeline_tokenizer(ctx.cfg);
    StatsAccumulator total(tok);
    for_each_chunk(reader, [&](const std::vector<DialogueSession>& chunk) {
        const std::size_t workers = std::max<std::size_t>(1, std::min(ctx.globals.workers, chunk.size()));
        std::vector<StatsAccumulator> parts(workers, StatsAccumulator(tok));
        const std::size_t block = (chunk.size() + workers - 1) / workers;
        parallel_for(workers, workers, [&](std::size_t w) {
            for (std::size_t i = w * block; i < std::min(chunk.size(), (w + 1) * block); ++i) parts[w].add(chunk[i]);
        });
        for (const auto& p : parts) total.merge(p);
    });
    total.add_bytes(reader.bytes_read());
    *ctx.out << stats_to_json(total.finish()) << "\n";
    return kExitOk;
}

struct TrainArgs {
    std::string input;
    std::string output;
    std::string arpa;
};

int cmd_train_lm(const TrainArgs& a, Context& ctx) {
    auto reader = open_reader(a.input, ctx);
    const NGramLM lm = train_lm(reader, ctx.cfg.lm, pipeline_tokenizer(ctx.cfg));
    if (!a.arpa.empty() && lm.smoothing() != Smoothing::kKneserNey) {
        throw ConfigError("ARPA export requires kneser-ney smoothing");
    }
    OutputFile model(a.output, *ctx.out, true);
    lm.save(model.get());
    model.close();
    if (!a.arpa.empty()) {
        OutputFile arpa(a.arpa, *ctx.out);
        lm.write_arpa(arpa.get());
        arpa.close();
    }
    *ctx.err << "trained order-" << lm.order() << " " << to_string(lm.smoothing()) << " model, vocabulary "
             << lm.vocab().size() << "\n";
    return kExitOk;
}

struct ScoreArgs {
    std::string input;
    std::string output;
    std::string summary;
};

int cmd_score(const ScoreArgs& a, Context& ctx) {
    const QualityScorer scorer = make_quality_scorer(ctx);
    auto reader = open_reader(a.input, ctx);
    OutputFile out(a.output, *ctx.out);
    QualityAggregate agg;
    for_each_chunk(reader, [&](const std::vector<DialogueSession>& chunk) {
        std::vector<QualityReport> reports(chunk.size());
        parallel_for(chunk.size(), ctx.globals.workers, [&](std::size_t i) { reports[i] = scorer.score(chunk[i]); });
        for (const auto& r : reports) {
            out.get() << report_to_json(r) << "\n";
            agg.add(r);
        }
    });
    out.close();
    if (!a.summary.empty()) {
        OutputFile summary(a.summary, *ctx.out);
        summary.get() << agg.to_json() << "\n";
        summary.close();
    }
    return kExitOk;
}

struct FilterArgs {
    std::string input;
    std::string kept;
    std::string rejected;
};

int cmd_filter(const FilterArgs& a, Context& ctx) {
    const QualityScorer scorer = make_quality_scorer(ctx);
    FilterConfig fcfg = ctx.cfg.filter;
    fcfg.tokenizer = pipeline_tokenizer(ctx.cfg);
    const FilterPipeline pipeline(std::move(fcfg), scorer);
    const auto sessions = read_corpus(a.input, ctx);
    const PipelineResult result = run_pipeline(sessions, pipeline, ctx.globals.workers);

    OutputFile kept(a.kept, *ctx.out);
    SessionWriter writer(kept.get());
    for (const auto& s : result.kept) writer.write(s);
    kept.close();
    if (!a.rejected.empty()) {
        OutputFile rej(a.rejected, *ctx.out);
        for (const auto& r : result.rejected) rej.get() << rejection_to_json(r) << "\n";
        rej.close();
    }
    std::map<std::string_view, std::size_t> by_stage;
    for (const auto& r : result.rejected) ++by_stage[to_string(r.stage)];
    *ctx.err << "kept " << result.kept.size() << " of " << sessions.size() << " sessions";
    for (const auto& [stage, n] : by_stage) *ctx.err << "; " << stage << " " << n;
    *ctx.err << "\n";
    return kExitOk;
}

struct DecodeArgs {
    std::string table;
    std::vector<std::string> context;
};

int cmd_decode(const DecodeArgs& a, Context& ctx) {
    const auto scorer = make_scorer(a.table, ctx.cfg.paths.lm);
    const TokenizerConfig tok = pipeline_tokenizer(ctx.cfg);
    TokenSeq context;
    for (std::size_t i = 0; i < a.context.size(); ++i) {
        if (i > 0) context.push_back(std::string(kTurnSeparator));
        for (const auto& t : tokenize(a.context[i], tok)) context.push_back(t);
    }
    const DecodeResult r = decode(*scorer, context, ctx.cfg.decode);
    *ctx.out << result_to_json(r, detokenize(r.tokens, tok.mode)) << "\n";
    return kExitOk;
}

struct SelfChatArgs {
    std::string openings;
    std::size_t max_utterances = 10;
    std::string output;
    std::string table;
    std::string table_b;
    std::string lm_b;
};

int cmd_selfchat(const SelfChatArgs& a, Context& ctx) {
    if (a.max_utterances < 1) throw ConfigError("--max-utterances must be >= 1");
    const auto scorer_a = make_scorer(a.table, ctx.cfg.paths.lm);
    std::unique_ptr<SequenceScorer> scorer_b;
    if (!a.table_b.empty() || !a.lm_b.empty()) scorer_b = make_scorer(a.table_b, a.lm_b);
    const SequenceScorer& b = scorer_b ? *scorer_b : *scorer_a;

    std::ifstream in(a.openings);
    if (!in) throw Error("cannot open openings file: " + a.openings);
    std::vector<Utterance> openings;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        openings.emplace_back(line);
    }
    if (openings.empty()) throw DataError("openings file has no utterances: " + a.openings);

    const TokenizerConfig tok = pipeline_tokenizer(ctx.cfg);
    std::vector<std::optional<DialogueSession>> sessions(openings.size());
    parallel_for(openings.size(), ctx.globals.workers, [&](std::size_t i) {
        sessions[i] = self_chat(*scorer_a, b, openings[i], a.max_utterances, ctx.cfg.decode, tok,
                                "selfchat-" + std::to_string(i + 1), "selfchat");
    });
    OutputFile out(a.output, *ctx.out);
    SessionWriter writer(out.get());
    for (const auto& s : sessions) writer.write(*s);
    out.close();
    return kExitOk;
}

struct EvalArgs {
    std::string hyp;
    std::string ref;
    std::string format = "text";
};

std::vector<std::string> read_texts(const std::string& path, bool jsonl) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open input file: " + path);
    std::vector<std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!jsonl) {
            out.push_back(line);
            continue;
        }
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            if (j.is_string()) {
                out.push_back(j.get<std::string>());
            } else if (j.is_object() && j.contains("text") && j["text"].is_string()) {
                out.push_back(j["text"].get<std::string>());
            } else if (j.is_object() && j.contains("dialog") && j["dialog"].is_array() && !j["dialog"].empty()) {
                out.push_back(j["dialog"].back().get<std::string>());
            } else {
                throw DataError("expected a string, {\"text\": ...} or a session");
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ": line " + std::to_string(lineno) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(path + ": line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

int cmd_eval(const EvalArgs& a, Context& ctx) {
    const bool jsonl = a.format == "jsonl";
    const auto hyps = read_texts(a.hyp, jsonl);
    const auto refs = read_texts(a.ref, jsonl);
    if (hyps.size() != refs.size()) {
        throw DataError("hypothesis and reference files differ in length (" + std::to_string(hyps.size()) +
                        " vs " + std::to_string(refs.size()) + ")");
    }
    std::vector<EvalPair> pairs(hyps.size());
    const TokenizerConfig& tok = ctx.cfg.tokenizer;
    parallel_for(pairs.size(), ctx.globals.workers, [&](std::size_t i) {
        pairs[i] = EvalPair{tokenize(hyps[i], tok), tokenize(refs[i], tok)};
    });
    *ctx.out << report_to_json(evaluate(pairs)) << "\n";
    return kExitOk;
}

std::string version_json() {
    nlohmann::ordered_json j;
    j["name"] = kToolName;
    j["version"] = kToolVersion;
    j["subcommands"] = {"stats", "train-lm", "score", "filter", "decode", "selfchat", "eval"};
    return j.dump();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const GetEnv& getenv_fn) {
    CLI::App app{"Dialogue corpus cleaning, n-gram language modelling, decoding and evaluation", kToolName};
    app.fallthrough();
    app.option_defaults()->always_capture_default();

    Context ctx{{}, {}, &out, &err};
    bool show_version = false;
    bool show_schema = false;
    app.add_option("--config", ctx.globals.config_path, "JSON config file");
    app.add_option("--workers", ctx.globals.workers, "worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--strict", ctx.globals.strict, "fail on the first malformed corpus record");
    app.add_flag("--version", show_version, "print version information as JSON");
    app.add_flag("--config-schema", show_schema, "print every config key as JSON");

    const auto& schema = config_schema();
    std::vector<std::string> flag_values(schema.size());
    std::vector<CLI::Option*> flag_opts(schema.size());
    for (std::size_t i = 0; i < schema.size(); ++i) {
        flag_opts[i] = app.add_option(schema[i].flag(), flag_values[i], schema[i].help + " [" + schema[i].path() + "]")
                           ->group("Config overrides");
    }

    StatsArgs stats_args;
    auto* stats = app.add_subcommand("stats", "corpus statistics as JSON");
    stats->add_option("--input", stats_args.input, "JSONL corpus")->required();

    TrainArgs train_args;
    auto* train = app.add_subcommand("train-lm", "train an n-gram language model");
    train->add_option("--input", train_args.input, "JSONL corpus")->required();
    train->add_option("--output", train_args.output, "binary model path")->required();
    train->add_option("--arpa", train_args.arpa, "also write an ARPA text export");

    ScoreArgs score_args;
    auto* score = app.add_subcommand("score", "per-session quality reports as JSONL");
    score->add_option("--input", score_args.input, "JSONL corpus")->required();
    score->add_option("--output", score_args.output, "report path (default stdout)");
    score->add_option("--summary", score_args.summary, "aggregate JSON path");

    FilterArgs filter_args;
    auto* filter = app.add_subcommand("filter", "run the cleaning pipeline");
    filter->add_option("--input", filter_args.input, "JSONL corpus")->required();
    filter->add_option("--kept", filter_args.kept, "kept sessions (default stdout)");
    filter->add_option("--rejected", filter_args.rejected, "rejection log (JSONL)");

    DecodeArgs decode_args;
    auto* dec = app.add_subcommand("decode", "generate one response");
    dec->add_option("--table", decode_args.table, "table scorer JSONL (otherwise paths.lm)");
    dec->add_option("--context", decode_args.context, "context utterance, repeatable");

    SelfChatArgs chat_args;
    auto* chat = app.add_subcommand("selfchat", "self-chat sessions from opening utterances");
    chat->add_option("--openings", chat_args.openings, "one opening utterance per line")->required();
    chat->add_option("--max-utterances", chat_args.max_utterances, "utterances per session");
    chat->add_option("--output", chat_args.output, "JSONL output (default stdout)");
    chat->add_option("--table", chat_args.table, "table scorer for the first speaker");
    chat->add_option("--table-b", chat_args.table_b, "table scorer for the second speaker");
    chat->add_option("--lm-b", chat_args.lm_b, "language model for the second speaker");

    EvalArgs eval_args;
    auto* ev = app.add_subcommand("eval", "F1, ROUGE-L, BLEU-4 and distinct-4");
    ev->add_option("--hyp", eval_args.hyp, "hypotheses")->required();
    ev->add_option("--ref", eval_args.ref, "references")->required();
    ev->add_option("--format", eval_args.format, "text | jsonl")->check(CLI::IsMember({"text", "jsonl"}));

    std::vector<std::string> argv_store;
    argv_store.reserve(args.size() + 1);
    argv_store.emplace_back(kToolName);
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_store) argv.push_back(s.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    if (show_version) {
        out << version_json() << "\n";
        return kExitOk;
    }
    if (show_schema) {
        out << schema_to_json().dump(2) << "\n";
        return kExitOk;
    }
    if (app.get_subcommands().empty()) {
        err << "error: a subcommand is required\n" << app.help();
        return kExitUsage;
    }

    try {
        nlohmann::json merged = default_config();
        if (!ctx.globals.config_path.empty()) merge_config(merged, load_config_file(ctx.globals.config_path), ctx.globals.config_path);
        apply_env(merged, getenv_fn);
        for (std::size_t i = 0; i < schema.size(); ++i) {
            if (flag_opts[i]->count() > 0) merged[schema[i].section][schema[i].name] = parse_value(schema[i], flag_values[i]);
        }
        ctx.cfg = build_tool_config(merged);

        if (stats->parsed()) return cmd_stats(stats_args, ctx);
        if (train->parsed()) return cmd_train_lm(train_args, ctx);
        if (score->parsed()) return cmd_score(score_args, ctx);
        if (filter->parsed()) return cmd_filter(filter_args, ctx);
        if (dec->parsed()) return cmd_decode(decode_args, ctx);
        if (chat->parsed()) return cmd_selfchat(chat_args, ctx);
        if (ev->parsed()) return cmd_eval(eval_args, ctx);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitUsage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    return run_cli(args, out, err, [](const char* name) -> const char* { return std::getenv(name); });
}

}  // namespace dialogkit
