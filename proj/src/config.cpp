#include "dialogkit/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "dialogkit/error.hpp"

namespace dialogkit {

using nlohmann::json;

std::string ConfigKey::flag() const {
    // Single-letter names are qualified by their section ("--lm-k").
    std::string out = "--" + (name.size() == 1 ? section + "_" + name : name);
    for (char& c : out) {
        if (c == '_') c = '-';
    }
    return out;
}

std::string ConfigKey::env_var() const {
    std::string out(kEnvPrefix);
    for (char c : section + "_" + name) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    return out;
}

const std::vector<ConfigKey>& config_schema() {
    const double neg_inf = -std::numeric_limits<double>::infinity();
    static const std::vector<ConfigKey> schema = {
        {"tokenizer", "mode", ValueType::kString, "char", "char | whitespace | external-vocab"},
        {"tokenizer", "lowercase", ValueType::kBool, false, "ASCII lowercase before tokenizing"},
        {"tokenizer", "strip_punct_for_metrics", ValueType::kBool, false, "drop punctuation tokens (eval only)"},

        {"weights", "alpha", ValueType::kNumber, 1.0, "weight of S1 (lexical relevance)"},
        {"weights", "beta", ValueType::kNumber, 0.0, "weight of S2 (classifier log-probability)"},
        {"weights", "gamma", ValueType::kNumber, 0.0, "weight of S3 (fluency)"},

        {"relevance", "tau", ValueType::kNumber, 1.0, "distance exponent for S1"},
        {"relevance", "dedupe_pairs", ValueType::kBool, false, "count each token type once per utterance"},
        {"relevance", "s2_floor", ValueType::kNumber, kDefaultS2Floor, "lower clamp for S2"},
        {"relevance", "classifier_seed", ValueType::kCount, 0, "seed for reference classifier negatives"},

        {"filter", "excluded_sources", ValueType::kStringList, json::array(), "sources dropped at the dataset stage"},
        {"filter", "max_responses_per_context", ValueType::kOptionalCount, 10, "K; null means unlimited"},
        {"filter", "blacklist", ValueType::kStringList, json::array(), "substrings that reject a session"},
        {"filter", "punct_run_max", ValueType::kCount, 3, "longest allowed run of one punctuation mark"},
        {"filter", "thresholds", ValueType::kNumberMap, json::object(), "per-source combined-score thresholds"},
        {"filter", "default_threshold", ValueType::kOptionalNumber, neg_inf, "threshold for unlisted sources"},

        {"decode", "strategy", ValueType::kString, "beam+sampling", "greedy | sampling | beam | beam+sampling"},
        {"decode", "temperature", ValueType::kNumber, 0.9, "sampling temperature T > 0"},
        {"decode", "top_p", ValueType::kNumber, 0.9, "nucleus mass in (0, 1]"},
        {"decode", "beam_size", ValueType::kCount, 4, "beam width"},
        {"decode", "length_penalty", ValueType::kNumber, 1.6, "alpha in score / length^alpha"},
        {"decode", "min_len", ValueType::kCount, 0, "minimum response length"},
        {"decode", "no_repeat_n", ValueType::kCount, 4, "ban repeated n-grams; 0 disables"},
        {"decode", "max_len", ValueType::kCount, 128, "maximum response length"},
        {"decode", "max_context_len", ValueType::kCount, 128, "context tokens kept (most recent)"},
        {"decode", "seed", ValueType::kCount, 0, "sampling seed"},

        {"lm", "order", ValueType::kCount, 3, "n-gram order"},
        {"lm", "smoothing", ValueType::kString, "kneser-ney", "kneser-ney | add-k"},
        {"lm", "k", ValueType::kNumber, 0.1, "add-k constant"},
        {"lm", "min_count", ValueType::kCount, 1, "minimum frequency for vocabulary"},

        {"paths", "lm", ValueType::kString, "", "trained language model for S3 / decoding"},
        {"paths", "blacklist_file", ValueType::kString, "", "extra blacklist terms, one per line"},
        {"paths", "star_list", ValueType::kString, "", "names for the entertainment flag, one per line"},
        {"paths", "char_map", ValueType::kString, "", "character mapping table"},
        {"paths", "classifier_train", ValueType::kString, "", "corpus used to train the reference classifier"},
        {"paths", "vocab", ValueType::kString, "", "vocabulary for the external-vocab tokenizer"},
    };
    return schema;
}

json default_config() {
    json cfg = json::object();
    for (const auto& key : config_schema()) cfg[key.section][key.name] = key.default_value;
    return cfg;
}

namespace {

json printable(const json& v) {
    if (v.is_number_float() && !std::isfinite(v.get<double>())) return v.get<double>() < 0 ? "-inf" : "inf";
    return v;
}

std::string_view type_name(ValueType t) {
    switch (t) {
        case ValueType::kBool: return "bool";
        case ValueType::kCount: return "count";
        case ValueType::kOptionalCount: return "count|null";
        case ValueType::kNumber: return "number";
        case ValueType::kOptionalNumber: return "number|null";
        case ValueType::kString: return "string";
        case ValueType::kStringList: return "string[]";
        case ValueType::kNumberMap: return "{string: number}";
    }
    return "string";
}

const ConfigKey* find_key(std::string_view section, std::string_view name) {
    for (const auto& key : config_schema()) {
        if (key.section == section && key.name == name) return &key;
    }
    return nullptr;
}

double parse_double_text(std::string_view text, const ConfigKey& key) {
    std::string s(text);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || std::isnan(v)) {
        throw ConfigError(key.path() + ": expected a number, got \"" + s + "\"");
    }
    return v;
}

// Checks a JSON value against the key type and returns its canonical form.
json coerce(const ConfigKey& key, const json& v) {
    auto bad = [&]() -> json {
        throw ConfigError(key.path() + ": expected " + std::string(type_name(key.type)) + ", got " + v.dump());
    };
    switch (key.type) {
        case ValueType::kBool:
            return v.is_boolean() ? v : bad();
        case ValueType::kOptionalCount:
            if (v.is_null()) return v;
            [[fallthrough]];
        case ValueType::kCount:
            if (v.is_number_unsigned()) return v;
            if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return json(v.get<std::uint64_t>());
            return bad();
        case ValueType::kOptionalNumber:
            if (v.is_null()) return v;
            [[fallthrough]];
        case ValueType::kNumber:
            if (v.is_number()) return json(v.get<double>());
            if (v.is_string()) return json(parse_double_text(v.get<std::string>(), key));
            return bad();
        case ValueType::kString:
            return v.is_string() ? v : bad();
        case ValueType::kStringList:
            if (!v.is_array()) return bad();
            for (const auto& e : v) {
                if (!e.is_string()) return bad();
            }
            return v;
        case ValueType::kNumberMap: {
            if (!v.is_object()) return bad();
            json out = json::object();
            for (const auto& [k, e] : v.items()) {
                if (e.is_number()) {
                    out[k] = e.get<double>();
                } else if (e.is_string()) {
                    out[k] = parse_double_text(e.get<std::string>(), key);
                } else {
                    return bad();
                }
            }
            return out;
        }
    }
    return bad();
}

std::vector<std::string> split_list(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

json schema_to_json() {
    json out = json::array();
    for (const auto& key : config_schema()) {
        nlohmann::ordered_json entry;
        out.push_back({{"key", key.path()},
                       {"type", type_name(key.type)},
                       {"default", printable(key.default_value)},
                       {"flag", key.flag()},
                       {"env", key.env_var()},
                       {"help", key.help}});
    }
    return out;
}

void merge_config(json& base, const json& overrides, std::string_view origin) {
    if (!overrides.is_object()) throw ConfigError(std::string(origin) + ": config must be a JSON object");
    for (const auto& [section, body] : overrides.items()) {
        if (!base.contains(section)) throw ConfigError(std::string(origin) + ": unknown config section \"" + section + "\"");
        if (!body.is_object()) throw ConfigError(std::string(origin) + ": section \"" + section + "\" must be an object");
        for (const auto& [name, value] : body.items()) {
            const ConfigKey* key = find_key(section, name);
            if (!key) throw ConfigError(std::string(origin) + ": unknown config key \"" + section + "." + name + "\"");
            base[section][name] = coerce(*key, value);
        }
    }
}

json load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("invalid config file " + path.string() + ": " + e.what());
    }
    json cfg = default_config();
    merge_config(cfg, doc, path.string());
    return doc;
}

json parse_value(const ConfigKey& key, std::string_view text) {
    const std::string s(text);
    switch (key.type) {
        case ValueType::kBool:
            if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
            if (s == "false" || s == "0" || s == "no" || s == "off") return false;
            throw ConfigError(key.path() + ": expected true/false, got \"" + s + "\"");
        case ValueType::kOptionalCount:
            if (s == "null" || s == "none" || s == "unlimited" || s == "inf") return nullptr;
            [[fallthrough]];
        case ValueType::kCount: {
            if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
                throw ConfigError(key.path() + ": expected a non-negative integer, got \"" + s + "\"");
            }
            try {
                return json(static_cast<std::uint64_t>(std::stoull(s)));
            } catch (const std::exception&) {
                throw ConfigError(key.path() + ": integer out of range: \"" + s + "\"");
            }
        }
        case ValueType::kOptionalNumber:
            if (s == "null" || s == "none") return nullptr;
            [[fallthrough]];
        case ValueType::kNumber:
            return parse_double_text(s, key);
        case ValueType::kString:
            return s;
        case ValueType::kStringList: {
            if (!s.empty() && s.front() == '[') {
                try {
                    return coerce(key, json::parse(s));
                } catch (const json::parse_error&) {
                    throw ConfigError(key.path() + ": invalid JSON list");
                }
            }
            return split_list(s);
        }
        case ValueType::kNumberMap: {
            if (!s.empty() && s.front() == '{') {
                try {
                    return coerce(key, json::parse(s));
                } catch (const json::parse_error&) {
                    throw ConfigError(key.path() + ": invalid JSON object");
                }
            }
            json out = json::object();
            for (const auto& item : split_list(s)) {
                auto eq = item.find('=');
                if (eq == std::string::npos) throw ConfigError(key.path() + ": expected source=value, got \"" + item + "\"");
                out[item.substr(0, eq)] = parse_double_text(item.substr(eq + 1), key);
            }
            return out;
        }
    }
    return s;
}

void apply_env(json& cfg, const std::function<const char*(const char*)>& getenv_fn) {
    for (const auto& key : config_schema()) {
        const std::string var = key.env_var();
        if (const char* v = getenv_fn(var.c_str())) cfg[key.section][key.name] = parse_value(key, v);
    }
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path, std::string_view what) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + std::string(what) + ": " + path.string());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

void require_exists(const std::string& path, std::string_view what) {
    if (!path.empty() && !std::filesystem::exists(path)) {
        throw ConfigError(std::string(what) + " not found: " + path);
    }
}

}  // namespace

ToolConfig build_tool_config(const json& cfg) {
    ToolConfig out;
    auto get = [&](const char* section, const char* name) -> const json& { return cfg.at(section).at(name); };

    const auto& p = cfg.at("paths");
    out.paths = {p.at("lm").get<std::string>(),        p.at("blacklist_file").get<std::string>(),
                 p.at("star_list").get<std::string>(), p.at("char_map").get<std::string>(),
                 p.at("classifier_train").get<std::string>(), p.at("vocab").get<std::string>()};
    require_exists(out.paths.lm, "language model");
    require_exists(out.paths.blacklist_file, "blacklist file");
    require_exists(out.paths.star_list, "star list");
    require_exists(out.paths.char_map, "character map");
    require_exists(out.paths.classifier_train, "classifier training corpus");
    require_exists(out.paths.vocab, "vocabulary");

    const auto mode = parse_tokenizer_mode(get("tokenizer", "mode").get<std::string>());
    if (!mode) throw ConfigError("tokenizer.mode: unknown mode \"" + get("tokenizer", "mode").get<std::string>() + "\"");
    out.tokenizer.mode = *mode;
    out.tokenizer.lowercase = get("tokenizer", "lowercase").get<bool>();
    out.tokenizer.strip_punct_for_metrics = get("tokenizer", "strip_punct_for_metrics").get<bool>();
    if (*mode == TokenizerMode::kExternalVocab) {
        if (out.paths.vocab.empty()) throw ConfigError("tokenizer.mode external-vocab requires paths.vocab");
        out.tokenizer.vocab = load_vocab(out.paths.vocab);
    }

    out.weights = {get("weights", "alpha").get<double>(), get("weights", "beta").get<double>(),
                   get("weights", "gamma").get<double>()};
    validate(out.weights);

    out.relevance.tau = get("relevance", "tau").get<double>();
    if (out.relevance.tau < 0.0) throw ConfigError("relevance.tau must be >= 0");
    out.relevance.dedupe_pairs = get("relevance", "dedupe_pairs").get<bool>();
    out.s2_floor = get("relevance", "s2_floor").get<double>();
    out.classifier_seed = get("relevance", "classifier_seed").get<std::uint64_t>();

    auto& f = out.filter;
    for (const auto& s : get("filter", "excluded_sources")) f.excluded_sources.insert(s.get<std::string>());
    const auto& k = get("filter", "max_responses_per_context");
    f.max_responses_per_context = k.is_null() ? kUnlimitedResponses : k.get<std::size_t>();
    for (const auto& s : get("filter", "blacklist")) f.blacklist.push_back(s.get<std::string>());
    if (!out.paths.blacklist_file.empty()) {
        for (auto& term : read_lines(out.paths.blacklist_file, "blacklist file")) f.blacklist.push_back(std::move(term));
    }
    if (!out.paths.char_map.empty()) f.char_map = CharMap::load(out.paths.char_map);
    f.punct_run_max = get("filter", "punct_run_max").get<std::size_t>();
    for (const auto& [src, v] : get("filter", "thresholds").items()) f.source_thresholds[src] = v.get<double>();
    const auto& dt = get("filter", "default_threshold");
    if (!dt.is_null()) f.default_threshold = dt.get<double>();
    f.weights = out.weights;
    f.tokenizer = out.tokenizer;
    validate(f);

    auto& d = out.decode;
    const auto strategy = parse_strategy(get("decode", "strategy").get<std::string>());
    if (!strategy) throw ConfigError("decode.strategy: unknown strategy \"" + get("decode", "strategy").get<std::string>() + "\"");
    d.strategy = *strategy;
    d.temperature = get("decode", "temperature").get<double>();
    d.top_p = get("decode", "top_p").get<double>();
    d.beam_size = get("decode", "beam_size").get<std::size_t>();
    d.length_penalty = get("decode", "length_penalty").get<double>();
    d.min_len = get("decode", "min_len").get<std::size_t>();
    d.no_repeat_n = get("decode", "no_repeat_n").get<std::size_t>();
    d.max_len = get("decode", "max_len").get<std::size_t>();
    d.max_context_len = get("decode", "max_context_len").get<std::size_t>();
    d.seed = get("decode", "seed").get<std::uint64_t>();
    validate(d);

    const auto order = get("lm", "order").get<std::uint64_t>();
    if (order < 1 || order > 16) throw ConfigError("lm.order must be in [1, 16]");
    out.lm.order = static_cast<int>(order);
    const auto smoothing = parse_smoothing(get("lm", "smoothing").get<std::string>());
    if (!smoothing) throw ConfigError("lm.smoothing: unknown method \"" + get("lm", "smoothing").get<std::string>() + "\"");
    out.lm.smoothing = *smoothing;
    out.lm.k = get("lm", "k").get<double>();
    if (!(out.lm.k > 0.0)) throw ConfigError("lm.k must be > 0");
    const auto min_count = get("lm", "min_count").get<std::uint64_t>();
    if (min_count < 1) throw ConfigError("lm.min_count must be >= 1");
    out.lm.min_count = static_cast<std::uint32_t>(min_count);
    return out;
}

}  // namespace dialogkit
