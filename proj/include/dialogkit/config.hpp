#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dialogkit/corpus.hpp"
#include "dialogkit/decoding.hpp"
#include "dialogkit/filters.hpp"
#include "dialogkit/ngram_lm.hpp"
#include "dialogkit/quality.hpp"

namespace dialogkit {

enum class ValueType {
    kBool,
    kCount,           // non-negative integer
    kOptionalCount,   // non-negative integer or null ("unlimited")
    kNumber,          // also accepts "inf" / "-inf" strings
    kOptionalNumber,  // number or null
    kString,
    kStringList,
    kNumberMap,
};

struct ConfigKey {
    std::string section;
    std::string name;
    ValueType type;
    nlohmann::json default_value;
    std::string help;

    std::string path() const { return section + "." + name; }
    // "--beam-size"; single-letter names get a section prefix ("--lm-k")
    std::string flag() const;
    // "DIALOGKIT_DECODE_BEAM_SIZE"
    std::string env_var() const;
};

inline constexpr std::string_view kEnvPrefix = "DIALOGKIT_";

const std::vector<ConfigKey>& config_schema();
nlohmann::json default_config();
nlohmann::json schema_to_json();

// Reads a JSON config file; unknown sections/keys and mistyped values are ConfigErrors.
nlohmann::json load_config_file(const std::filesystem::path& path);

// Overlays `overrides` (same shape as the defaults) onto `base`, validating each value.
void merge_config(nlohmann::json& base, const nlohmann::json& overrides, std::string_view origin);

// Parses a textual override (flag or environment value) for one key.
nlohmann::json parse_value(const ConfigKey& key, std::string_view text);

// Applies every DIALOGKIT_<SECTION>_<NAME> variable found through getenv.
void apply_env(nlohmann::json& cfg, const std::function<const char*(const char*)>& getenv_fn);

struct ToolPaths {
    std::string lm;
    std::string blacklist_file;
    std::string star_list;
    std::string char_map;
    std::string classifier_train;
    std::string vocab;
};

struct ToolConfig {
    TokenizerConfig tokenizer;
    QualityWeights weights;
    RelevanceParams relevance;
    double s2_floor = kDefaultS2Floor;
    std::uint64_t classifier_seed = 0;
    FilterConfig filter;
    DecodeConfig decode;
    LMTrainConfig lm;
    ToolPaths paths;
};

// Converts a merged config document, loading the referenced vocabulary, character map,
// and blacklist files. Every non-empty path must exist.
ToolConfig build_tool_config(const nlohmann::json& cfg);

}  // namespace dialogkit
