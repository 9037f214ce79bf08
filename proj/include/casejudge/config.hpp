#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "casejudge/augmentation.hpp"
#include "casejudge/judge_engine.hpp"
#include "casejudge/retrieval.hpp"

namespace casejudge {

struct ApiConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-3.5-turbo";
    /// Name of the environment variable holding the key; the key itself is
    /// never read from config files.
    std::string key_env = "OPENAI_API_KEY";
    int max_retries = 4;
    int backoff_ms = 500;
    int timeout_s = 60;
    int rpm = 60;
    int max_tokens = 1024;
    std::string transcript;
};

struct JudgeConfig {
    double temperature = 0.4;
    std::size_t top_k_demos = 2;
    std::size_t fa_demos_per_polarity = 2;
    std::size_t runs = 3;
    std::size_t top_n_candidates = 30;
    int retry = 2;
    std::uint64_t seed = 0;
    FaAdmQuery fa_adm_query = FaAdmQuery::extracted;
    std::string templates_dir;
};

struct AugmentConfig {
    double temperature = 0.5;
    std::size_t pairs = 200000;
    std::size_t prerank_top = 50000;
    std::uint64_t seed = 0;
};

struct Config {
    ApiConfig api;
    JudgeConfig judge;
    AugmentConfig augment;
    Bm25Params bm25;
    TokenizerMode tokenizer_mode = TokenizerMode::cjk_bigram;
    std::string tokenizer_command;
    int tokenizer_timeout_s = 30;
    double mock_mf_jaccard_threshold = 0.4;
    std::string mock_lexicon_path;
    std::string demos_path;
    std::size_t parallelism = 1;
    bool cache_enabled = false;
    std::string cache_dir = ".cache/judge";
    AblationFlags ablation;

    Tokenizer tokenizer() const;
    /// Engine options for the judging stage (augment=false) or for
    /// annotation (augment=true, which uses augment.temperature).
    EngineOptions engine_options(bool augment = false) const;
};

/// Every recognised dotted key with its default value.
const nlohmann::ordered_json& config_defaults();

/// Applies a JSON object (nested, dotted keys, or a mix) on top of `base`.
/// Throws ConfigError for unknown keys, wrong types or out-of-range values.
Config apply_config(const Config& base, const nlohmann::json& overrides);

/// Parses "key=value"; the value is read as JSON when it parses, otherwise as
/// a string.
std::pair<std::string, nlohmann::json> parse_override(std::string_view assignment);

/// Defaults, then the file (if any), then the overrides in order.
Config load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides = {});

nlohmann::ordered_json config_to_json(const Config& config);

}  // namespace casejudge
