#include "casejudge/config.hpp"

#include "casejudge/errors.hpp"
#include "casejudge/io.hpp"
#include "casejudge/text.hpp"

namespace casejudge {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string_view to_string(FaAdmQuery q) { return q == FaAdmQuery::raw ? "raw" : "extracted"; }

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out)
{
    if (j.is_object()) {
        for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
    } else {
        out.emplace_back(prefix, j);
    }
}

bool same_kind(const json& def, const json& v)
{
    if (def.is_boolean()) return v.is_boolean();
    if (def.is_string()) return v.is_string();
    if (def.is_number_float()) return v.is_number();
    if (def.is_number_unsigned()) return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    if (def.is_number_integer()) return v.is_number_integer();
    return false;
}

const char* kind_name(const json& def)
{
    if (def.is_boolean()) return "a boolean";
    if (def.is_string()) return "a string";
    if (def.is_number_float()) return "a number";
    if (def.is_number_unsigned()) return "a non-negative integer";
    return "an integer";
}

template <class T>
T get(const ordered_json& flat, const char* key)
{
    return flat.at(key).get<T>();
}

void require(bool ok, const char* key, const std::string& what)
{
    if (!ok) throw ConfigError(key, what);
}

Config from_flat(const ordered_json& f)
{
    Config c;
    c.api.base_url = get<std::string>(f, "api.base_url");
    c.api.model = get<std::string>(f, "api.model");
    c.api.key_env = get<std::string>(f, "api.key_env");
    c.api.max_retries = get<int>(f, "api.max_retries");
    c.api.backoff_ms = get<int>(f, "api.backoff_ms");
    c.api.timeout_s = get<int>(f, "api.timeout_s");
    c.api.rpm = get<int>(f, "api.rpm");
    c.api.max_tokens = get<int>(f, "api.max_tokens");
    c.api.transcript = get<std::string>(f, "api.transcript");
    c.judge.temperature = get<double>(f, "judge.temperature");
    c.judge.top_k_demos = get<std::size_t>(f, "judge.top_k_demos");
    c.judge.fa_demos_per_polarity = get<std::size_t>(f, "judge.fa_demos_per_polarity");
    c.judge.runs = get<std::size_t>(f, "judge.runs");
    c.judge.top_n_candidates = get<std::size_t>(f, "judge.top_n_candidates");
    c.judge.retry = get<int>(f, "judge.retry");
    c.judge.seed = get<std::uint64_t>(f, "judge.seed");
    c.judge.templates_dir = get<std::string>(f, "judge.templates_dir");
    const auto adm = get<std::string>(f, "judge.fa_adm_query");
    require(adm == "extracted" || adm == "raw", "judge.fa_adm_query", "must be 'extracted' or 'raw'");
    c.judge.fa_adm_query = adm == "raw" ? FaAdmQuery::raw : FaAdmQuery::extracted;
    c.augment.temperature = get<double>(f, "augment.temperature");
    c.augment.pairs = get<std::size_t>(f, "augment.pairs");
    c.augment.prerank_top = get<std::size_t>(f, "augment.prerank_top");
    c.augment.seed = get<std::uint64_t>(f, "augment.seed");
    c.bm25.k1 = get<double>(f, "bm25.k1");
    c.bm25.b = get<double>(f, "bm25.b");
    try {
        c.tokenizer_mode = parse_tokenizer_mode(get<std::string>(f, "tokenizer.mode"));
    } catch (const Error& e) {
        throw ConfigError("tokenizer.mode", e.what());
    }
    c.tokenizer_command = get<std::string>(f, "tokenizer.command");
    c.tokenizer_timeout_s = get<int>(f, "tokenizer.timeout_s");
    c.mock_mf_jaccard_threshold = get<double>(f, "mock.mf_jaccard_threshold");
    c.mock_lexicon_path = get<std::string>(f, "mock.lexicon_path");
    c.demos_path = get<std::string>(f, "demos.path");
    c.parallelism = get<std::size_t>(f, "parallelism");
    c.cache_enabled = get<bool>(f, "cache.enabled");
    c.cache_dir = get<std::string>(f, "cache.dir");
    c.ablation.disable_adm = get<bool>(f, "ablation.disable_adm");
    c.ablation.disable_fe = get<bool>(f, "ablation.disable_fe");
    c.ablation.disable_fa_demos = get<bool>(f, "ablation.disable_fa_demos");

    require(c.judge.temperature >= 0.0 && c.judge.temperature <= 2.0, "judge.temperature", "must lie in [0, 2]");
    require(c.augment.temperature >= 0.0 && c.augment.temperature <= 2.0, "augment.temperature", "must lie in [0, 2]");
    require(c.parallelism >= 1, "parallelism", "must be >= 1");
    require(c.judge.runs >= 1, "judge.runs", "must be >= 1");
    require(c.judge.top_n_candidates >= 1, "judge.top_n_candidates", "must be >= 1");
    require(c.judge.top_k_demos >= 1, "judge.top_k_demos", "must be >= 1");
    require(c.judge.fa_demos_per_polarity >= 1, "judge.fa_demos_per_polarity", "must be >= 1");
    require(c.judge.retry >= 0, "judge.retry", "must be >= 0");
    require(c.api.max_retries >= 0, "api.max_retries", "must be >= 0");
    require(c.api.backoff_ms >= 0, "api.backoff_ms", "must be >= 0");
    require(c.api.timeout_s >= 1, "api.timeout_s", "must be >= 1");
    require(c.api.rpm >= 1, "api.rpm", "must be >= 1");
    require(c.api.max_tokens >= 1, "api.max_tokens", "must be >= 1");
    require(c.bm25.k1 >= 0.0, "bm25.k1", "must be >= 0");
    require(c.bm25.b >= 0.0 && c.bm25.b <= 1.0, "bm25.b", "must lie in [0, 1]");
    require(c.tokenizer_timeout_s >= 1, "tokenizer.timeout_s", "must be >= 1");
    require(c.tokenizer_mode != TokenizerMode::external || !c.tokenizer_command.empty(), "tokenizer.command",
            "required when tokenizer.mode is external");
    require(c.mock_mf_jaccard_threshold >= 0.0 && c.mock_mf_jaccard_threshold <= 1.0, "mock.mf_jaccard_threshold",
            "must lie in [0, 1]");
    require(!c.api.key_env.empty(), "api.key_env", "must name an environment variable");
    return c;
}

}  // namespace

const ordered_json& config_defaults()
{
    static const ordered_json defaults = config_to_json(Config{});
    return defaults;
}

ordered_json config_to_json(const Config& c)
{
    ordered_json f;
    f["api.base_url"] = c.api.base_url;
    f["api.model"] = c.api.model;
    f["api.key_env"] = c.api.key_env;
    f["api.max_retries"] = c.api.max_retries;
    f["api.backoff_ms"] = c.api.backoff_ms;
    f["api.timeout_s"] = c.api.timeout_s;
    f["api.rpm"] = c.api.rpm;
    f["api.max_tokens"] = c.api.max_tokens;
    f["api.transcript"] = c.api.transcript;
    f["judge.temperature"] = c.judge.temperature;
    f["judge.top_k_demos"] = c.judge.top_k_demos;
    f["judge.fa_demos_per_polarity"] = c.judge.fa_demos_per_polarity;
    f["judge.runs"] = c.judge.runs;
    f["judge.top_n_candidates"] = c.judge.top_n_candidates;
    f["judge.retry"] = c.judge.retry;
    f["judge.seed"] = c.judge.seed;
    f["judge.fa_adm_query"] = to_string(c.judge.fa_adm_query);
    f["judge.templates_dir"] = c.judge.templates_dir;
    f["augment.temperature"] = c.augment.temperature;
    f["augment.pairs"] = c.augment.pairs;
    f["augment.prerank_top"] = c.augment.prerank_top;
    f["augment.seed"] = c.augment.seed;
    f["bm25.k1"] = c.bm25.k1;
    f["bm25.b"] = c.bm25.b;
    f["tokenizer.mode"] = to_string(c.tokenizer_mode);
    f["tokenizer.command"] = c.tokenizer_command;
    f["tokenizer.timeout_s"] = c.tokenizer_timeout_s;
    f["mock.mf_jaccard_threshold"] = c.mock_mf_jaccard_threshold;
    f["mock.lexicon_path"] = c.mock_lexicon_path;
    f["demos.path"] = c.demos_path;
    f["parallelism"] = c.parallelism;
    f["cache.enabled"] = c.cache_enabled;
    f["cache.dir"] = c.cache_dir;
    f["ablation.disable_adm"] = c.ablation.disable_adm;
    f["ablation.disable_fe"] = c.ablation.disable_fe;
    f["ablation.disable_fa_demos"] = c.ablation.disable_fa_demos;
    return f;
}

Config apply_config(const Config& base, const json& overrides)
{
    if (!overrides.is_object()) throw ConfigError("", "configuration must be a JSON object");
    const auto& defaults = config_defaults();
    auto flat = config_to_json(base);
    std::vector<std::pair<std::string, json>> items;
    flatten(overrides, "", items);
    for (const auto& [key, value] : items) {
        auto it = defaults.find(key);
        if (it == defaults.end()) throw ConfigError(key, "unknown configuration key");
        if (!same_kind(*it, value)) throw ConfigError(key, std::string("must be ") + kind_name(*it));
        if (it->is_number_float()) {
            flat[key] = value.get<double>();
        } else {
            flat[key] = value;
        }
    }
    try {
        return from_flat(flat);
    } catch (const json::exception& e) {
        throw ConfigError("", e.what());
    }
}

std::pair<std::string, json> parse_override(std::string_view assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError(std::string(assignment), "override must look like key=value");
    }
    std::string key(text::trim(assignment.substr(0, eq)));
    std::string raw(assignment.substr(eq + 1));
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    return {key, value};
}

Config load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides)
{
    Config c;
    if (path) {
        json j = json::parse(io::read_file(*path), nullptr, false);
        if (j.is_discarded()) throw ConfigError("", "config file " + path->string() + " is not valid JSON");
        c = apply_config(c, j);
    }
    for (const auto& o : overrides) {
        auto [key, value] = parse_override(o);
        c = apply_config(c, json{{key, value}});
    }
    return c;
}

Tokenizer Config::tokenizer() const
{
    return Tokenizer(tokenizer_mode, tokenizer_command, std::chrono::seconds(tokenizer_timeout_s));
}

EngineOptions Config::engine_options(bool augment) const
{
    EngineOptions o;
    o.model = api.model;
    o.temperature = augment ? this->augment.temperature : judge.temperature;
    o.max_tokens = api.max_tokens;
    o.top_k_demos = judge.top_k_demos;
    o.fa_demos_per_polarity = judge.fa_demos_per_polarity;
    o.retry = judge.retry;
    o.seed = augment ? this->augment.seed : judge.seed;
    o.fa_adm_query = judge.fa_adm_query;
    o.parallelism = parallelism;
    return o;
}

}  // namespace casejudge
