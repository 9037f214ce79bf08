#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "casejudge/demo_store.hpp"
#include "casejudge/retrieval.hpp"

namespace casejudge {

/// Markers the engine embeds in every prompt. The response sentinels are
/// requested from the judge by the prompt instructions.
namespace protocol {
inline constexpr std::string_view stage_prefix = "#STAGE:";
inline constexpr std::string_view target_begin = "#BEGIN_TARGET";
inline constexpr std::string_view target_end = "#END_TARGET";
inline constexpr std::string_view target_a_begin = "#BEGIN_TARGET_A";
inline constexpr std::string_view target_a_end = "#END_TARGET_A";
inline constexpr std::string_view target_b_begin = "#BEGIN_TARGET_B";
inline constexpr std::string_view target_b_end = "#END_TARGET_B";
inline constexpr std::string_view facts_open = "===FACTS===";
inline constexpr std::string_view facts_close = "===END===";
inline constexpr std::string_view verdict_relevant = "VERDICT: RELEVANT";
inline constexpr std::string_view verdict_irrelevant = "VERDICT: IRRELEVANT";

/// "#STAGE:FE_MF" and friends.
std::string stage_marker(Stage stage, FactType fact_type);
/// Reads the first stage marker line. Throws MalformedStageMarker.
std::pair<Stage, FactType> read_stage_marker(std::string_view user_text);
/// Content between the last `begin` line and the following `end` line.
std::optional<std::string> read_block(std::string_view text, std::string_view begin, std::string_view end);
}  // namespace protocol

struct JudgeRequest {
    std::string system_text;
    std::string user_text;
    double temperature = 0.4;
    std::string model = "gpt-3.5-turbo";
    int max_tokens = 1024;
};

/// Throws PreconditionError when user_text is empty or temperature is
/// outside [0, 2].
void validate_request(const JudgeRequest& request);

/// SHA-256 over (model, temperature, system_text, user_text).
std::string request_hash(const JudgeRequest& request);

struct Usage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;

    bool operator==(const Usage&) const = default;
};

struct JudgeResponse {
    std::string text;
    Usage usage;
    std::int64_t latency_ms = 0;
    bool cached = false;
    int attempts = 0;
};

/// Anything that answers prompts. Implementations must be safe to call from
/// several worker threads at once.
class Judge {
public:
    virtual ~Judge() = default;
    virtual JudgeResponse complete(const JudgeRequest& request) = 0;
    /// Identifies the backend and its settings for config fingerprints.
    virtual std::string fingerprint() const = 0;
};

// ---------------------------------------------------------------------------
// Remote chat-completions backend

struct HttpReply {
    /// 0 means the request never produced a status (connect error, timeout).
    int status = 0;
    std::string body;
    std::string error;
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpReply post_json(const std::string& path, const std::string& body,
                                const std::vector<std::pair<std::string, std::string>>& headers) = 0;
};

/// cpp-httplib transport; `base_url` like "https://api.openai.com/v1".
class HttplibTransport : public Transport {
public:
    HttplibTransport(std::string base_url, std::chrono::seconds timeout);
    HttpReply post_json(const std::string& path, const std::string& body,
                        const std::vector<std::pair<std::string, std::string>>& headers) override;

private:
    std::string origin_;
    std::string path_prefix_;
    std::chrono::seconds timeout_;
};

/// Token bucket over requests per minute; 0 disables limiting.
class RateLimiter {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;
    explicit RateLimiter(int requests_per_minute, Sleeper sleeper = {});
    void acquire();

private:
    double capacity_;
    double per_ms_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
    std::mutex mu_;
    Sleeper sleep_;
};

struct RemoteJudgeOptions {
    std::string api_key;
    int max_retries = 4;
    std::chrono::milliseconds backoff_base{500};
    std::chrono::milliseconds backoff_cap{30000};
    int requests_per_minute = 60;
    bool cache_enabled = false;
    std::filesystem::path cache_dir = ".cache/judge";
    /// Empty disables the transcript.
    std::filesystem::path transcript_path;
    /// Replaceable for tests; defaults to std::this_thread::sleep_for.
    std::function<void(std::chrono::milliseconds)> sleep;
};

/// OpenAI-style chat completions with retry, backoff, rate limiting, a
/// content-addressed response cache, and a JSONL transcript.
class RemoteJudge : public Judge {
public:
    RemoteJudge(std::shared_ptr<Transport> transport, RemoteJudgeOptions options);

    /// Retries 429, 5xx and transport failures with exponential backoff up to
    /// max_retries; throws AuthError on 401/403 without retrying and
    /// UpstreamError once the budget is spent.
    JudgeResponse complete(const JudgeRequest& request) override;
    std::string fingerprint() const override;

    std::size_t backend_calls() const;

private:
    std::optional<JudgeResponse> cache_lookup(const std::string& key) const;
    void cache_store(const std::string& key, const JudgeResponse& response) const;
    void append_transcript(const JudgeRequest& request, const std::string& key, const JudgeResponse& response);

    std::shared_ptr<Transport> transport_;
    RemoteJudgeOptions options_;
    RateLimiter limiter_;
    mutable std::mutex mu_;
    std::size_t backend_calls_ = 0;
};

/// Reads the key from the environment variable named `key_env`.
std::string api_key_from_env(const std::string& key_env);

// ---------------------------------------------------------------------------
// Mock judge

struct MockJudgeConfig {
    double mf_jaccard_threshold = 0.4;
    std::set<std::string> lexicon;
    std::uint64_t seed = 0;
};

/// One term per line; blank lines and surrounding whitespace ignored.
std::set<std::string> load_lexicon(const std::filesystem::path& path);
std::set<std::string> parse_lexicon(std::string_view content);

/// Deterministic rule-based stand-in for the LLM. It reads the stage marker
/// and target blocks from the prompt and answers:
///   FE/MF  the target's normalized tokens (NFC, punctuation removed, order
///          kept, duplicates dropped), space separated, in a facts block;
///   FE/LF  the sorted lexicon terms whose tokens all occur in the target;
///   FA/MF  RELEVANT iff the Jaccard index of the two token sets reaches the
///          threshold;
///   FA/LF  RELEVANT iff the two lexicon-term sets intersect.
/// Empty fact lists are written as "NONE". Temperature is ignored.
class MockJudge : public Judge {
public:
    explicit MockJudge(MockJudgeConfig config, Tokenizer tokenizer = Tokenizer{});
    JudgeResponse complete(const JudgeRequest& request) override;
    std::string fingerprint() const override;

    const MockJudgeConfig& config() const noexcept { return config_; }

    /// The mock's token set view of a text, in first-occurrence order.
    std::vector<std::string> normalized_tokens(std::string_view text) const;
    std::vector<std::string> lexicon_terms(std::string_view text) const;

private:
    MockJudgeConfig config_;
    Tokenizer tokenizer_;
    std::vector<std::pair<std::string, std::vector<std::string>>> lexicon_tokens_;
};

inline constexpr std::string_view mock_empty_facts = "NONE";

}  // namespace casejudge
