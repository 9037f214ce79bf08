#include "casejudge/llm_gateway.hpp"

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "casejudge/errors.hpp"
#include "casejudge/io.hpp"
#include "casejudge/text.hpp"

namespace casejudge {

using nlohmann::json;

namespace protocol {

std::string stage_marker(Stage stage, FactType fact_type)
{
    return std::string(stage_prefix) + std::string(to_string(stage)) + "_" + std::string(to_string(fact_type));
}

std::pair<Stage, FactType> read_stage_marker(std::string_view user_text)
{
    for (const auto& line : io::split_lines(user_text)) {
        if (line.rfind(stage_prefix, 0) != 0) continue;
        auto tag = std::string_view(line).substr(stage_prefix.size());
        while (!tag.empty() && (tag.back() == ' ' || tag.back() == '\t')) tag.remove_suffix(1);
        if (tag.size() != 5 || tag[2] != '_') throw MalformedStageMarker("malformed stage marker '" + line + "'");
        try {
            return {parse_stage(tag.substr(0, 2)), parse_fact_type(tag.substr(3))};
        } catch (const ParseError&) {
            throw MalformedStageMarker("malformed stage marker '" + line + "'");
        }
    }
    throw MalformedStageMarker("request carries no stage marker");
}

std::optional<std::string> read_block(std::string_view text, std::string_view begin, std::string_view end)
{
    auto lines = io::split_lines(text);
    std::optional<std::size_t> start;
    for (std::size_t i = lines.size(); i-- > 0;) {
        if (lines[i] == begin) {
            start = i;
            break;
        }
    }
    if (!start) return std::nullopt;
    std::string out;
    for (std::size_t i = *start + 1; i < lines.size(); ++i) {
        if (lines[i] == end) return out;
        if (i > *start + 1) out += '\n';
        out += lines[i];
    }
    return std::nullopt;
}

}  // namespace protocol

void validate_request(const JudgeRequest& request)
{
    if (request.user_text.empty()) throw PreconditionError("judge request has empty user text");
    if (!(request.temperature >= 0.0 && request.temperature <= 2.0)) {
        throw PreconditionError("judge temperature " + std::to_string(request.temperature) + " outside [0, 2]");
    }
}

std::string request_hash(const JudgeRequest& request)
{
    json key = json::array({request.model, request.temperature, request.system_text, request.user_text});
    return text::sha256_hex(key.dump());
}

// ---------------------------------------------------------------------------

HttplibTransport::HttplibTransport(std::string base_url, std::chrono::seconds timeout) : timeout_(timeout)
{
    auto scheme = base_url.find("://");
    auto path_start = base_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_start == std::string::npos) {
        origin_ = base_url;
    } else {
        origin_ = base_url.substr(0, path_start);
        path_prefix_ = base_url.substr(path_start);
    }
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

HttpReply HttplibTransport::post_json(const std::string& path, const std::string& body,
                                      const std::vector<std::pair<std::string, std::string>>& headers)
{
    httplib::Client client(origin_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(path_prefix_ + path, h, body, "application/json");
    if (!res) return {0, {}, httplib::to_string(res.error())};
    return {res->status, res->body, {}};
}

// ---------------------------------------------------------------------------

RateLimiter::RateLimiter(int requests_per_minute, Sleeper sleeper)
    : capacity_(std::max(requests_per_minute, 0)),
      per_ms_(requests_per_minute / 60000.0),
      tokens_(capacity_),
      last_(std::chrono::steady_clock::now()),
      sleep_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }))
{}

void RateLimiter::acquire()
{
    if (capacity_ <= 0) return;
    std::chrono::milliseconds wait{0};
    {
        std::lock_guard lock(mu_);
        auto now = std::chrono::steady_clock::now();
        const double elapsed = std::chrono::duration<double, std::milli>(now - last_).count();
        last_ = now;
        tokens_ = std::min(capacity_, tokens_ + elapsed * per_ms_);
        // Reserve the token now; a negative balance is the queue of waiters.
        tokens_ -= 1.0;
        if (tokens_ < 0) wait = std::chrono::milliseconds(static_cast<long long>(-tokens_ / per_ms_) + 1);
    }
    if (wait.count() > 0) sleep_(wait);
}

// ---------------------------------------------------------------------------

RemoteJudge::RemoteJudge(std::shared_ptr<Transport> transport, RemoteJudgeOptions options)
    : transport_(std::move(transport)), options_(std::move(options)),
      limiter_(options_.requests_per_minute, options_.sleep)
{
    if (!options_.sleep) options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string RemoteJudge::fingerprint() const { return "remote"; }

std::size_t RemoteJudge::backend_calls() const
{
    std::lock_guard lock(mu_);
    return backend_calls_;
}

std::optional<JudgeResponse> RemoteJudge::cache_lookup(const std::string& key) const
{
    auto path = options_.cache_dir / (key + ".json");
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    try {
        auto j = json::parse(io::read_file(path));
        JudgeResponse r;
        r.text = j.at("text").get<std::string>();
        r.usage.prompt_tokens = j.at("usage").at("prompt_tokens").get<std::int64_t>();
        r.usage.completion_tokens = j.at("usage").at("completion_tokens").get<std::int64_t>();
        r.cached = true;
        return r;
    } catch (const std::exception&) {
        return std::nullopt;  // unreadable entries are refetched and overwritten
    }
}

void RemoteJudge::cache_store(const std::string& key, const JudgeResponse& response) const
{
    nlohmann::ordered_json j;
    j["text"] = response.text;
    j["usage"] = {{"prompt_tokens", response.usage.prompt_tokens}, {"completion_tokens", response.usage.completion_tokens}};
    io::write_file_atomic(options_.cache_dir / (key + ".json"), j.dump());
}

namespace {

std::string iso8601_now()
{
    auto now = std::chrono::system_clock::now();
    auto t = std::chrono::system_clock::to_time_t(now);
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms));
    return out;
}

std::string stage_label(const std::string& user_text)
{
    try {
        auto [s, f] = protocol::read_stage_marker(user_text);
        return std::string(to_string(s)) + "_" + std::string(to_string(f));
    } catch (const MalformedStageMarker&) {
        return "";
    }
}

}  // namespace

void RemoteJudge::append_transcript(const JudgeRequest& request, const std::string& key, const JudgeResponse& response)
{
    if (options_.transcript_path.empty()) return;
    nlohmann::ordered_json j;
    j["ts"] = iso8601_now();
    j["request_hash"] = key;
    j["stage"] = stage_label(request.user_text);
    j["model"] = request.model;
    j["latency_ms"] = response.latency_ms;
    j["usage"] = {{"prompt_tokens", response.usage.prompt_tokens}, {"completion_tokens", response.usage.completion_tokens}};
    j["attempts"] = response.attempts;
    std::lock_guard lock(mu_);
    if (options_.transcript_path.has_parent_path()) {
        std::filesystem::create_directories(options_.transcript_path.parent_path());
    }
    std::ofstream out(options_.transcript_path, std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot append to transcript " + options_.transcript_path.string());
    out << j.dump() << '\n';
}

JudgeResponse RemoteJudge::complete(const JudgeRequest& request)
{
    validate_request(request);
    const auto key = request_hash(request);
    if (options_.cache_enabled) {
        if (auto hit = cache_lookup(key)) return *hit;
    }

    json body;
    body["model"] = request.model;
    json messages = json::array();
    if (!request.system_text.empty()) messages.push_back({{"role", "system"}, {"content", request.system_text}});
    messages.push_back({{"role", "user"}, {"content", request.user_text}});
    body["messages"] = std::move(messages);
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_tokens;
    const auto payload = body.dump();
    const std::vector<std::pair<std::string, std::string>> headers{{"Authorization", "Bearer " + options_.api_key}};

    JudgeResponse response;
    const auto started = std::chrono::steady_clock::now();
    for (int attempt = 1;; ++attempt) {
        limiter_.acquire();
        HttpReply reply = transport_->post_json("/chat/completions", payload, headers);
        {
            std::lock_guard lock(mu_);
            ++backend_calls_;
        }
        response.attempts = attempt;
        if (reply.status == 200) {
            try {
                auto j = json::parse(reply.body);
                response.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
                if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
                    response.usage.prompt_tokens = u->value("prompt_tokens", std::int64_t{0});
                    response.usage.completion_tokens = u->value("completion_tokens", std::int64_t{0});
                }
            } catch (const std::exception& e) {
                throw UpstreamError(std::string("malformed chat-completions reply: ") + e.what());
            }
            break;
        }
        if (reply.status == 401 || reply.status == 403) {
            throw AuthError("backend rejected credentials (HTTP " + std::to_string(reply.status) + ")");
        }
        const bool transient = reply.status == 0 || reply.status == 429 || reply.status >= 500;
        const std::string what = reply.status == 0 ? "transport error: " + reply.error
                                                   : "HTTP " + std::to_string(reply.status);
        if (!transient) throw UpstreamError("backend request failed: " + what);
        if (attempt > options_.max_retries) {
            throw UpstreamError("backend request failed after " + std::to_string(attempt) + " attempts: " + what);
        }
        auto delay = options_.backoff_base * (1LL << std::min(attempt - 1, 20));
        options_.sleep(std::min<std::chrono::milliseconds>(delay, options_.backoff_cap));
    }
    response.latency_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
    if (options_.cache_enabled) cache_store(key, response);
    append_transcript(request, key, response);
    return response;
}

std::string api_key_from_env(const std::string& key_env)
{
    if (key_env.empty()) throw ConfigError("api.key_env", "must name an environment variable");
    const char* v = std::getenv(key_env.c_str());
    if (!v || !*v) throw ConfigError("api.key_env", "environment variable " + key_env + " is not set");
    return v;
}

}  // namespace casejudge
