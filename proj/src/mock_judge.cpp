#include <algorithm>
#include <cstdio>
#include <unordered_set>

#include "casejudge/errors.hpp"
#include "casejudge/io.hpp"
#include "casejudge/llm_gateway.hpp"
#include "casejudge/text.hpp"

namespace casejudge {

std::set<std::string> parse_lexicon(std::string_view content)
{
    std::set<std::string> terms;
    for (const auto& line : io::split_lines(content)) {
        auto t = text::trim(text::nfc(line));
        if (!t.empty()) terms.insert(std::move(t));
    }
    return terms;
}

std::set<std::string> load_lexicon(const std::filesystem::path& path) { return parse_lexicon(io::read_file(path)); }

MockJudge::MockJudge(MockJudgeConfig config, Tokenizer tokenizer)
    : config_(std::move(config)), tokenizer_(std::move(tokenizer))
{
    if (!(config_.mf_jaccard_threshold > 0.0 && config_.mf_jaccard_threshold <= 1.0)) {
        throw PreconditionError("mock mf_jaccard_threshold must lie in (0, 1]");
    }
    for (const auto& term : config_.lexicon) {
        auto toks = normalized_tokens(term);
        if (!toks.empty()) lexicon_tokens_.emplace_back(term, std::move(toks));
    }
}

std::string MockJudge::fingerprint() const
{
    std::string lex;
    for (const auto& t : config_.lexicon) lex += t + '\n';
    char thr[32];
    std::snprintf(thr, sizeof thr, "%.17g", config_.mf_jaccard_threshold);
    return "mock:threshold=" + std::string(thr) + ":tokenizer=" + std::string(to_string(tokenizer_.mode())) +
           ":lexicon=" + text::sha256_hex(lex).substr(0, 16);
}

std::vector<std::string> MockJudge::normalized_tokens(std::string_view raw) const
{
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (auto& t : tokenizer_(text::punct_to_space(text::nfc(raw)))) {
        if (seen.insert(t).second) out.push_back(std::move(t));
    }
    return out;
}

std::vector<std::string> MockJudge::lexicon_terms(std::string_view raw) const
{
    auto toks = normalized_tokens(raw);
    std::unordered_set<std::string> have(toks.begin(), toks.end());
    std::vector<std::string> out;
    for (const auto& [term, term_toks] : lexicon_tokens_) {
        if (std::all_of(term_toks.begin(), term_toks.end(), [&](const auto& t) { return have.count(t) != 0; })) {
            out.push_back(term);
        }
    }
    return out;  // lexicon_tokens_ follows std::set order, so already sorted
}

namespace {

std::string join(const std::vector<std::string>& parts, std::string_view sep)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string facts_block(const std::vector<std::string>& items, std::string_view sep)
{
    std::string body = items.empty() ? std::string(mock_empty_facts) : join(items, sep);
    return "Extracted facts:\n" + std::string(protocol::facts_open) + "\n" + body + "\n" +
           std::string(protocol::facts_close) + "\n";
}

std::string require_block(std::string_view user, std::string_view begin, std::string_view end)
{
    auto block = protocol::read_block(user, begin, end);
    if (!block) throw MalformedStageMarker("request lacks a " + std::string(begin) + " block");
    return *block;
}

std::int64_t code_points(std::string_view s) { return static_cast<std::int64_t>(text::decode(s).size()); }

}  // namespace

JudgeResponse MockJudge::complete(const JudgeRequest& request)
{
    validate_request(request);
    const auto [stage, fact_type] = protocol::read_stage_marker(request.user_text);
    std::string out;
    if (stage == Stage::FE) {
        const auto target = require_block(request.user_text, protocol::target_begin, protocol::target_end);
        if (fact_type == FactType::MF) {
            out = facts_block(normalized_tokens(target), " ");
        } else {
            out = facts_block(lexicon_terms(target), "\n");
        }
    } else {
        const auto a = require_block(request.user_text, protocol::target_a_begin, protocol::target_a_end);
        const auto b = require_block(request.user_text, protocol::target_b_begin, protocol::target_b_end);
        bool relevant = false;
        if (fact_type == FactType::MF) {
            auto ta = normalized_tokens(a);
            auto tb = normalized_tokens(b);
            std::unordered_set<std::string> sa(ta.begin(), ta.end());
            std::size_t inter = 0;
            for (const auto& t : tb) inter += sa.count(t);
            const std::size_t uni = ta.size() + tb.size() - inter;
            const double jaccard = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
            relevant = jaccard >= config_.mf_jaccard_threshold;
            char buf[160];
            std::snprintf(buf, sizeof buf, "Material-fact overlap %zu/%zu = %.6f against threshold %.6f.\n", inter, uni,
                          jaccard, config_.mf_jaccard_threshold);
            out = buf;
        } else {
            auto la = lexicon_terms(a);
            auto lb = lexicon_terms(b);
            std::vector<std::string> shared;
            std::set_intersection(la.begin(), la.end(), lb.begin(), lb.end(), std::back_inserter(shared));
            relevant = !shared.empty();
            out = "Shared legal characterizations: " + (shared.empty() ? std::string("none") : join(shared, ", ")) + ".\n";
        }
        out += relevant ? protocol::verdict_relevant : protocol::verdict_irrelevant;
        out += '\n';
    }
    JudgeResponse r;
    r.text = std::move(out);
    r.usage = {code_points(request.system_text) + code_points(request.user_text), code_points(r.text)};
    r.attempts = 1;
    return r;
}

}  // namespace casejudge
