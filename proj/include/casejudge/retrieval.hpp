#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace casejudge {

/// Ordered tokens; never contains an empty string.
using TokenStream = std::vector<std::string>;

enum class TokenizerMode { whitespace, cjk_bigram, external };

TokenizerMode parse_tokenizer_mode(std::string_view name);
std::string_view to_string(TokenizerMode mode);

/// Splits on Unicode whitespace.
TokenStream tokenize_whitespace(std::string_view text);

/// Whitespace chunks are split further into CJK runs and non-CJK segments.
/// CJK runs emit overlapping character bigrams (a run of one character emits
/// that character); non-CJK segments are kept whole.
TokenStream tokenize_cjk_bigram(std::string_view text);

/// Pipes `text` to `command` (run through /bin/sh) on stdin and splits its
/// stdout on whitespace. Throws ExternalTokenizerError on nonzero exit or
/// when `timeout` elapses.
TokenStream tokenize_external(std::string_view text, const std::string& command,
                              std::chrono::milliseconds timeout);

class Tokenizer {
public:
    explicit Tokenizer(TokenizerMode mode = TokenizerMode::cjk_bigram, std::string command = {},
                       std::chrono::milliseconds timeout = std::chrono::seconds(30));

    TokenStream operator()(std::string_view text) const;

    TokenizerMode mode() const noexcept { return mode_; }
    const std::string& command() const noexcept { return command_; }

private:
    TokenizerMode mode_;
    std::string command_;
    std::chrono::milliseconds timeout_;
};

TokenStream tokenize(std::string_view text, TokenizerMode mode);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;
};

/// Immutable inverted index over a fixed document set.
class Bm25Index {
public:
    /// Throws IntegrityError on an empty set or duplicate doc ids.
    Bm25Index(std::vector<std::pair<std::string, TokenStream>> docs, Bm25Params params = {});

    std::size_t doc_count() const noexcept { return doc_ids_.size(); }
    double avg_doc_len() const noexcept { return avg_doc_len_; }
    const Bm25Params& params() const noexcept { return params_; }

    const std::string& doc_id(std::uint32_t doc) const { return doc_ids_.at(doc); }
    std::uint32_t doc_len(std::uint32_t doc) const { return doc_lens_.at(doc); }
    /// Throws UnknownDocError.
    std::uint32_t doc_index(const std::string& doc_id) const;
    bool contains(const std::string& doc_id) const { return by_id_.count(doc_id) != 0; }

    /// Empty when the term is not indexed.
    const std::vector<Posting>& postings(const std::string& term) const;
    std::size_t doc_freq(const std::string& term) const { return postings(term).size(); }

    /// ln(1 + (N - n + 0.5) / (n + 0.5)); always positive.
    double idf(std::size_t doc_freq) const;
    double term_weight(std::uint32_t tf, std::uint32_t doc_len, std::size_t doc_freq) const;

private:
    Bm25Params params_;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_lens_;
    std::unordered_map<std::string, std::uint32_t> by_id_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    double avg_doc_len_ = 0.0;
};

struct ScoredDoc {
    std::string doc_id;
    double score;

    bool operator==(const ScoredDoc&) const = default;
};

/// Sums the BM25 weight of every query token occurrence; tokens absent from
/// the document contribute nothing. Throws UnknownDocError.
double bm25_score(const Bm25Index& index, const TokenStream& query, const std::string& doc_id);

/// All documents ranked by descending score (compared after rounding to 12
/// significant digits), ties by ascending doc id; truncated to k.
std::vector<ScoredDoc> top_k_rank(const Bm25Index& index, const TokenStream& query, std::size_t k);

/// Rounds to 12 significant digits; the comparison key for every ranking.
double round_sig12(double value);

/// Strict weak order used by all rankings: higher rounded score first, then
/// lexicographically smaller id.
inline bool ranks_before(double score_a, const std::string& id_a, double score_b,
                         const std::string& id_b)
{
    const double ra = round_sig12(score_a);
    const double rb = round_sig12(score_b);
    if (ra != rb) return ra > rb;
    return id_a < id_b;
}

}  // namespace casejudge
