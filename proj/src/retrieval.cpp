#include "casejudge/retrieval.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include "casejudge/errors.hpp"
#include "casejudge/text.hpp"

namespace casejudge {

TokenizerMode parse_tokenizer_mode(std::string_view name)
{
    if (name == "whitespace") return TokenizerMode::whitespace;
    if (name == "cjk_bigram") return TokenizerMode::cjk_bigram;
    if (name == "external") return TokenizerMode::external;
    throw DomainError("unknown tokenizer mode '" + std::string(name) + "'");
}

std::string_view to_string(TokenizerMode mode)
{
    switch (mode) {
    case TokenizerMode::whitespace: return "whitespace";
    case TokenizerMode::cjk_bigram: return "cjk_bigram";
    case TokenizerMode::external: return "external";
    }
    return "unknown";
}

TokenStream tokenize_whitespace(std::string_view text)
{
    TokenStream out;
    std::string cur;
    for (char32_t cp : text::decode(text)) {
        if (text::is_space(cp)) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            text::append_utf8(cur, cp);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

namespace {

void emit_cjk_run(const std::vector<char32_t>& run, TokenStream& out)
{
    if (run.size() == 1) {
        std::string t;
        text::append_utf8(t, run[0]);
        out.push_back(std::move(t));
        return;
    }
    for (std::size_t i = 0; i + 1 < run.size(); ++i) {
        std::string t;
        text::append_utf8(t, run[i]);
        text::append_utf8(t, run[i + 1]);
        out.push_back(std::move(t));
    }
}

}  // namespace

TokenStream tokenize_cjk_bigram(std::string_view text)
{
    TokenStream out;
    std::vector<char32_t> run;
    std::string word;
    auto flush = [&] {
        if (!run.empty()) emit_cjk_run(run, out);
        run.clear();
        if (!word.empty()) out.push_back(std::move(word));
        word.clear();
    };
    for (char32_t cp : text::decode(text)) {
        if (text::is_space(cp)) {
            flush();
        } else if (text::is_cjk(cp)) {
            if (!word.empty()) {
                out.push_back(std::move(word));
                word.clear();
            }
            run.push_back(cp);
        } else {
            if (!run.empty()) {
                emit_cjk_run(run, out);
                run.clear();
            }
            text::append_utf8(word, cp);
        }
    }
    flush();
    return out;
}

namespace {

struct Fd {
    int fd = -1;
    Fd() = default;
    explicit Fd(int f) : fd(f) {}
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    ~Fd() { reset(); }
    void reset()
    {
        if (fd >= 0) ::close(fd);
        fd = -1;
    }
};

}  // namespace

TokenStream tokenize_external(std::string_view text, const std::string& command,
                              std::chrono::milliseconds timeout)
{
    if (command.empty()) {
        throw ExternalTokenizerError("external tokenizer selected but tokenizer.command is empty");
    }
    int in_pipe[2];
    int out_pipe[2];
    if (::pipe(in_pipe) != 0) throw ExternalTokenizerError("pipe failed");
    if (::pipe(out_pipe) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw ExternalTokenizerError("pipe failed");
    }
    pid_t pid = ::fork();
    if (pid < 0) {
        for (int f : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(f);
        throw ExternalTokenizerError("fork failed");
    }
    if (pid == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        for (int f : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(f);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    Fd to_child(in_pipe[1]);
    Fd from_child(out_pipe[0]);
    ::fcntl(to_child.fd, F_SETFL, O_NONBLOCK);
    ::signal(SIGPIPE, SIG_IGN);

    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::size_t written = 0;
    if (text.empty()) to_child.reset();
    std::string output;
    char buf[4096];
    bool timed_out = false;
    while (from_child.fd >= 0) {
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            timed_out = true;
            break;
        }
        pollfd fds[2];
        nfds_t n = 0;
        fds[n++] = {from_child.fd, POLLIN, 0};
        if (to_child.fd >= 0) fds[n++] = {to_child.fd, POLLOUT, 0};
        int rc = ::poll(fds, n, static_cast<int>(left.count()));
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (rc == 0) continue;
        if (n == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
            ssize_t w = ::write(to_child.fd, text.data() + written, text.size() - written);
            if (w > 0) written += static_cast<std::size_t>(w);
            if (w < 0 && errno != EAGAIN) to_child.reset();
            if (written == text.size()) to_child.reset();
        }
        if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
            ssize_t r = ::read(from_child.fd, buf, sizeof buf);
            if (r > 0) {
                output.append(buf, static_cast<std::size_t>(r));
            } else if (r == 0 || errno != EAGAIN) {
                from_child.reset();
            }
        }
    }
    to_child.reset();
    from_child.reset();
    if (timed_out) ::kill(pid, SIGKILL);
    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    if (timed_out) {
        throw ExternalTokenizerError("external tokenizer timed out after " +
                                     std::to_string(timeout.count()) + " ms");
    }
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        throw ExternalTokenizerError("external tokenizer '" + command + "' exited with status " +
                                     std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1));
    }
    return tokenize_whitespace(output);
}

Tokenizer::Tokenizer(TokenizerMode mode, std::string command, std::chrono::milliseconds timeout)
    : mode_(mode), command_(std::move(command)), timeout_(timeout)
{}

TokenStream Tokenizer::operator()(std::string_view text) const
{
    if (mode_ == TokenizerMode::external) return tokenize_external(text, command_, timeout_);
    return tokenize(text, mode_);
}

TokenStream tokenize(std::string_view text, TokenizerMode mode)
{
    switch (mode) {
    case TokenizerMode::whitespace: return tokenize_whitespace(text);
    case TokenizerMode::cjk_bigram: return tokenize_cjk_bigram(text);
    case TokenizerMode::external:
        throw ExternalTokenizerError("external mode needs a command; use Tokenizer");
    }
    return {};
}

Bm25Index::Bm25Index(std::vector<std::pair<std::string, TokenStream>> docs, Bm25Params params)
    : params_(params)
{
    if (docs.empty()) throw IntegrityError("BM25 index needs at least one document");
    std::uint64_t total_len = 0;
    for (auto& [id, tokens] : docs) {
        const auto doc = static_cast<std::uint32_t>(doc_ids_.size());
        if (!by_id_.emplace(id, doc).second) {
            throw IntegrityError("duplicate document id '" + id + "' in BM25 index");
        }
        doc_ids_.push_back(id);
        doc_lens_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total_len += tokens.size();
        std::unordered_map<std::string, std::uint32_t> tf;
        for (auto& t : tokens) ++tf[t];
        for (auto& [term, f] : tf) postings_[term].push_back({doc, f});
    }
    avg_doc_len_ = static_cast<double>(total_len) / static_cast<double>(doc_ids_.size());
    // All-empty corpora score every document 0; keep the length norm finite.
    if (avg_doc_len_ <= 0.0) avg_doc_len_ = 1.0;
}

std::uint32_t Bm25Index::doc_index(const std::string& doc_id) const
{
    auto it = by_id_.find(doc_id);
    if (it == by_id_.end()) throw UnknownDocError("unknown document '" + doc_id + "'");
    return it->second;
}

const std::vector<Posting>& Bm25Index::postings(const std::string& term) const
{
    static const std::vector<Posting> empty;
    auto it = postings_.find(term);
    return it == postings_.end() ? empty : it->second;
}

double Bm25Index::idf(std::size_t doc_freq) const
{
    const double n = static_cast<double>(doc_freq);
    const double total = static_cast<double>(doc_count());
    return std::log(1.0 + (total - n + 0.5) / (n + 0.5));
}

double Bm25Index::term_weight(std::uint32_t tf, std::uint32_t doc_len, std::size_t doc_freq) const
{
    const double f = tf;
    const double norm = 1.0 - params_.b + params_.b * (static_cast<double>(doc_len) / avg_doc_len_);
    return idf(doc_freq) * f * (params_.k1 + 1.0) / (f + params_.k1 * norm);
}

double bm25_score(const Bm25Index& index, const TokenStream& query, const std::string& doc_id)
{
    const auto doc = index.doc_index(doc_id);
    const auto len = index.doc_len(doc);
    double score = 0.0;
    for (const auto& term : query) {
        const auto& plist = index.postings(term);
        auto it = std::find_if(plist.begin(), plist.end(), [doc](const Posting& p) { return p.doc == doc; });
        if (it != plist.end()) score += index.term_weight(it->tf, len, plist.size());
    }
    return score;
}

std::vector<ScoredDoc> top_k_rank(const Bm25Index& index, const TokenStream& query, std::size_t k)
{
    if (k == 0) throw PreconditionError("top_k_rank needs k >= 1");
    std::vector<double> acc(index.doc_count(), 0.0);
    // Accumulate in query-token order so sums match bm25_score bit for bit.
    for (const auto& term : query) {
        const auto& plist = index.postings(term);
        for (const auto& p : plist) acc[p.doc] += index.term_weight(p.tf, index.doc_len(p.doc), plist.size());
    }
    std::vector<ScoredDoc> ranked;
    ranked.reserve(acc.size());
    for (std::uint32_t d = 0; d < acc.size(); ++d) ranked.push_back({index.doc_id(d), acc[d]});
    const auto n = std::min(k, ranked.size());
    auto cmp = [](const ScoredDoc& a, const ScoredDoc& b) {
        return ranks_before(a.score, a.doc_id, b.score, b.doc_id);
    };
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n), ranked.end(), cmp);
    ranked.resize(n);
    return ranked;
}

double round_sig12(double value)
{
    if (value == 0.0 || !std::isfinite(value)) return value;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.11e", value);
    return std::strtod(buf, nullptr);
}

}  // namespace casejudge
