#include "casejudge/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>
#include <unordered_set>

#include <fcntl.h>
#include <unistd.h>

#include "casejudge/errors.hpp"
#include "casejudge/io.hpp"
#include "casejudge/parallel.hpp"
#include "casejudge/random.hpp"
#include "casejudge/text.hpp"

namespace casejudge {

using nlohmann::json;
using nlohmann::ordered_json;

CasePair CasePair::of(std::string a, std::string b)
{
    if (a == b) throw DomainError("a case pair needs two distinct cases, got '" + a + "' twice");
    if (b < a) std::swap(a, b);
    return {std::move(a), std::move(b)};
}

std::vector<CasePair> sample_pairs(const CaseStore& corpus, std::size_t n, std::uint64_t seed)
{
    const std::uint64_t count = corpus.size();
    if (count < 2) throw PreconditionError("pair sampling needs at least two cases");
    if (n == 0) throw PreconditionError("pair sampling needs n >= 1");
    const std::uint64_t universe = count * (count - 1) / 2;
    if (n > universe) {
        throw ExhaustedError("asked for " + std::to_string(n) + " pairs but only " + std::to_string(universe) + " exist");
    }
    std::vector<std::string> ids;
    ids.reserve(count);
    for (const auto& c : corpus.cases()) ids.push_back(c.id);
    std::sort(ids.begin(), ids.end());

    // Floyd's algorithm: n distinct indices into the pair universe.
    auto rng = seeded_rng(seed);
    std::unordered_set<std::uint64_t> chosen;
    chosen.reserve(n * 2);
    for (std::uint64_t j = universe - n; j < universe; ++j) {
        const auto t = uniform_below(rng, j + 1);
        chosen.insert(chosen.count(t) ? j : t);
    }
    std::vector<std::uint64_t> picks(chosen.begin(), chosen.end());
    std::sort(picks.begin(), picks.end());

    // Row i holds pairs (i, i+1..N-1); rows before i hold i*(2N-i-1)/2 pairs.
    auto row_start = [count](std::uint64_t i) { return i * (2 * count - i - 1) / 2; };
    std::vector<CasePair> out;
    out.reserve(n);
    for (auto m : picks) {
        std::uint64_t lo = 0;
        std::uint64_t hi = count - 1;
        while (lo + 1 < hi) {
            auto mid = (lo + hi) / 2;
            if (row_start(mid) <= m) lo = mid; else hi = mid;
        }
        const auto i = lo;
        const auto j = i + 1 + (m - row_start(i));
        out.push_back({ids[i], ids[j]});
    }
    std::sort(out.begin(), out.end());
    return out;
}

Bm25PairScorer::Bm25PairScorer(const CaseStore& cases, Tokenizer tokenizer, Bm25Params params)
    : cases_(cases), tokenizer_(std::move(tokenizer)), params_(params)
{}

double Bm25PairScorer::score(const CasePair& pair) const
{
    const auto& left = cases_.at(pair.left_id);
    const auto& right = cases_.at(pair.right_id);
    Bm25Index index({{right.id, tokenizer_(right.fact_text)}}, params_);
    return bm25_score(index, tokenizer_(left.fact_text), right.id);
}

std::vector<CasePair> prerank_pairs(const std::vector<CasePair>& pairs, const PairScorer& scorer, std::size_t top_n)
{
    if (top_n == 0) throw PreconditionError("prerank needs top_n >= 1");
    std::vector<std::pair<double, const CasePair*>> scored;
    scored.reserve(pairs.size());
    for (const auto& p : pairs) {
        try {
            scored.emplace_back(scorer.score(p), &p);
        } catch (const std::exception& e) {
            throw ScorerError("scoring pair (" + p.left_id + ", " + p.right_id + ") failed: " + e.what());
        }
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        const double ra = round_sig12(a.first);
        const double rb = round_sig12(b.first);
        if (ra != rb) return ra > rb;
        return *a.second < *b.second;
    });
    std::vector<CasePair> out;
    const auto n = std::min(top_n, scored.size());
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(*scored[i].second);
    return out;
}

// ---------------------------------------------------------------------------

ordered_json annotated_to_json(const AnnotatedPair& a)
{
    ordered_json j;
    j["left_id"] = a.pair.left_id;
    j["right_id"] = a.pair.right_id;
    j["record"] = record_to_json(a.record);
    return j;
}

AnnotatedPair annotated_from_json(const json& j)
{
    try {
        AnnotatedPair a;
        a.pair = CasePair::of(j.at("left_id").get<std::string>(), j.at("right_id").get<std::string>());
        a.record = record_from_json(j.at("record"));
        if (a.record.query_id != a.pair.left_id || a.record.candidate_id != a.pair.right_id) {
            throw IntegrityError("annotated pair (" + a.pair.left_id + ", " + a.pair.right_id +
                                 ") carries a record for another pair");
        }
        return a;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed annotated pair: ") + e.what());
    }
}

std::string annotated_to_jsonl(const std::vector<AnnotatedPair>& items)
{
    std::string out;
    for (const auto& a : items) {
        out += annotated_to_json(a).dump();
        out += '\n';
    }
    return out;
}

std::vector<AnnotatedPair> parse_annotated_jsonl(std::string_view content)
{
    std::vector<AnnotatedPair> out;
    std::size_t line_no = 0;
    for (const auto& line : io::split_lines(content)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(annotated_from_json(json::parse(line)));
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("malformed annotated line: ") + e.what(), line_no);
        } catch (const ParseError& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return out;
}

namespace {

// Completed pairs from an existing checkpoint. A torn final line (no
// trailing newline, unparseable) is what an interrupted append leaves and is
// dropped; damage anywhere else is an error.
std::map<std::string, AnnotatedPair> load_checkpoint(const std::filesystem::path& path)
{
    std::map<std::string, AnnotatedPair> done;
    std::error_code ec;
    if (path.empty() || !std::filesystem::exists(path, ec)) return done;
    const auto content = io::read_file(path);
    auto lines = io::split_lines(content);
    const bool torn_tail = !content.empty() && content.back() != '\n';
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        try {
            auto a = annotated_from_json(json::parse(lines[i]));
            if (a.record.ok()) done.insert_or_assign(a.pair.key(), std::move(a));
        } catch (const std::exception& e) {
            if (torn_tail && i + 1 == lines.size()) break;
            throw ParseError(std::string("corrupt checkpoint: ") + e.what(), i + 1);
        }
    }
    return done;
}

class CheckpointWriter {
public:
    explicit CheckpointWriter(const std::filesystem::path& path)
    {
        if (path.empty()) return;
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
        if (fd_ < 0) throw IoError("cannot open checkpoint " + path.string());
        // Terminate a torn tail so the next record starts on its own line.
        auto size = std::filesystem::file_size(path);
        if (size > 0) {
            std::string last(1, '\0');
            int rfd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
            if (rfd >= 0) {
                if (::pread(rfd, last.data(), 1, static_cast<off_t>(size - 1)) == 1 && last[0] != '\n') write_all("\n");
                ::close(rfd);
            }
        }
    }
    CheckpointWriter(const CheckpointWriter&) = delete;
    CheckpointWriter& operator=(const CheckpointWriter&) = delete;
    ~CheckpointWriter()
    {
        if (fd_ >= 0) ::close(fd_);
    }

    void append(const AnnotatedPair& a)
    {
        if (fd_ < 0) return;
        std::lock_guard lock(mu_);
        write_all(annotated_to_json(a).dump() + "\n");
        ::fsync(fd_);
    }

private:
    void write_all(const std::string& s)
    {
        std::size_t off = 0;
        while (off < s.size()) {
            auto w = ::write(fd_, s.data() + off, s.size() - off);
            if (w < 0) {
                if (errno == EINTR) continue;
                throw IoError("checkpoint write failed");
            }
            off += static_cast<std::size_t>(w);
        }
    }

    int fd_ = -1;
    std::mutex mu_;
};

}  // namespace

AnnotateResult annotate_pairs(const JudgeEngine& engine, const CaseStore& cases, const std::vector<CasePair>& pairs,
                              const AblationFlags& flags, const AnnotateOptions& options)
{
    for (const auto& p : pairs) {
        if (!cases.contains(p.left_id) || !cases.contains(p.right_id)) {
            throw IntegrityError("pair (" + p.left_id + ", " + p.right_id + ") references an unknown case");
        }
    }
    auto done = load_checkpoint(options.checkpoint);
    CheckpointWriter writer(options.checkpoint);
    const auto fingerprint = engine.config_fingerprint(flags);

    std::vector<std::optional<AnnotatedPair>> slots(pairs.size());
    std::vector<std::size_t> todo;
    AnnotateResult result;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (auto it = done.find(pairs[i].key()); it != done.end()) {
            slots[i] = it->second;
            ++result.resumed;
        } else {
            todo.push_back(i);
        }
    }
    std::mutex mu;
    parallel_for(todo.size(), options.parallelism, [&](std::size_t t) {
        if (options.stop.stop_requested()) return;
        const auto& p = pairs[todo[t]];
        AnnotatedPair a{p, {}};
        try {
            a.record = engine.judge_pair(cases.at(p.left_id), cases.at(p.right_id), flags, options.run_id);
        } catch (const Error& e) {
            a.record = failed_record(p.left_id, p.right_id, options.run_id, fingerprint, e.what());
        }
        if (a.record.ok()) writer.append(a);
        std::lock_guard lock(mu);
        ++result.judged;
        if (!a.record.ok()) ++result.failed;
        if (options.on_done) options.on_done(a);
        slots[todo[t]] = std::move(a);
    });
    for (auto& s : slots) {
        if (s) {
            result.annotated.push_back(std::move(*s));
        } else {
            result.interrupted = true;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------

std::string_view to_string(DatasetMode mode)
{
    return mode == DatasetMode::distribution_matched ? "distribution_matched" : "random";
}

DatasetMode parse_dataset_mode(std::string_view s)
{
    if (s == "distribution_matched") return DatasetMode::distribution_matched;
    if (s == "random") return DatasetMode::random;
    throw DomainError("unknown dataset mode '" + std::string(s) + "'");
}

void DatasetSpec::validate() const
{
    if (size == 0) throw PreconditionError("dataset size must be >= 1");
    if (mode == DatasetMode::distribution_matched && !target_distribution) {
        throw PreconditionError("distribution_matched builds need a target distribution");
    }
    if (!target_distribution) return;
    double sum = 0.0;
    for (const auto& [label, frac] : *target_distribution) {
        if (label < 0 || label > 3) throw PreconditionError("distribution label " + std::to_string(label) + " not in {0,1,2,3}");
        if (!(frac >= 0.0)) throw PreconditionError("distribution fractions must be non-negative");
        sum += frac;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw PreconditionError("distribution fractions must sum to 1");
}

ordered_json dataset_spec_to_json(const DatasetSpec& spec)
{
    ordered_json j;
    j["name"] = spec.name;
    j["size"] = spec.size;
    j["mode"] = to_string(spec.mode);
    if (spec.target_distribution) {
        ordered_json d = ordered_json::object();
        for (const auto& [label, frac] : *spec.target_distribution) d[std::to_string(label)] = frac;
        j["target_distribution"] = d;
    } else {
        j["target_distribution"] = nullptr;
    }
    j["seed"] = spec.seed;
    return j;
}

DatasetSpec dataset_spec_from_json(const json& j)
{
    try {
        DatasetSpec s;
        s.name = j.value("name", std::string("dataset"));
        s.size = j.at("size").get<std::size_t>();
        s.mode = parse_dataset_mode(j.at("mode").get<std::string>());
        s.seed = j.value("seed", std::uint64_t{0});
        if (auto it = j.find("target_distribution"); it != j.end() && !it->is_null()) {
            std::map<int, double> d;
            for (const auto& [k, v] : it->items()) d[std::stoi(k)] = v.get<double>();
            s.target_distribution = std::move(d);
        }
        return s;
    } catch (const std::exception& e) {
        throw ParseError(std::string("malformed dataset spec: ") + e.what());
    }
}

std::map<int, std::size_t> label_quotas(std::size_t size, const std::map<int, double>& distribution)
{
    std::map<int, std::size_t> quotas;
    std::vector<std::pair<double, int>> remainders;
    std::size_t assigned = 0;
    for (const auto& [label, frac] : distribution) {
        const double exact = static_cast<double>(size) * frac;
        const auto base = static_cast<std::size_t>(std::floor(exact));
        quotas[label] = base;
        assigned += base;
        remainders.emplace_back(exact - static_cast<double>(base), label);
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < size && !remainders.empty(); i = (i + 1) % remainders.size()) {
        ++quotas[remainders[i].second];
        ++assigned;
    }
    return quotas;
}

namespace {

template <class T>
void shuffle_prefix(std::vector<T>& v, std::size_t n, std::mt19937_64& rng)
{
    for (std::size_t i = 0; i < n && i < v.size(); ++i) std::swap(v[i], v[i + uniform_below(rng, v.size() - i)]);
}

}  // namespace

std::vector<AnnotatedPair> build_dataset(const std::vector<AnnotatedPair>& annotated, const DatasetSpec& spec)
{
    spec.validate();
    std::vector<const AnnotatedPair*> pool;
    std::set<std::string> seen;
    for (const auto& a : annotated) {
        if (a.record.ok() && seen.insert(a.pair.key()).second) pool.push_back(&a);
    }
    std::sort(pool.begin(), pool.end(), [](auto* a, auto* b) { return a->pair < b->pair; });

    std::vector<const AnnotatedPair*> picked;
    if (spec.mode == DatasetMode::random) {
        if (spec.size > pool.size()) {
            throw ExhaustedError("random build wants " + std::to_string(spec.size) + " pairs but only " +
                                 std::to_string(pool.size()) + " are annotated");
        }
        auto rng = seeded_rng(spec.seed, text::sha256_hex("random"));
        shuffle_prefix(pool, spec.size, rng);
        picked.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(spec.size));
    } else {
        std::map<int, std::vector<const AnnotatedPair*>> by_label;
        for (auto* a : pool) by_label[a->record.label].push_back(a);
        auto quotas = label_quotas(spec.size, *spec.target_distribution);
        for (const auto& [label, quota] : quotas) {
            const auto have = by_label[label].size();
            if (have < quota) throw InsufficientLabelError(label, quota - have);
        }
        for (const auto& [label, quota] : quotas) {
            auto& bucket = by_label[label];
            auto rng = seeded_rng(spec.seed, text::sha256_hex("label:" + std::to_string(label)));
            shuffle_prefix(bucket, quota, rng);
            picked.insert(picked.end(), bucket.begin(), bucket.begin() + static_cast<std::ptrdiff_t>(quota));
        }
    }
    std::sort(picked.begin(), picked.end(), [](auto* a, auto* b) { return a->pair < b->pair; });
    std::vector<AnnotatedPair> out;
    out.reserve(picked.size());
    for (auto* a : picked) out.push_back(*a);
    return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ExportFormat f) { return f == ExportFormat::label_only ? "label_only" : "rationale"; }

ExportFormat parse_export_format(std::string_view s)
{
    if (s == "label_only") return ExportFormat::label_only;
    if (s == "rationale") return ExportFormat::rationale;
    throw DomainError("unknown export format '" + std::string(s) + "'");
}

ordered_json Manifest::to_json() const
{
    ordered_json j;
    j["name"] = name;
    j["size"] = size;
    j["mode"] = mode;
    j["seed"] = seed;
    j["format"] = format;
    ordered_json h = ordered_json::object();
    for (const auto& [label, count] : histogram) h[std::to_string(label)] = count;
    j["histogram"] = h;
    j["config_fingerprint"] = config_fingerprint;
    j["sha256"] = sha256;
    if (overlap) j["overlap"] = {{"with", overlap->first}, {"pairs", overlap->second}};
    return j;
}

namespace {

std::string facts_section(const std::string& heading, const std::string& body)
{
    return heading + "\n===FACTS===\n" + body + "\n===END===\n";
}

std::string verdict_section(const std::string& heading, const FactVerdict& v)
{
    std::string out = heading + "\n";
    if (!v.reasoning.empty()) out += v.reasoning + "\n";
    out += v.relevant ? "VERDICT: RELEVANT" : "VERDICT: IRRELEVANT";
    return out + "\n";
}

}  // namespace

std::string render_dataset(const std::vector<AnnotatedPair>& ds, const CaseStore& cases, ExportFormat format,
                           std::string_view system_text)
{
    std::string out;
    for (const auto& a : ds) {
        if (!a.record.ok()) throw PreconditionError("cannot export failed pair (" + a.pair.left_id + ", " + a.pair.right_id + ")");
        const auto& q = cases.at(a.record.query_id);
        const auto& c = cases.at(a.record.candidate_id);
        ordered_json j;
        if (format == ExportFormat::label_only) {
            j["query_id"] = q.id;
            j["cand_id"] = c.id;
            j["query_text"] = q.fact_text;
            j["cand_text"] = c.fact_text;
            j["label"] = a.record.label;
        } else {
            const auto& r = a.record;
            std::string user = "Judge the relevance of the two criminal cases below. Extract the material facts and "
                               "then the legal facts of each case, assess each kind of fact, and give the relevance "
                               "label (0-3).\n\nCase A:\n" + q.fact_text + "\n\nCase B:\n" + c.fact_text;
            std::string assistant = facts_section("Material facts of case A:", r.mf_extractions[0].text) +
                                    facts_section("Material facts of case B:", r.mf_extractions[1].text) +
                                    facts_section("Legal facts of case A:", r.lf_extractions[0].text) +
                                    facts_section("Legal facts of case B:", r.lf_extractions[1].text) + "\n" +
                                    verdict_section("Material-fact analysis:", r.mf_verdict) + "\n" +
                                    verdict_section("Legal-fact analysis:", r.lf_verdict) + "\n" +
                                    "Relevance label: " + std::to_string(r.label);
            j["messages"] = ordered_json::array({
                ordered_json{{"role", "system"}, {"content", std::string(system_text)}},
                ordered_json{{"role", "user"}, {"content", user}},
                ordered_json{{"role", "assistant"}, {"content", assistant}},
            });
            j["label"] = r.label;
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

Manifest export_dataset(const std::vector<AnnotatedPair>& ds, const CaseStore& cases, ExportFormat format,
                        const std::filesystem::path& out, const DatasetSpec& spec, std::string_view system_text,
                        const std::filesystem::path& manifest_path,
                        const std::optional<std::pair<std::string, std::vector<CasePair>>>& compare_with)
{
    const auto content = render_dataset(ds, cases, format, system_text);
    Manifest m;
    m.name = spec.name;
    m.size = ds.size();
    m.mode = std::string(to_string(spec.mode));
    m.seed = spec.seed;
    m.format = std::string(to_string(format));
    for (int l = 0; l <= 3; ++l) m.histogram[l] = 0;
    std::set<std::string> fingerprints;
    for (const auto& a : ds) {
        ++m.histogram[a.record.label];
        fingerprints.insert(a.record.config_fingerprint);
    }
    if (fingerprints.size() == 1) {
        m.config_fingerprint = *fingerprints.begin();
    } else if (!fingerprints.empty()) {
        std::string joined;
        for (const auto& f : fingerprints) joined += f + '\n';
        m.config_fingerprint = "mixed:" + text::sha256_hex(joined);
    }
    m.sha256 = text::sha256_hex(content);
    if (compare_with) {
        std::set<CasePair> other(compare_with->second.begin(), compare_with->second.end());
        std::size_t shared = 0;
        for (const auto& a : ds) shared += other.count(a.pair);
        m.overlap = std::make_pair(compare_with->first, shared);
    }
    io::write_file_atomic(out, content);
    io::write_file_atomic(manifest_path, m.to_json().dump(2) + "\n");
    return m;
}

}  // namespace casejudge
