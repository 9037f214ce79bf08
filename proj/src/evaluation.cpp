#include "casejudge/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "casejudge/errors.hpp"
#include "casejudge/io.hpp"
#include "casejudge/text.hpp"

namespace casejudge {

void LabelSeries::add(std::string query_id, std::string candidate_id, int label)
{
    ids.emplace_back(std::move(query_id), std::move(candidate_id));
    labels.push_back(label);
}

namespace {

std::string describe(const PairId& id) { return "(" + id.first + ", " + id.second + ")"; }

std::map<PairId, int> index_series(const LabelSeries& s)
{
    if (s.ids.size() != s.labels.size()) throw AlignmentError("label series has mismatched id and label counts");
    std::map<PairId, int> out;
    for (std::size_t i = 0; i < s.ids.size(); ++i) {
        if (!out.emplace(s.ids[i], s.labels[i]).second) throw AlignmentError("duplicate pair " + describe(s.ids[i]) + " in label series");
    }
    return out;
}

// b's labels reordered to a's id order.
std::vector<int> aligned(const LabelSeries& a, const LabelSeries& b)
{
    index_series(a);
    auto bi = index_series(b);
    if (a.size() != b.size()) {
        throw AlignmentError("label series cover different pairs (" + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()) + ")");
    }
    std::vector<int> out;
    out.reserve(a.size());
    for (const auto& id : a.ids) {
        auto it = bi.find(id);
        if (it == bi.end()) throw AlignmentError("pair " + describe(id) + " missing from the second series");
        out.push_back(it->second);
    }
    return out;
}

}  // namespace

KappaResult cohens_kappa_detail(const LabelSeries& a, const LabelSeries& b)
{
    auto bl = aligned(a, b);
    const std::size_t n = a.size();
    if (n == 0) throw PreconditionError("kappa needs at least one pair");
    std::map<int, std::size_t> ca;
    std::map<int, std::size_t> cb;
    std::size_t agree = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ++ca[a.labels[i]];
        ++cb[bl[i]];
        if (a.labels[i] == bl[i]) ++agree;
    }
    KappaResult r;
    r.n = n;
    const double dn = static_cast<double>(n);
    r.p_observed = static_cast<double>(agree) / dn;
    for (const auto& [cls, count] : ca) {
        auto it = cb.find(cls);
        if (it != cb.end()) r.p_expected += (static_cast<double>(count) / dn) * (static_cast<double>(it->second) / dn);
    }
    if (ca.size() == 1 && cb.size() == 1) {
        if (ca.begin()->first == cb.begin()->first) {
            r.kappa = 1.0;
        } else {
            r.kappa = 0.0;
            r.degenerate = true;
        }
        return r;
    }
    r.kappa = (r.p_observed - r.p_expected) / (1.0 - r.p_expected);
    return r;
}

double cohens_kappa(const LabelSeries& a, const LabelSeries& b) { return cohens_kappa_detail(a, b).kappa; }

ReliabilityResult reliability_kappa(const std::vector<LabelSeries>& runs)
{
    if (runs.size() < 2) throw PreconditionError("reliability needs at least two runs");
    ReliabilityResult r;
    double sum = 0.0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        for (std::size_t j = i + 1; j < runs.size(); ++j) {
            const double k = cohens_kappa(runs[i], runs[j]);
            r.per_pair.push_back({i, j, k});
            sum += k;
        }
    }
    r.mean_pairwise_kappa = sum / static_cast<double>(r.per_pair.size());
    return r;
}

LabelSeries label_series(const std::vector<JudgmentRecord>& judged)
{
    LabelSeries s;
    for (const auto& r : judged) {
        if (r.ok()) s.add(r.query_id, r.candidate_id, r.label);
    }
    return s;
}

LabelSeries mf_series(const std::vector<JudgmentRecord>& judged)
{
    LabelSeries s;
    for (const auto& r : judged) {
        if (r.ok()) s.add(r.query_id, r.candidate_id, r.mf_verdict.relevant ? 1 : 0);
    }
    return s;
}

LabelSeries lf_series(const std::vector<JudgmentRecord>& judged)
{
    LabelSeries s;
    for (const auto& r : judged) {
        if (r.ok()) s.add(r.query_id, r.candidate_id, r.lf_verdict.relevant ? 1 : 0);
    }
    return s;
}

LabelSeries gold_series(const LabelSeries& like, const Qrels& qrels, int (*project)(int))
{
    LabelSeries s;
    for (const auto& id : like.ids) {
        auto label = qrels.get(id.first, id.second);
        if (!label) throw MissingGoldError("no gold label for pair " + describe(id));
        s.add(id.first, id.second, project ? project(*label) : *label);
    }
    return s;
}

ValidityResult validity_kappa(const std::vector<JudgmentRecord>& judged, const Qrels& qrels)
{
    ValidityResult r;
    for (const auto& rec : judged) {
        if (!rec.ok()) ++r.failed_excluded;
    }
    auto four = label_series(judged);
    auto mf = mf_series(judged);
    auto lf = lf_series(judged);
    auto gold_mf = gold_series(mf, qrels, [](int l) { return gold_fact_flags(l).mf_relevant ? 1 : 0; });
    auto gold_lf = gold_series(lf, qrels, [](int l) { return gold_fact_flags(l).lf_relevant ? 1 : 0; });
    auto gold_four = gold_series(four, qrels);
    r.pairs = four.size();
    auto k_mf = cohens_kappa_detail(mf, gold_mf);
    auto k_lf = cohens_kappa_detail(lf, gold_lf);
    auto k_four = cohens_kappa_detail(four, gold_four);
    r.kappa_mf = k_mf.kappa;
    r.kappa_lf = k_lf.kappa;
    r.kappa_4level = k_four.kappa;
    for (auto [name, k] : {std::pair{"MF", &k_mf}, std::pair{"LF", &k_lf}, std::pair{"4-level", &k_four}}) {
        if (k->degenerate) r.warnings.push_back(std::string(name) + " kappa: both raters constant and different");
    }
    if (r.failed_excluded) r.warnings.push_back(std::to_string(r.failed_excluded) + " failed records excluded");
    return r;
}

std::int64_t ConfusionMatrix::total() const
{
    std::int64_t t = 0;
    for (const auto& row : counts) {
        for (auto c : row) t += c;
    }
    return t;
}

ConfusionMatrix confusion_matrix(const LabelSeries& predicted, const LabelSeries& gold, const std::vector<int>& classes)
{
    auto gl = aligned(predicted, gold);
    std::map<int, std::size_t> pos;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (!pos.emplace(classes[i], i).second) throw DomainError("duplicate class " + std::to_string(classes[i]));
    }
    ConfusionMatrix m;
    m.classes = classes;
    m.counts.assign(classes.size(), std::vector<std::int64_t>(classes.size(), 0));
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        auto pi = pos.find(predicted.labels[i]);
        auto gi = pos.find(gl[i]);
        if (pi == pos.end() || gi == pos.end()) {
            throw DomainError("label outside classes for pair " + describe(predicted.ids[i]));
        }
        ++m.counts[pi->second][gi->second];
    }
    return m;
}

std::string confusion_to_csv(const ConfusionMatrix& m)
{
    std::string out = "predicted\\gold";
    for (int c : m.classes) out += "," + std::to_string(c);
    out += '\n';
    for (std::size_t i = 0; i < m.classes.size(); ++i) {
        out += std::to_string(m.classes[i]);
        for (auto v : m.counts[i]) out += "," + std::to_string(v);
        out += '\n';
    }
    return out;
}

RunFile parse_trec_run(std::string_view content)
{
    RunFile run;
    std::map<std::string, std::set<std::string>> seen;
    std::size_t line_no = 0;
    for (const auto& line : io::split_lines(content)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        std::istringstream in(line);
        std::string qid, q0, cid, rank_s, score_s, tag;
        if (!(in >> qid >> q0 >> cid >> rank_s >> score_s)) throw ParseError("run line needs at least 5 fields", line_no);
        RunEntry e;
        e.candidate_id = cid;
        try {
            std::size_t used = 0;
            e.rank = std::stoi(rank_s, &used);
            if (used != rank_s.size()) throw std::invalid_argument(rank_s);
            e.score = std::stod(score_s, &used);
            if (used != score_s.size()) throw std::invalid_argument(score_s);
        } catch (const std::exception&) {
            throw ParseError("run line has a non-numeric rank or score", line_no);
        }
        if (!seen[qid].insert(cid).second) throw ParseError("candidate '" + cid + "' listed twice for query '" + qid + "'", line_no);
        run.queries[qid].push_back(std::move(e));
    }
    for (auto& [qid, entries] : run.queries) {
        std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.rank < b.rank; });
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].rank != static_cast<int>(i) + 1) {
                throw ParseError("query '" + qid + "' ranks must run 1, 2, 3, ... without gaps or repeats");
            }
            if (i > 0 && entries[i].score > entries[i - 1].score) {
                throw ParseError("query '" + qid + "' scores increase at rank " + std::to_string(entries[i].rank));
            }
        }
    }
    return run;
}

std::string format_trec_run(const RunFile& run, std::string_view tag)
{
    std::string out;
    char buf[64];
    for (const auto& [qid, entries] : run.queries) {
        for (const auto& e : entries) {
            std::snprintf(buf, sizeof buf, "%.10g", e.score);
            out += qid + " Q0 " + e.candidate_id + " " + std::to_string(e.rank) + " " + buf + " " + std::string(tag) + "\n";
        }
    }
    return out;
}

RunFile run_from_scores(const std::map<std::string, std::vector<std::pair<std::string, double>>>& scores)
{
    RunFile run;
    for (const auto& [qid, list] : scores) {
        auto sorted = list;
        std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        auto& entries = run.queries[qid];
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            entries.push_back({sorted[i].first, sorted[i].second, static_cast<int>(i) + 1});
        }
    }
    return run;
}

NdcgResult ndcg_at_k(const RunFile& run, const Qrels& qrels, std::size_t k)
{
    if (k == 0) throw PreconditionError("NDCG needs k >= 1");
    if (run.queries.empty()) throw EmptyRunError("run contains no queries");
    auto gain = [](int rel) { return std::exp2(static_cast<double>(rel)) - 1.0; };
    NdcgResult r;
    double sum = 0.0;
    for (const auto& [qid, entries] : run.queries) {
        const auto* row = qrels.row(qid);
        std::vector<int> ideal;
        if (row) {
            for (const auto& [cid, label] : *row) ideal.push_back(label);
        }
        std::sort(ideal.begin(), ideal.end(), std::greater<>());
        double idcg = 0.0;
        for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) idcg += gain(ideal[i]) / std::log2(static_cast<double>(i) + 2.0);
        if (idcg <= 0.0) {
            r.skipped.push_back(qid);
            continue;
        }
        double dcg = 0.0;
        for (std::size_t i = 0; i < std::min(k, entries.size()); ++i) {
            auto label = qrels.get(qid, entries[i].candidate_id).value_or(0);
            dcg += gain(label) / std::log2(static_cast<double>(i) + 2.0);
        }
        const double v = dcg / idcg;
        r.per_query[qid] = v;
        sum += v;
    }
    r.mean = r.per_query.empty() ? 0.0 : sum / static_cast<double>(r.per_query.size());
    return r;
}

}  // namespace casejudge
