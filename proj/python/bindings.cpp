#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "casejudge/augmentation.hpp"
#include "casejudge/cli.hpp"
#include "casejudge/corpus.hpp"
#include "casejudge/demo_store.hpp"
#include "casejudge/errors.hpp"
#include "casejudge/evaluation.hpp"
#include "casejudge/judge_engine.hpp"
#include "casejudge/llm_gateway.hpp"
#include "casejudge/prompt.hpp"
#include "casejudge/retrieval.hpp"

namespace py = pybind11;
using namespace casejudge;

namespace {

LabelSeries series_of(const std::vector<int>& labels)
{
    LabelSeries s;
    for (std::size_t i = 0; i < labels.size(); ++i) s.add("q", std::to_string(i), labels[i]);
    return s;
}

py::dict kappa_dict(const KappaResult& k)
{
    py::dict d;
    d["kappa"] = k.kappa;
    d["p_observed"] = k.p_observed;
    d["p_expected"] = k.p_expected;
    d["n"] = k.n;
    d["degenerate"] = k.degenerate;
    return d;
}

// Mock-judged pipeline for a single pair of fact texts.
py::dict mock_judge_pair(const std::string& query_text, const std::string& candidate_text,
                         const std::string& demos_path, const std::vector<std::string>& lexicon, double threshold,
                         const std::string& tokenizer)
{
    const Tokenizer tok(parse_tokenizer_mode(tokenizer));
    auto demos = load_demo_library(demos_path, tok);
    MockJudgeConfig cfg;
    cfg.mf_jaccard_threshold = threshold;
    cfg.lexicon = {lexicon.begin(), lexicon.end()};
    MockJudge judge(cfg, tok);
    JudgeEngine engine(judge, demos, TemplateSet::builtin());
    Case q{"query", query_text, {}, std::nullopt};
    Case c{"candidate", candidate_text, {}, std::nullopt};
    auto r = engine.judge_pair(q, c, {}, "python");
    py::dict d;
    d["label"] = r.label;
    d["mf_relevant"] = r.mf_verdict.relevant;
    d["lf_relevant"] = r.lf_verdict.relevant;
    d["mf_extractions"] = std::vector<std::string>{r.mf_extractions[0].text, r.mf_extractions[1].text};
    d["lf_extractions"] = std::vector<std::string>{r.lf_extractions[0].text, r.lf_extractions[1].text};
    d["record"] = record_to_json(r).dump();
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Legal case relevance judgment core";
    static py::exception<Error> base_error(m, "CasejudgeError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(base_error, e.what());
        }
    });

    m.def("tokenize", [](const std::string& text, const std::string& mode) {
        return tokenize(text, parse_tokenizer_mode(mode));
    }, py::arg("text"), py::arg("mode") = "cjk_bigram");

    py::class_<Bm25Index>(m, "Bm25Index")
        .def(py::init([](std::vector<std::pair<std::string, TokenStream>> docs, double k1, double b) {
                 return Bm25Index(std::move(docs), Bm25Params{k1, b});
             }),
             py::arg("docs"), py::arg("k1") = 1.2, py::arg("b") = 0.75)
        .def_property_readonly("doc_count", &Bm25Index::doc_count)
        .def_property_readonly("avg_doc_len", &Bm25Index::avg_doc_len)
        .def("idf", &Bm25Index::idf)
        .def("score", [](const Bm25Index& ix, const TokenStream& q, const std::string& id) { return bm25_score(ix, q, id); })
        .def("top_k", [](const Bm25Index& ix, const TokenStream& q, std::size_t k) {
            std::vector<std::pair<std::string, double>> out;
            for (auto& s : top_k_rank(ix, q, k)) out.emplace_back(s.doc_id, s.score);
            return out;
        });

    m.def("gold_fact_flags", [](int label) {
        auto f = gold_fact_flags(label);
        return std::make_pair(f.mf_relevant, f.lf_relevant);
    });
    m.def("aggregate_label", [](bool mf, bool lf) {
        FactVerdict a, b;
        a.relevant = mf;
        b.fact_type = FactType::LF;
        b.relevant = lf;
        return aggregate_label(a, b);
    });

    m.def("cohens_kappa", [](const std::vector<int>& a, const std::vector<int>& b) {
        return kappa_dict(cohens_kappa_detail(series_of(a), series_of(b)));
    });
    m.def("reliability_kappa", [](const std::vector<std::vector<int>>& runs) {
        std::vector<LabelSeries> s;
        for (const auto& r : runs) s.push_back(series_of(r));
        auto res = reliability_kappa(s);
        py::list pairs;
        for (const auto& p : res.per_pair) pairs.append(py::make_tuple(p.run_a, p.run_b, p.kappa));
        py::dict d;
        d["mean_pairwise_kappa"] = res.mean_pairwise_kappa;
        d["per_pair"] = pairs;
        return d;
    });
    m.def("ndcg_at_k",
          [](const std::map<std::string, std::vector<std::pair<std::string, double>>>& scores,
             const std::map<std::string, std::map<std::string, int>>& gold, std::size_t k) {
              Qrels q;
              for (const auto& [qid, row] : gold) {
                  for (const auto& [cid, label] : row) q.set(qid, cid, label);
              }
              auto r = ndcg_at_k(run_from_scores(scores), q, k);
              py::dict d;
              d["mean"] = r.mean;
              d["per_query"] = r.per_query;
              d["skipped"] = r.skipped;
              return d;
          },
          py::arg("scores"), py::arg("qrels"), py::arg("k") = 30);
    m.def("confusion_matrix", [](const std::vector<int>& predicted, const std::vector<int>& gold,
                                 const std::vector<int>& classes) {
        return confusion_matrix(series_of(predicted), series_of(gold), classes).counts;
    });
    m.def("label_quotas", &label_quotas, py::arg("size"), py::arg("distribution"));
    m.def("sample_pairs", [](const std::vector<std::string>& ids, std::size_t n, std::uint64_t seed) {
        CaseStore store;
        for (const auto& id : ids) store.add(Case{id, "x", {}, std::nullopt});
        std::vector<std::pair<std::string, std::string>> out;
        for (auto& p : sample_pairs(store, n, seed)) out.emplace_back(p.left_id, p.right_id);
        return out;
    }, py::arg("ids"), py::arg("n"), py::arg("seed") = 0);
    m.def("mock_judge_pair", &mock_judge_pair, py::arg("query_text"), py::arg("candidate_text"), py::arg("demos_path"),
          py::arg("lexicon") = std::vector<std::string>{}, py::arg("threshold") = 0.4,
          py::arg("tokenizer") = "cjk_bigram");
    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
            py::gil_scoped_release release;
            code = cli::run_command(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    });
}
