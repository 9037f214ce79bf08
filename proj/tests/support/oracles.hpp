#pragma once

// Reference implementations written straight from the textbook formulas,
// with no shared code paths with the library.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

namespace casejudge::oracle {

inline double bm25(const std::vector<std::vector<std::string>>& docs, const std::vector<std::string>& query,
                   std::size_t d, double k1 = 1.2, double b = 0.75)
{
    const double n_docs = static_cast<double>(docs.size());
    double total_len = 0;
    for (const auto& doc : docs) total_len += static_cast<double>(doc.size());
    double avg = total_len / n_docs;
    if (avg == 0) avg = 1;
    double score = 0;
    for (const auto& t : query) {
        double df = 0;
        for (const auto& doc : docs) df += std::find(doc.begin(), doc.end(), t) != doc.end();
        const double tf = static_cast<double>(std::count(docs[d].begin(), docs[d].end(), t));
        if (tf == 0) continue;
        const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        const double len = static_cast<double>(docs[d].size());
        score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avg));
    }
    return score;
}

/// p_e as the fraction of all (i, j) cross pairs that agree, which equals
/// the product-of-marginals form without ever building marginals.
inline double kappa(const std::vector<int>& a, const std::vector<int>& b)
{
    const auto n = a.size();
    double agree = 0;
    for (std::size_t i = 0; i < n; ++i) agree += a[i] == b[i];
    double cross = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) cross += a[i] == b[j];
    }
    const double po = agree / static_cast<double>(n);
    const double pe = cross / static_cast<double>(n * n);
    if (pe == 1.0) return po == 1.0 ? 1.0 : 0.0;
    return (po - pe) / (1 - pe);
}

inline double dcg(const std::vector<int>& rels, std::size_t k)
{
    double s = 0;
    for (std::size_t i = 0; i < rels.size() && i < k; ++i) {
        s += (std::pow(2.0, rels[i]) - 1) / std::log2(static_cast<double>(i) + 2);
    }
    return s;
}

/// NDCG@k with IDCG found by trying every ordering of the gold labels.
inline double ndcg_by_permutation(const std::vector<int>& ranked_rels, std::vector<int> gold_labels, std::size_t k)
{
    std::sort(gold_labels.begin(), gold_labels.end());
    double best = 0;
    do {
        best = std::max(best, dcg(gold_labels, k));
    } while (std::next_permutation(gold_labels.begin(), gold_labels.end()));
    return best == 0 ? 0 : dcg(ranked_rels, k) / best;
}

}  // namespace casejudge::oracle
