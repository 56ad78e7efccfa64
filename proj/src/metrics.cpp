#include "sgn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace sgn::metrics {

double perplexity(const std::vector<double>& token_logprobs) {
    if (token_logprobs.empty())
        throw std::invalid_argument("perplexity: no tokens");
    double mean = std::accumulate(token_logprobs.begin(),
                                  token_logprobs.end(), 0.0) /
                  static_cast<double>(token_logprobs.size());
    return std::exp(-mean);
}

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, int> ngram_counts(const std::vector<std::string>& toks,
                                  int order) {
    std::map<Ngram, int> out;
    if (static_cast<int>(toks.size()) < order) return out;
    for (size_t i = 0; i + order <= toks.size(); ++i)
        ++out[Ngram(toks.begin() + i, toks.begin() + i + order)];
    return out;
}

}  // namespace

double bleu(const std::vector<std::vector<std::string>>& candidates,
            const std::vector<std::vector<std::string>>& references,
            const BleuOptions& opts) {
    if (candidates.empty())
        throw std::invalid_argument("bleu: empty candidate set");
    if (candidates.size() != references.size())
        throw std::invalid_argument("bleu: candidate/reference count mismatch");
    std::vector<long> matched(opts.max_order, 0), total(opts.max_order, 0);
    long cand_len = 0, ref_len = 0;
    for (size_t i = 0; i < candidates.size(); ++i) {
        cand_len += static_cast<long>(candidates[i].size());
        ref_len += static_cast<long>(references[i].size());
        for (int n = 1; n <= opts.max_order; ++n) {
            auto cg = ngram_counts(candidates[i], n);
            auto rg = ngram_counts(references[i], n);
            for (const auto& [g, c] : cg) {
                total[n - 1] += c;
                auto it = rg.find(g);
                if (it != rg.end()) matched[n - 1] += std::min(c, it->second);
            }
        }
    }
    std::vector<double> prec(opts.max_order);
    for (int n = 0; n < opts.max_order; ++n)
        prec[n] = total[n] == 0
                      ? 0.0
                      : static_cast<double>(matched[n]) /
                            static_cast<double>(total[n]);
    double bp = 1.0;
    if (cand_len == 0) return 0.0;
    if (cand_len < ref_len)
        bp = std::exp(1.0 - static_cast<double>(ref_len) /
                                static_cast<double>(cand_len));
    if (opts.arithmetic_mean) {
        double mean = std::accumulate(prec.begin(), prec.end(), 0.0) /
                      static_cast<double>(opts.max_order);
        return bp * mean;
    }
    double log_sum = 0.0;
    for (double p : prec)
        log_sum += std::log(std::max(p, opts.smooth_floor));
    return bp * std::exp(log_sum / static_cast<double>(opts.max_order));
}

double rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference, double beta) {
    if (reference.empty())
        throw std::invalid_argument("rouge_l: empty reference");
    if (candidate.empty()) return 0.0;
    size_t n = candidate.size(), m = reference.size();
    std::vector<std::vector<int>> lcs(n + 1, std::vector<int>(m + 1, 0));
    for (size_t i = 1; i <= n; ++i)
        for (size_t j = 1; j <= m; ++j)
            lcs[i][j] = candidate[i - 1] == reference[j - 1]
                            ? lcs[i - 1][j - 1] + 1
                            : std::max(lcs[i - 1][j], lcs[i][j - 1]);
    double l = lcs[n][m];
    if (l == 0.0) return 0.0;
    double p = l / static_cast<double>(n);
    double r = l / static_cast<double>(m);
    double b2 = beta * beta;
    return (1.0 + b2) * p * r / (r + b2 * p);
}

double rouge_l_corpus(const std::vector<std::vector<std::string>>& candidates,
                      const std::vector<std::vector<std::string>>& references,
                      double beta) {
    if (candidates.size() != references.size() || candidates.empty())
        throw std::invalid_argument("rouge_l_corpus: bad inputs");
    double sum = 0.0;
    for (size_t i = 0; i < candidates.size(); ++i)
        sum += rouge_l(candidates[i], references[i], beta);
    return sum / static_cast<double>(candidates.size());
}

double avg_length(const std::vector<std::vector<std::string>>& texts) {
    if (texts.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& t : texts) sum += static_cast<double>(t.size());
    return sum / static_cast<double>(texts.size());
}

RankingReport rank(const Eigen::MatrixXd& query_embs,
                   const Eigen::MatrixXd& gallery_embs) {
    if (query_embs.rows() == 0 || gallery_embs.rows() == 0)
        throw std::invalid_argument("rank: empty inputs");
    if (query_embs.rows() != gallery_embs.rows())
        throw std::invalid_argument("rank: unpaired inputs");
    RankingReport report;
    report.subset_size = static_cast<int>(query_embs.rows());
    for (int q = 0; q < query_embs.rows(); ++q) {
        double d_true = (query_embs.row(q) - gallery_embs.row(q)).norm();
        int closer = 0;
        for (int g = 0; g < gallery_embs.rows(); ++g) {
            if (g == q) continue;
            double d = (query_embs.row(q) - gallery_embs.row(g)).norm();
            if (d <= d_true) ++closer;  // ties count against the query
        }
        report.ranks.push_back(1 + closer);
    }
    return report;
}

double median_rank(const std::vector<int>& ranks) {
    if (ranks.empty()) throw std::invalid_argument("median_rank: empty");
    std::vector<int> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    size_t n = sorted.size();
    if (n % 2 == 1) return sorted[n / 2];
    return (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
}

double recall_at_k(const std::vector<int>& ranks, int k) {
    if (ranks.empty()) throw std::invalid_argument("recall_at_k: empty");
    int hits = 0;
    for (int r : ranks)
        if (r <= k) ++hits;
    return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

RetEvalResult ret_metrics(const Eigen::MatrixXd& query_embs,
                          const Eigen::MatrixXd& gallery_embs,
                          const std::vector<int>& ks, int subset_size,
                          int n_subsets, std::uint64_t seed,
                          const std::string& direction) {
    int n = static_cast<int>(query_embs.rows());
    if (n < subset_size)
        throw std::invalid_argument(
            "ret_metrics: fewer pairs than subset_size");
    std::mt19937_64 rng(seed);
    RetEvalResult out;
    out.subset_size = subset_size;
    out.n_subsets = n_subsets;
    out.direction = direction;
    for (int k : ks) out.r_at_k[k] = 0.0;
    for (int s = 0; s < n_subsets; ++s) {
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(subset_size);
        Eigen::MatrixXd q(subset_size, query_embs.cols());
        Eigen::MatrixXd g(subset_size, gallery_embs.cols());
        for (int i = 0; i < subset_size; ++i) {
            q.row(i) = query_embs.row(idx[i]);
            g.row(i) = gallery_embs.row(idx[i]);
        }
        RankingReport rep = rank(q, g);
        out.medr += median_rank(rep.ranks);
        for (int k : ks) out.r_at_k[k] += recall_at_k(rep.ranks, k);
    }
    out.medr /= static_cast<double>(n_subsets);
    for (auto& [k, v] : out.r_at_k) v /= static_cast<double>(n_subsets);
    return out;
}

}  // namespace sgn::metrics
