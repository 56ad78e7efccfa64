#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sgn::metrics {

// exp(-mean log p) over ground-truth token log-probabilities.
double perplexity(const std::vector<double>& token_logprobs);

struct BleuOptions {
    bool arithmetic_mean = false;  // variant of the 1-4-gram combination
    double smooth_floor = 1e-9;    // precision floor before the log
    int max_order = 4;
};

// Corpus-level BLEU: modified 1..4-gram precisions combined by geometric
// mean (default) with a brevity penalty.
double bleu(const std::vector<std::vector<std::string>>& candidates,
            const std::vector<std::vector<std::string>>& references,
            const BleuOptions& opts = {});

// LCS-based F-measure for one pair (balanced F1 by default; beta > 1
// weights recall).
double rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference, double beta = 1.0);

double rouge_l_corpus(const std::vector<std::vector<std::string>>& candidates,
                      const std::vector<std::vector<std::string>>& references,
                      double beta = 1.0);

double avg_length(const std::vector<std::vector<std::string>>& texts);

struct RankingReport {
    std::vector<int> ranks;  // per-query rank of the true match, 1-based
    int subset_size = 0;
    std::string direction;
};

// Queries and gallery are paired by row index; rank counts every gallery
// item at distance <= the true match's distance (ties pessimistic).
RankingReport rank(const Eigen::MatrixXd& query_embs,
                   const Eigen::MatrixXd& gallery_embs);

double median_rank(const std::vector<int>& ranks);
double recall_at_k(const std::vector<int>& ranks, int k);

struct RetEvalResult {
    double medr = 0.0;
    std::map<int, double> r_at_k;
    int subset_size = 0;
    int n_subsets = 0;
    std::string direction;
};

// Paper subset protocol: sample n_subsets subsets of subset_size pairs,
// compute MedR and R@K per subset, report the means. Deterministic per
// seed.
RetEvalResult ret_metrics(const Eigen::MatrixXd& query_embs,
                          const Eigen::MatrixXd& gallery_embs,
                          const std::vector<int>& ks, int subset_size,
                          int n_subsets, std::uint64_t seed,
                          const std::string& direction = "");

struct GenEvalResult {
    double perplexity = 0.0;
    double bleu = 0.0;
    double rouge_l = 0.0;
    double avg_length = 0.0;
};

}  // namespace sgn::metrics
