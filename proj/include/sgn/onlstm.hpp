#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "sgn/autodiff.hpp"
#include "sgn/corpus.hpp"
#include "sgn/treelib.hpp"

namespace sgn::onlstm {

struct Config {
    int embed_dim = 32;
    int hidden = 32;   // D_m: master-gate split points
    int layers = 2;
    int k_distractors = 3;   // K
    int min_sentences = 5;   // train on recipes with more than 4 sentences
    double lr = 3.0;
    int batch = 16;
    int epochs = 50;
    std::uint64_t seed = 1;

    static Config paper();  // 3 layers, embed 400, lr 1, batch 60, K 3
};

// Registers all recipe2tree tensors (word/sentence cells + embedding).
void init_params(ad::ParamStore& params, const Config& cfg, int vocab_size,
                 std::mt19937_64& rng);

struct CellStep {
    ad::Var h, c;
    ad::Var d_f, d_i;  // split-point distributions (softmax outputs)
};

// One ordered-neurons step for a single layer. x is 1xI, state 1xD.
CellStep ordered_cell_step(ad::Tape& tape, ad::ParamBinding& p,
                           const std::string& prefix, ad::Var x, ad::Var h_prev,
                           ad::Var c_prev);

// Expected split depth of a split distribution, in [1, D_m].
double expected_split(const Eigen::RowVectorXd& p_f, double tol = 1e-5);

struct HierOutput {
    std::vector<ad::Var> sentence_embs;  // g(s_j), 1xD each
    ad::Var context_emb;                 // f over all provided sentences
    tree::SplitScores scores;            // from the top sentence-level layer
};

// Word-level cell embeds each sentence; the sentence-level cell consumes
// the sentence embeddings in order.
HierOutput encode_hierarchical(ad::Tape& tape, ad::ParamBinding& p,
                               const Config& cfg,
                               const std::vector<std::vector<int>>& sentences);

// Softmax over inner products between the context embedding and each
// candidate embedding; returns the logits row (1 x K+1).
ad::Var qt_logits(ad::Tape& tape, ad::Var f_ctxt,
                  const std::vector<ad::Var>& cand_embs);

struct TrainLogEntry {
    int epoch;
    double loss;
    double accuracy;
};

struct TrainResult {
    std::vector<TrainLogEntry> log;
};

// Quick-thoughts training by stochastic gradient descent; deterministic
// for a fixed config seed.
TrainResult train_recipe2tree(ad::ParamStore& params,
                              const corpus::Corpus& corpus,
                              const corpus::Vocab& vocab, const Config& cfg);

// Next-sentence identification accuracy over freshly sampled batches.
double qt_accuracy(ad::ParamStore& params, const corpus::Corpus& corpus,
                   const corpus::Vocab& vocab, const Config& cfg,
                   std::uint64_t seed);

std::map<std::string, tree::SentenceTree> derive_pseudo_trees(
    ad::ParamStore& params, const corpus::Corpus& corpus,
    const corpus::Vocab& vocab, const Config& cfg);

}  // namespace sgn::onlstm
