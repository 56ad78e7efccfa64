#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "sgn/autodiff.hpp"
#include "sgn/corpus.hpp"
#include "sgn/img2tree.hpp"
#include "sgn/treeenc.hpp"
#include "sgn/treelib.hpp"

namespace sgn::generator {

struct JointLossWeights {
    double lambda1 = 1.0;
    double lambda2 = 0.5;
};

struct Config {
    int model_dim = 64;
    int layers = 2;
    int heads = 2;
    int ffn_dim = 128;
    int max_len = 150;  // M, maximum generated instruction length
    int d_img = 64;
    JointLossWeights weights;
    bool use_tree = true;  // ablation switch: zeroes the tree branch
    double lr = 0.003;
    double lr_decay = 0.99;
    int batch = 16;
    int epochs = 30;
    std::uint64_t seed = 1;
    img2tree::Config treegen;
    treeenc::GatConfig gat;

    static Config paper();  // 16 layers, 8 heads, Adam lr 0.001 x0.99
};

// Scaled dot-product attention: softmax(Q K^T / sqrt(d_k)) V. A zero in
// the optional mask bans that (query,key) pair.
ad::Var attention(ad::Tape& tape, ad::Var q, ad::Var k, ad::Var v,
                  const Eigen::MatrixXd* mask = nullptr);

void init_params(ad::ParamStore& params, const Config& cfg, int vocab_size,
                 std::mt19937_64& rng);

// Conditioning memory [F_img; F_ing; F_tree] as rows in the model dim.
ad::Var build_memory(ad::Tape& tape, ad::ParamBinding& p, const Config& cfg,
                     const Eigen::VectorXd& f_img,
                     const std::vector<int>& ingredient_ids, ad::Var f_tree);

struct ForwardOut {
    ad::Var loss;    // mean NLL of next tokens
    ad::Var logits;  // (L-1) x vocab
    std::vector<double> token_logprobs;  // log p of each ground-truth token
};

// Teacher-forced pass over a BOS...EOS framed target sequence.
ForwardOut teacher_forced_loss(ad::Tape& tape, ad::ParamBinding& p,
                               const Config& cfg,
                               const std::vector<int>& target, ad::Var memory);

double joint_loss(double l_gen, double l_tree, const JointLossWeights& w);
ad::Var joint_loss(ad::Tape& tape, ad::Var l_gen, ad::Var l_tree,
                   const JointLossWeights& w);

// Greedy decoding; stops at EOS or after max_len emitted tokens.
std::vector<int> decode_greedy(ad::ParamStore& params, const Config& cfg,
                               const Eigen::VectorXd& f_img,
                               const std::vector<int>& ingredient_ids,
                               const tree::AdjacencyVector* gen_tree,
                               int max_len);

struct TrainLogEntry {
    int epoch;
    double loss;
    double l_gen;
    double l_tree;
};

struct TrainResult {
    std::vector<TrainLogEntry> log;
};

// Joint training: teacher-forced tree NLL (against the pseudo-label tree)
// plus teacher-forced generation loss, combined with the trade-off
// weights. Training-time F_tree comes from the pseudo-label tree;
// inference uses generated trees.
TrainResult train_sgn(ad::ParamStore& params, const corpus::Corpus& corpus,
                      const corpus::Vocab& vocab,
                      const std::map<std::string, tree::SentenceTree>& trees,
                      const Config& cfg);

// Inference-path generation for one recipe: generate a tree from the
// image feature, embed it, decode greedily.
std::vector<int> generate_recipe(ad::ParamStore& params, const Config& cfg,
                                 const corpus::Vocab& vocab,
                                 const corpus::Recipe& recipe);

}  // namespace sgn::generator
