#pragma once

#include <random>
#include <string>
#include <vector>

#include "sgn/autodiff.hpp"
#include "sgn/treelib.hpp"

namespace sgn::treeenc {

enum class Activation { Tanh, Sigmoid, Relu };
enum class Pooling { Mean, Root };

struct GatConfig {
    int heads = 6;
    int in_dim = tree::kMaxNodes;  // adjacency rows padded to 37
    int out_dim = 64;              // matches the image-feature dim
    Activation activation = Activation::Tanh;
    Pooling pooling = Pooling::Mean;
};

void init_gat(ad::ParamStore& params, const std::string& prefix,
              const GatConfig& cfg, std::mt19937_64& rng);

// One multi-head graph-attention pass. feats is N x in_dim, adjacency is
// the symmetric N x N matrix; attention is restricted to neighbours plus
// self. Head outputs are averaged.
ad::Var gat_layer(ad::Tape& tape, ad::ParamBinding& p,
                  const std::string& prefix, const GatConfig& cfg,
                  ad::Var feats, const Eigen::MatrixXd& adjacency);

// Generation-side variant: node features are the adjacency rows padded to
// kMaxNodes columns, projected by the per-head attention weights.
ad::Var embed_generated_tree(ad::Tape& tape, ad::ParamBinding& p,
                             const std::string& prefix, const GatConfig& cfg,
                             const tree::AdjacencyVector& v);

struct ParsedTreeConfig {
    int sen_dim = 32;    // sentence-embedding width
    int depth_dim = 8;   // learned depth-embedding width
    int heads = 8;
    int out_dim = 64;
    bool use_depth = true;
    Activation activation = Activation::Tanh;
    Pooling pooling = Pooling::Mean;
};

void init_parsed(ad::ParamStore& params, const std::string& prefix,
                 const ParsedTreeConfig& cfg, std::mt19937_64& rng);

// Leaf rows are the sentence embeddings; each internal row is the mean of
// its children's rows. Returns N x sen_dim ordered by node index.
ad::Var build_sentence_node_features(ad::Tape& tape,
                                     const tree::SentenceTree& t,
                                     const std::vector<ad::Var>& leaf_embs);

// Retrieval-side variant: node features concat(f_sen, f_depth), attention
// scores are raw feature dot products, per-head value projections map to
// out_dim.
ad::Var embed_parsed_tree(ad::Tape& tape, ad::ParamBinding& p,
                          const std::string& prefix,
                          const ParsedTreeConfig& cfg,
                          const tree::SentenceTree& t,
                          const std::vector<ad::Var>& sentence_embs);

}  // namespace sgn::treeenc
