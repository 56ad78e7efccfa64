#pragma once

#include <random>

#include "sgn/autodiff.hpp"
#include "sgn/treelib.hpp"

namespace sgn::img2tree {

struct Config {
    int hidden = 64;
    int layers = 1;
    int max_nodes = tree::kMaxNodes;  // 37

    static Config paper();  // 2 layers, hidden 512
};

void init_params(ad::ParamStore& params, const Config& cfg, int d_img,
                 std::mt19937_64& rng);

enum class DecodeMode { Argmax, Sample };

// Teacher-forced negative log-likelihood of the adjacency sequence:
// element-wise binary cross-entropy on every block entry plus the
// per-step continuation targets. Summed, so a head emitting 0.5
// everywhere scores (#entries + #continuation) * ln 2.
ad::Var tree_nll(ad::Tape& tape, ad::ParamBinding& p, const Config& cfg,
                 const Eigen::VectorXd& f_img,
                 const tree::AdjacencyVector& v_gt,
                 std::vector<double>* per_step = nullptr);

// Autoregressive generation; argmax picks the single best parent per block
// (ties to the smallest index) so the output is tree-valid by
// construction. Stops when the continuation probability drops below 0.5
// or at max_nodes.
tree::AdjacencyVector generate_tree(ad::ParamStore& params, const Config& cfg,
                                    const Eigen::VectorXd& f_img,
                                    DecodeMode mode, int max_nodes,
                                    std::uint64_t seed = 0);

}  // namespace sgn::img2tree
