#include "sgn/treeenc.hpp"

#include <stdexcept>

namespace sgn::treeenc {

using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

Var apply_activation(Tape& t, Var x, Activation a) {
    switch (a) {
        case Activation::Tanh:
            return t.tanh_(x);
        case Activation::Sigmoid:
            return t.sigmoid(x);
        case Activation::Relu:
            return t.relu(x);
    }
    throw std::logic_error("unknown activation");
}

Matrix neighborhood_mask(const Matrix& adjacency) {
    int n = static_cast<int>(adjacency.rows());
    Matrix mask = Matrix::Identity(n, n);  // self-loops
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (adjacency(i, j) != 0.0) mask(i, j) = 1.0;
    return mask;
}

Var pool(Tape& t, Var node_outputs, Pooling p) {
    if (p == Pooling::Root) return t.rows(node_outputs, 0, 1);
    return t.mean_rows(node_outputs);
}

}  // namespace

void init_gat(ad::ParamStore& params, const std::string& prefix,
              const GatConfig& cfg, std::mt19937_64& rng) {
    double r = 1.0 / std::sqrt(static_cast<double>(cfg.in_dim));
    std::uniform_real_distribution<double> u(-r, r);
    for (int h = 0; h < cfg.heads; ++h)
        params.init(prefix + ".W" + std::to_string(h), cfg.in_dim, cfg.out_dim,
                    [&]() { return u(rng); });
}

Var gat_layer(Tape& t, ad::ParamBinding& p, const std::string& prefix,
              const GatConfig& cfg, Var feats, const Matrix& adjacency) {
    if (adjacency.rows() != adjacency.cols())
        throw std::invalid_argument("gat_layer: adjacency must be square");
    if (!adjacency.isApprox(adjacency.transpose()))
        throw std::invalid_argument("gat_layer: adjacency must be symmetric");
    if (t.val(feats).rows() != adjacency.rows())
        throw std::invalid_argument("gat_layer: feature count != node count");
    Matrix mask = neighborhood_mask(adjacency);
    std::vector<Var> heads;
    for (int h = 0; h < cfg.heads; ++h) {
        Var z = t.matmul(feats, p(prefix + ".W" + std::to_string(h)));
        Var e = t.matmul(z, t.transpose(z));
        Var alpha = t.masked_softmax_rows(e, mask);
        heads.push_back(apply_activation(t, t.matmul(alpha, z),
                                         cfg.activation));
    }
    Var out = heads[0];
    for (int h = 1; h < cfg.heads; ++h) out = t.add(out, heads[h]);
    return t.scale(out, 1.0 / static_cast<double>(cfg.heads));
}

Var embed_generated_tree(Tape& t, ad::ParamBinding& p,
                         const std::string& prefix, const GatConfig& cfg,
                         const tree::AdjacencyVector& v) {
    if (!tree::tree_valid(v))
        throw std::invalid_argument(
            "embed_generated_tree: adjacency vector not tree-valid");
    tree::SentenceTree tr = tree::adjacency_vector_to_tree(v);
    Matrix a = tree::tree_to_adjacency_matrix(tr);
    int n = static_cast<int>(a.rows());
    Matrix feats = Matrix::Zero(n, cfg.in_dim);
    feats.topLeftCorner(n, n) = a;
    Var out = gat_layer(t, p, prefix, cfg, t.leaf(feats), a);
    return pool(t, out, cfg.pooling);
}

void init_parsed(ad::ParamStore& params, const std::string& prefix,
                 const ParsedTreeConfig& cfg, std::mt19937_64& rng) {
    int in_dim = cfg.sen_dim + (cfg.use_depth ? cfg.depth_dim : 0);
    double r = 1.0 / std::sqrt(static_cast<double>(in_dim));
    std::uniform_real_distribution<double> u(-r, r);
    if (cfg.use_depth) {
        std::normal_distribution<double> nd(0.0, 0.1);
        params.init(prefix + ".depth", tree::kMaxNodes, cfg.depth_dim,
                    [&]() { return nd(rng); });
    }
    for (int h = 0; h < cfg.heads; ++h)
        params.init(prefix + ".W" + std::to_string(h), in_dim, cfg.out_dim,
                    [&]() { return u(rng); });
}

Var build_sentence_node_features(Tape& t, const tree::SentenceTree& tr,
                                 const std::vector<ad::Var>& leaf_embs) {
    if (tr.leaf_count() != static_cast<int>(leaf_embs.size()))
        throw std::invalid_argument(
            "build_sentence_node_features: leaf count mismatch");
    std::vector<Var> rows(tr.size());
    // Children always have larger indices, so a reverse sweep sees every
    // child before its parent.
    for (int i = tr.size() - 1; i >= 0; --i) {
        const auto& node = tr.nodes[i];
        if (node.children.empty()) {
            rows[i] = leaf_embs[node.sentence];
        } else {
            Var sum = rows[node.children[0]];
            for (size_t k = 1; k < node.children.size(); ++k)
                sum = t.add(sum, rows[node.children[k]]);
            rows[i] = t.scale(sum,
                              1.0 / static_cast<double>(node.children.size()));
        }
    }
    return t.concat_rows(rows);
}

Var embed_parsed_tree(Tape& t, ad::ParamBinding& p, const std::string& prefix,
                      const ParsedTreeConfig& cfg, const tree::SentenceTree& tr,
                      const std::vector<ad::Var>& sentence_embs) {
    Var f_sen = build_sentence_node_features(t, tr, sentence_embs);
    Var f_node = f_sen;
    if (cfg.use_depth) {
        std::vector<int> depths = tree::node_depths(tr);
        for (auto& d : depths) d = std::min(d, tree::kMaxNodes - 1);
        Var f_depth = t.row_select(p(prefix + ".depth"), depths);
        f_node = t.concat_cols({f_sen, f_depth});
    }
    Matrix a = tree::tree_to_adjacency_matrix(tr);
    Matrix mask = neighborhood_mask(a);
    // Raw feature dot products score the attention; the projections W_h
    // only shape the aggregated values.
    Var e = t.matmul(f_node, t.transpose(f_node));
    Var alpha = t.masked_softmax_rows(e, mask);
    std::vector<Var> heads;
    for (int h = 0; h < cfg.heads; ++h) {
        Var vals = t.matmul(f_node, p(prefix + ".W" + std::to_string(h)));
        heads.push_back(
            apply_activation(t, t.matmul(alpha, vals), cfg.activation));
    }
    Var out = heads[0];
    for (int h = 1; h < cfg.heads; ++h) out = t.add(out, heads[h]);
    out = t.scale(out, 1.0 / static_cast<double>(cfg.heads));
    return pool(t, out, cfg.pooling);
}

}  // namespace sgn::treeenc
