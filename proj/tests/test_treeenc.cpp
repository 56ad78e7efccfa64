#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "sgn/treeenc.hpp"
#include "sgn/treelib.hpp"

using namespace sgn;
using ad::Matrix;

namespace {

Matrix randm(int r, int c, std::mt19937_64& rng, double s = 0.5) {
    std::normal_distribution<double> nd(0.0, s);
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = nd(rng);
    return m;
}

}  // namespace

TEST_CASE("isolated node reduces to activated projection") {
    treeenc::GatConfig cfg;
    cfg.heads = 1;
    cfg.in_dim = 4;
    cfg.out_dim = 3;
    ad::ParamStore params;
    std::mt19937_64 rng(1);
    treeenc::init_gat(params, "g", cfg, rng);
    ad::Tape t;
    ad::ParamBinding p(t, params);
    Matrix feats = randm(1, 4, rng);
    auto out = treeenc::gat_layer(t, p, "g", cfg, t.leaf(feats),
                                  Matrix::Zero(1, 1));
    Matrix manual = (feats * params.at("g.W0")).array().tanh();
    CHECK((t.val(out) - manual).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("gat rejects asymmetric or mismatched adjacency") {
    treeenc::GatConfig cfg;
    cfg.in_dim = 4;
    ad::ParamStore params;
    std::mt19937_64 rng(2);
    treeenc::init_gat(params, "g", cfg, rng);
    ad::Tape t;
    ad::ParamBinding p(t, params);
    Matrix bad(2, 2);
    bad << 0, 1, 0, 0;
    CHECK_THROWS(treeenc::gat_layer(t, p, "g", cfg,
                                    t.leaf(randm(2, 4, rng)), bad));
    CHECK_THROWS(treeenc::gat_layer(t, p, "g", cfg,
                                    t.leaf(randm(3, 4, rng)),
                                    Matrix::Zero(2, 2)));
}

TEST_CASE("locality: output invariant to non-neighbour features") {
    treeenc::GatConfig cfg;
    cfg.heads = 2;
    cfg.in_dim = 5;
    cfg.out_dim = 4;
    ad::ParamStore params;
    std::mt19937_64 rng(3);
    treeenc::init_gat(params, "g", cfg, rng);
    // path graph 0-1-2-3: node 0's neighbourhood is {0,1}
    Matrix a = Matrix::Zero(4, 4);
    a(0, 1) = a(1, 0) = 1;
    a(1, 2) = a(2, 1) = 1;
    a(2, 3) = a(3, 2) = 1;
    Matrix feats = randm(4, 5, rng);
    ad::Tape t1;
    ad::ParamBinding p1(t1, params);
    auto out1 = treeenc::gat_layer(t1, p1, "g", cfg, t1.leaf(feats), a);

    Matrix perturbed = feats;
    perturbed.row(3).setConstant(7.0);  // not in N_0 or N_1
    ad::Tape t2;
    ad::ParamBinding p2(t2, params);
    auto out2 = treeenc::gat_layer(t2, p2, "g", cfg, t2.leaf(perturbed), a);
    CHECK((t1.val(out1).row(0) - t2.val(out2).row(0)).cwiseAbs().maxCoeff() <
          1e-12);
    CHECK((t1.val(out1).row(3) - t2.val(out2).row(3)).cwiseAbs().maxCoeff() >
          0.0);
}

TEST_CASE("gat matches brute-force neighbourhood attention") {
    treeenc::GatConfig cfg;
    cfg.heads = 1;
    cfg.in_dim = 4;
    cfg.out_dim = 3;
    ad::ParamStore params;
    std::mt19937_64 rng(4);
    treeenc::init_gat(params, "g", cfg, rng);
    auto tr = tree::random_tree(3, rng);
    Matrix a = tree::tree_to_adjacency_matrix(tr);
    int n = static_cast<int>(a.rows());
    Matrix feats = randm(n, 4, rng);
    ad::Tape t;
    ad::ParamBinding p(t, params);
    auto out = treeenc::gat_layer(t, p, "g", cfg, t.leaf(feats), a);

    Matrix z = feats * params.at("g.W0");
    for (int i = 0; i < n; ++i) {
        // softmax over neighbours plus self, then weighted sum of z rows
        std::vector<int> nbr;
        for (int j = 0; j < n; ++j)
            if (a(i, j) > 0 || i == j) nbr.push_back(j);
        double mx = -1e300;
        std::vector<double> e;
        for (int j : nbr) {
            e.push_back(z.row(i).dot(z.row(j)));
            mx = std::max(mx, e.back());
        }
        double zsum = 0.0;
        for (double& x : e) {
            x = std::exp(x - mx);
            zsum += x;
        }
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(3);
        for (size_t k = 0; k < nbr.size(); ++k)
            acc += (e[k] / zsum) * z.row(nbr[k]);
        Eigen::RowVectorXd expect = acc.array().tanh();
        CHECK((t.val(out).row(i) - expect).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("gat gradients match finite differences") {
    treeenc::GatConfig cfg;
    cfg.heads = 2;
    cfg.in_dim = 5;
    cfg.out_dim = 4;
    ad::ParamStore params;
    std::mt19937_64 rng(5);
    treeenc::init_gat(params, "g", cfg, rng);
    auto tr = tree::random_tree(4, rng);
    Matrix a = tree::tree_to_adjacency_matrix(tr);
    Matrix feats = randm(static_cast<int>(a.rows()), 5, rng);
    auto build = [&](ad::Tape& t, ad::ParamBinding& p) {
        auto out = treeenc::gat_layer(t, p, "g", cfg, t.leaf(feats), a);
        return t.mean(t.cmul(out, out));
    };
    CHECK(sgn::testing::fd_max_rel_err(params, build) < 1e-4);
}

TEST_CASE("generated-tree embedding is deterministic and shape-sensitive") {
    treeenc::GatConfig cfg;
    cfg.heads = 2;
    cfg.out_dim = 6;
    ad::ParamStore params;
    std::mt19937_64 rng(6);
    treeenc::init_gat(params, "g", cfg, rng);

    tree::AdjacencyVector v;
    v.bits = {1, 1, 0};
    ad::Tape t;
    ad::ParamBinding p(t, params);
    auto a = treeenc::embed_generated_tree(t, p, "g", cfg, v);
    auto b = treeenc::embed_generated_tree(t, p, "g", cfg, v);
    CHECK(t.val(a) == t.val(b));
    CHECK(t.val(a).cols() == 6);

    // single edge vs a deep comb give distinct embeddings
    tree::AdjacencyVector edge;
    edge.bits = {1};
    auto comb = tree::tree_to_adjacency_vector(
        tree::parse_from_scores({std::vector<double>(19, 0.5)}));
    auto ea = treeenc::embed_generated_tree(t, p, "g", cfg, edge);
    auto eb = treeenc::embed_generated_tree(t, p, "g", cfg, comb);
    CHECK((t.val(ea) - t.val(eb)).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("sentence node features: internal nodes are child means") {
    std::mt19937_64 rng(7);
    auto tr = tree::tree_from_text("(0,((1,2),3))");
    ad::Tape t;
    std::vector<ad::Var> leaves;
    for (int i = 0; i < 4; ++i) leaves.push_back(t.leaf(randm(1, 6, rng)));
    auto feats = treeenc::build_sentence_node_features(t, tr, leaves);
    const Matrix& f = t.val(feats);
    REQUIRE(f.rows() == tr.size());
    for (int i = 0; i < tr.size(); ++i) {
        const auto& node = tr.nodes[i];
        if (node.children.empty()) continue;
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(6);
        for (int c : node.children) mean += f.row(c);
        mean /= static_cast<double>(node.children.size());
        CHECK((f.row(i) - mean).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("parsed-tree embedding: base case, dims, gradients") {
    treeenc::ParsedTreeConfig cfg;
    cfg.sen_dim = 5;
    cfg.depth_dim = 3;
    cfg.heads = 2;
    cfg.out_dim = 7;
    ad::ParamStore params;
    std::mt19937_64 rng(8);
    treeenc::init_parsed(params, "pt", cfg, rng);

    // single leaf
    auto single = tree::tree_from_text("0");
    ad::Tape t;
    ad::ParamBinding p(t, params);
    auto e1 = treeenc::embed_parsed_tree(t, p, "pt", cfg, single,
                                         {t.leaf(randm(1, 5, rng))});
    CHECK(t.val(e1).rows() == 1);
    CHECK(t.val(e1).cols() == 7);
    CHECK(t.val(e1).allFinite());

    // leaf-count mismatch
    auto tr = tree::tree_from_text("(0,1)");
    CHECK_THROWS(treeenc::embed_parsed_tree(t, p, "pt", cfg, tr,
                                            {t.leaf(randm(1, 5, rng))}));

    // gradients through sentence embeddings and all parameters
    auto tr4 = tree::tree_from_text("(0,((1,2),3))");
    std::vector<Matrix> sents;
    for (int i = 0; i < 4; ++i) sents.push_back(randm(1, 5, rng));
    auto build = [&](ad::Tape& tt, ad::ParamBinding& pp) {
        std::vector<ad::Var> embs;
        for (const auto& s : sents) embs.push_back(tt.leaf(s));
        auto out = treeenc::embed_parsed_tree(tt, pp, "pt", cfg, tr4, embs);
        return tt.mean(tt.cmul(out, out));
    };
    CHECK(sgn::testing::fd_max_rel_err(params, build) < 1e-4);
}

TEST_CASE("parsed-tree embedding scales gracefully when features double") {
    treeenc::ParsedTreeConfig cfg;
    cfg.sen_dim = 4;
    cfg.heads = 1;
    cfg.out_dim = 4;
    ad::ParamStore params;
    std::mt19937_64 rng(9);
    treeenc::init_parsed(params, "pt", cfg, rng);
    auto tr = tree::tree_from_text("(0,(1,2))");
    ad::Tape t;
    ad::ParamBinding p(t, params);
    std::vector<ad::Var> embs, embs2;
    for (int i = 0; i < 3; ++i) {
        Matrix m = randm(1, 4, rng);
        embs.push_back(t.leaf(m));
        embs2.push_back(t.leaf(2.0 * m));
    }
    auto a = treeenc::embed_parsed_tree(t, p, "pt", cfg, tr, embs);
    auto b = treeenc::embed_parsed_tree(t, p, "pt", cfg, tr, embs2);
    CHECK(t.val(a).allFinite());
    CHECK(t.val(b).allFinite());
}
