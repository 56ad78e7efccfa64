#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>
#include <random>

#include "helpers.hpp"
#include "sgn/corpus.hpp"
#include "sgn/generator.hpp"
#include "sgn/metrics.hpp"

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

generator::Config small_cfg(int vocab_hint = 0) {
    (void)vocab_hint;
    generator::Config c;
    c.model_dim = 16;
    c.layers = 1;
    c.heads = 2;
    c.ffn_dim = 24;
    c.max_len = 40;
    c.d_img = 24;
    c.treegen.hidden = 8;
    c.gat.heads = 1;
    c.gat.out_dim = 8;
    return c;
}

}  // namespace

TEST_CASE("attention: uniform case and single pair") {
    ad::Tape t;
    std::mt19937_64 rng(1);
    Matrix v = randm(3, 5, rng);
    // queries orthogonal to keys: all scores zero -> mean of V rows
    auto out = generator::attention(t, t.leaf(Matrix::Zero(2, 4)),
                                    t.leaf(randm(3, 4, rng)), t.leaf(v));
    Eigen::RowVectorXd mean = v.colwise().mean();
    for (int q = 0; q < 2; ++q)
        CHECK((t.val(out).row(q) - mean).cwiseAbs().maxCoeff() < 1e-9);

    Matrix single = randm(1, 5, rng);
    auto out2 = generator::attention(t, t.leaf(randm(2, 4, rng)),
                                     t.leaf(randm(1, 4, rng)),
                                     t.leaf(single));
    for (int q = 0; q < 2; ++q)
        CHECK((t.val(out2).row(q) - single.row(0)).cwiseAbs().maxCoeff() <
              1e-12);
}

TEST_CASE("attention matches brute-force recomputation") {
    std::mt19937_64 rng(2);
    Matrix q = randm(4, 8, rng), k = randm(4, 8, rng), v = randm(4, 8, rng);
    ad::Tape t;
    auto out = generator::attention(t, t.leaf(q), t.leaf(k), t.leaf(v));
    Matrix scores = q * k.transpose() / std::sqrt(8.0);
    for (int i = 0; i < 4; ++i) {
        Eigen::RowVectorXd e = scores.row(i).array().exp();
        Eigen::RowVectorXd alpha = e / e.sum();
        CHECK(alpha.sum() == doctest::Approx(1.0).epsilon(1e-9));
        Eigen::RowVectorXd expect = alpha * v;
        CHECK((t.val(out).row(i) - expect).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("attention mask bans pairs") {
    std::mt19937_64 rng(3);
    Matrix q = randm(2, 4, rng), k = randm(3, 4, rng), v = randm(3, 4, rng);
    Matrix mask(2, 3);
    mask << 1, 0, 0, 1, 1, 1;
    ad::Tape t;
    auto out = generator::attention(t, t.leaf(q), t.leaf(k), t.leaf(v), &mask);
    CHECK((t.val(out).row(0) - v.row(0)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("joint loss arithmetic") {
    generator::JointLossWeights w;
    CHECK(generator::joint_loss(2.0, 4.0, w) == doctest::Approx(4.0));
    w.lambda2 = 0.0;
    CHECK(generator::joint_loss(2.0, 4.0, w) == doctest::Approx(2.0));
    w.lambda1 = 3.0;
    w.lambda2 = 2.0;
    // linear in each argument
    CHECK(generator::joint_loss(1.0 + 2.0, 0.0, w) ==
          doctest::Approx(generator::joint_loss(1.0, 0.0, w) +
                          generator::joint_loss(2.0, 0.0, w)));
}

TEST_CASE("teacher forcing: causality and perplexity bridge") {
    auto cfg = small_cfg();
    int vocab_size = 12;
    ad::ParamStore params;
    std::mt19937_64 rng(4);
    generator::init_params(params, cfg, vocab_size, rng);
    Eigen::VectorXd f_img = Eigen::VectorXd::Random(cfg.d_img);
    std::vector<int> ingredients{4, 5};
    std::vector<int> target{corpus::Vocab::kBos, 6, 7, 8, 9, 10,
                            corpus::Vocab::kEos};

    ad::Tape t;
    ad::ParamBinding p(t, params);
    auto mem = generator::build_memory(t, p, cfg, f_img, ingredients,
                                       ad::Var{});
    auto fo = generator::teacher_forced_loss(t, p, cfg, target, mem);
    CHECK(t.val(fo.loss)(0, 0) ==
          doctest::Approx(-std::accumulate(fo.token_logprobs.begin(),
                                           fo.token_logprobs.end(), 0.0) /
                          fo.token_logprobs.size()));
    CHECK(metrics::perplexity(fo.token_logprobs) ==
          doctest::Approx(std::exp(t.val(fo.loss)(0, 0))).epsilon(1e-6));

    // perturb token at position j: logits before j unchanged
    for (int j : {3, 5}) {
        auto perturbed = target;
        perturbed[j] = 11;
        ad::Tape t2;
        ad::ParamBinding p2(t2, params);
        auto mem2 = generator::build_memory(t2, p2, cfg, f_img, ingredients,
                                            ad::Var{});
        auto fo2 = generator::teacher_forced_loss(t2, p2, cfg, perturbed,
                                                  mem2);
        for (int row = 0; row < j; ++row)
            CHECK((t.val(fo.logits).row(row) - t2.val(fo2.logits).row(row))
                      .cwiseAbs()
                      .maxCoeff() < 1e-9);
        CHECK((t.val(fo.logits).row(j) - t2.val(fo2.logits).row(j))
                  .cwiseAbs()
                  .maxCoeff() > 1e-9);
    }
}

TEST_CASE("gradients through the decoder match finite differences") {
    auto cfg = small_cfg();
    cfg.layers = 1;
    ad::ParamStore params;
    std::mt19937_64 rng(5);
    generator::init_params(params, cfg, 10, rng);
    Eigen::VectorXd f_img = Eigen::VectorXd::Random(cfg.d_img);
    std::vector<int> target{corpus::Vocab::kBos, 4, 5, corpus::Vocab::kEos};
    auto build = [&](ad::Tape& t, ad::ParamBinding& p) {
        auto mem = generator::build_memory(t, p, cfg, f_img, {6, 7},
                                           ad::Var{});
        return generator::teacher_forced_loss(t, p, cfg, target, mem).loss;
    };
    CHECK(sgn::testing::fd_max_rel_err(params, build, 1e-5, 3) < 1e-4);
}

TEST_CASE("greedy decoding determinism and max_len boundary") {
    auto cfg = small_cfg();
    ad::ParamStore params;
    std::mt19937_64 rng(6);
    generator::init_params(params, cfg, 10, rng);
    Eigen::VectorXd f_img = Eigen::VectorXd::Random(cfg.d_img);

    auto a = generator::decode_greedy(params, cfg, f_img, {4}, nullptr, 8);
    auto b = generator::decode_greedy(params, cfg, f_img, {4}, nullptr, 8);
    CHECK(a == b);
    CHECK(a.size() <= 8);

    // a length-1 budget yields the first token of the longer decode
    auto one = generator::decode_greedy(params, cfg, f_img, {4}, nullptr, 1);
    std::vector<int> prefix(a.begin(),
                            a.begin() + std::min<size_t>(1, a.size()));
    CHECK(one == prefix);
    CHECK(one.size() <= 1);
}

TEST_CASE("joint training runs, decreases, and is seed-reproducible") {
    corpus::SynthSpec spec;
    spec.n_recipes = 10;
    spec.sentence_min = 2;
    spec.sentence_max = 4;
    spec.seed = 3;
    spec.d_img = 24;
    auto data = corpus::synthesize_corpus(spec);
    auto vocab = corpus::build_vocab(data);
    std::map<std::string, tree::SentenceTree> trees;
    std::mt19937_64 rng(7);
    for (const auto& r : data.recipes)
        trees[r.id] = tree::random_tree(
            static_cast<int>(r.instructions.size()), rng);

    auto cfg = small_cfg();
    cfg.epochs = 5;
    cfg.batch = 4;
    cfg.seed = 9;
    ad::ParamStore pa, pb;
    auto ra = generator::train_sgn(pa, data, vocab, trees, cfg);
    auto rb = generator::train_sgn(pb, data, vocab, trees, cfg);
    REQUIRE(ra.log.size() == 5);
    CHECK(ra.log.back().loss == rb.log.back().loss);
    CHECK(ra.log.back().loss < ra.log.front().loss);

    // missing pseudo-tree is a named error
    trees.erase(data.recipes[0].id);
    ad::ParamStore pc;
    CHECK_THROWS_WITH_AS(generator::train_sgn(pc, data, vocab, trees, cfg),
                         doctest::Contains(data.recipes[0].id.c_str()),
                         std::runtime_error);
}

TEST_CASE("tree-disabled config ignores tree parameters") {
    corpus::SynthSpec spec;
    spec.n_recipes = 6;
    spec.sentence_min = 2;
    spec.sentence_max = 3;
    spec.seed = 4;
    spec.d_img = 24;
    auto data = corpus::synthesize_corpus(spec);
    auto vocab = corpus::build_vocab(data);
    std::map<std::string, tree::SentenceTree> trees;
    std::mt19937_64 rng(8);
    for (const auto& r : data.recipes)
        trees[r.id] = tree::random_tree(
            static_cast<int>(r.instructions.size()), rng);
    auto cfg = small_cfg();
    cfg.use_tree = false;
    cfg.weights.lambda2 = 0.0;
    cfg.epochs = 2;
    cfg.batch = 4;
    ad::ParamStore params;
    auto res = generator::train_sgn(params, data, vocab, trees, cfg);
    // with lambda2 = 0 and the tree branch zeroed, L = L_gen exactly
    for (const auto& e : res.log)
        CHECK(e.loss == doctest::Approx(e.l_gen).epsilon(1e-12));
}
