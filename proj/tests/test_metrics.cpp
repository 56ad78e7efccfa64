#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "sgn/metrics.hpp"

using namespace sgn;

namespace {
std::vector<std::string> words(std::initializer_list<const char*> w) {
    return std::vector<std::string>(w.begin(), w.end());
}
}  // namespace

TEST_CASE("perplexity closed forms") {
    std::vector<double> uniform(10, std::log(1.0 / 100.0));
    CHECK(metrics::perplexity(uniform) == doctest::Approx(100.0));
    std::vector<double> perfect(5, 0.0);
    CHECK(metrics::perplexity(perfect) == doctest::Approx(1.0));
    CHECK_THROWS(metrics::perplexity({}));
}

TEST_CASE("bleu hand-computed oracles") {
    auto ref = words({"a", "b", "c", "d", "e"});
    auto cand = words({"a", "b", "c", "d"});
    CHECK(metrics::bleu({ref}, {ref}) == doctest::Approx(1.0));
    // all precisions 1, brevity penalty exp(1 - 5/4)
    CHECK(metrics::bleu({cand}, {ref}) ==
          doctest::Approx(std::exp(1.0 - 5.0 / 4.0)).epsilon(1e-4));
    // disjoint vocabularies: smoothing floor only
    auto other = words({"x", "y", "z", "w"});
    CHECK(metrics::bleu({other}, {cand}) < 1e-6);
    CHECK_THROWS(metrics::bleu({}, {}));

    metrics::BleuOptions arith;
    arith.arithmetic_mean = true;
    CHECK(metrics::bleu({ref}, {ref}, arith) == doctest::Approx(1.0));
    CHECK(metrics::bleu({other}, {cand}, arith) == doctest::Approx(0.0));
}

TEST_CASE("bleu stays in [0,1] on random corpora") {
    std::mt19937_64 rng(5);
    std::vector<std::string> inventory{"a", "b", "c", "d", "e", "f"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::vector<std::string>> cands, refs;
        for (int i = 0; i < 4; ++i) {
            std::vector<std::string> c, r;
            for (size_t k = 0; k < 3 + rng() % 8; ++k)
                c.push_back(inventory[rng() % inventory.size()]);
            for (size_t k = 0; k < 3 + rng() % 8; ++k)
                r.push_back(inventory[rng() % inventory.size()]);
            cands.push_back(c);
            refs.push_back(r);
        }
        double b = metrics::bleu(cands, refs);
        CHECK(b >= 0.0);
        CHECK(b <= 1.0);
    }
}

TEST_CASE("rouge_l hand-computed oracles") {
    CHECK(metrics::rouge_l(words({"a", "b", "c"}), words({"a", "b", "c"})) ==
          doctest::Approx(1.0));
    // LCS=2, P=1, R=2/3 -> F1 = 0.8
    CHECK(metrics::rouge_l(words({"a", "c"}), words({"a", "b", "c"})) ==
          doctest::Approx(0.8).epsilon(1e-4));
    CHECK(metrics::rouge_l(words({"x"}), words({"a", "b"})) ==
          doctest::Approx(0.0));
    CHECK_THROWS(metrics::rouge_l(words({"a"}), {}));
    // recall-weighted variant moves toward recall
    double f2 = metrics::rouge_l(words({"a", "c"}), words({"a", "b", "c"}),
                                 2.0);
    CHECK(f2 < 0.8);
    CHECK(f2 > 2.0 / 3.0);
}

TEST_CASE("avg length") {
    CHECK(metrics::avg_length({words({"a", "b"}), words({"a"})}) ==
          doctest::Approx(1.5));
    CHECK(metrics::avg_length({}) == doctest::Approx(0.0));
}

TEST_CASE("rank agrees with brute-force sort oracle") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 100; ++trial) {
        int n = 5 + static_cast<int>(rng() % 20);
        int d = 4;
        Eigen::MatrixXd q(n, d), g(n, d);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) {
                q(i, j) = nd(rng);
                g(i, j) = nd(rng);
            }
        auto rep = metrics::rank(q, g);
        for (int i = 0; i < n; ++i) {
            std::vector<double> dist;
            for (int k = 0; k < n; ++k)
                dist.push_back((q.row(i) - g.row(k)).norm());
            double d_true = dist[i];
            // pessimistic: position after every item at distance <= d_true
            std::sort(dist.begin(), dist.end());
            int pos = static_cast<int>(
                std::upper_bound(dist.begin(), dist.end(), d_true) -
                dist.begin());
            CHECK(rep.ranks[i] == pos);
        }
    }
}

TEST_CASE("rank boundary cases") {
    Eigen::MatrixXd q(2, 2), g(2, 2);
    q << 0, 0, 10, 10;
    g << 0, 0, 10, 10;
    auto rep = metrics::rank(q, g);
    CHECK(rep.ranks == std::vector<int>({1, 1}));
    CHECK_THROWS(metrics::rank(Eigen::MatrixXd(), Eigen::MatrixXd()));
}

TEST_CASE("median rank") {
    CHECK(metrics::median_rank({3, 1, 2}) == doctest::Approx(2.0));
    CHECK(metrics::median_rank({4, 1, 2, 3}) == doctest::Approx(2.5));
    CHECK_THROWS(metrics::median_rank({}));
}

TEST_CASE("recall at k") {
    std::vector<int> ranks{1, 2, 7, 11};
    CHECK(metrics::recall_at_k(ranks, 1) == doctest::Approx(0.25));
    CHECK(metrics::recall_at_k(ranks, 5) == doctest::Approx(0.5));
    CHECK(metrics::recall_at_k(ranks, 10) == doctest::Approx(0.75));
}

TEST_CASE("ret_metrics perfect retrieval") {
    Eigen::MatrixXd e = Eigen::MatrixXd::Identity(30, 30);
    auto r = metrics::ret_metrics(e, e, {1, 5, 10}, 20, 5, 3);
    CHECK(r.medr == doctest::Approx(1.0));
    CHECK(r.r_at_k.at(1) == doctest::Approx(1.0));
}

TEST_CASE("ret_metrics deterministic per seed and monotone in K") {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd q(150, 6), g(150, 6);
    for (int i = 0; i < 150; ++i)
        for (int j = 0; j < 6; ++j) {
            q(i, j) = nd(rng);
            g(i, j) = nd(rng);
        }
    auto a = metrics::ret_metrics(q, g, {1, 5, 10}, 100, 10, 99);
    auto b = metrics::ret_metrics(q, g, {1, 5, 10}, 100, 10, 99);
    CHECK(a.medr == b.medr);
    CHECK(a.r_at_k == b.r_at_k);
    CHECK(a.r_at_k.at(1) <= a.r_at_k.at(5));
    CHECK(a.r_at_k.at(5) <= a.r_at_k.at(10));
    CHECK(a.medr >= 1.0);
    CHECK(a.medr <= 100.0);
    CHECK_THROWS(metrics::ret_metrics(q, g, {1}, 200, 10, 1));
}

TEST_CASE("ret_metrics chance level on random embeddings") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd q(120, 8), g(120, 8);
    for (int i = 0; i < 120; ++i)
        for (int j = 0; j < 8; ++j) {
            q(i, j) = nd(rng);
            g(i, j) = nd(rng);
        }
    auto r = metrics::ret_metrics(q, g, {1}, 100, 10, 5);
    // expected R@1 ~ 0.01, MedR ~ 50; generous statistical tolerance
    CHECK(r.r_at_k.at(1) < 0.08);
    CHECK(r.medr > 20.0);
    CHECK(r.medr < 80.0);
}
