#include "sgn/generator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sgn::generator {

using ad::Matrix;
using ad::Tape;
using ad::Var;

Config Config::paper() {
    Config c;
    c.model_dim = 512;
    c.layers = 16;
    c.heads = 8;
    c.ffn_dim = 2048;
    c.max_len = 150;
    c.d_img = 512;
    c.lr = 0.001;
    c.lr_decay = 0.99;
    c.batch = 16;
    c.treegen = img2tree::Config::paper();
    c.gat.heads = 6;
    c.gat.out_dim = 512;
    return c;
}

Var attention(Tape& t, Var q, Var k, Var v, const Matrix* mask) {
    if (t.val(q).cols() != t.val(k).cols())
        throw std::invalid_argument("attention: Q/K dim mismatch");
    if (t.val(k).rows() != t.val(v).rows())
        throw std::invalid_argument("attention: K/V row mismatch");
    double d_k = static_cast<double>(t.val(k).cols());
    Var scores = t.scale(t.matmul(q, t.transpose(k)), 1.0 / std::sqrt(d_k));
    Var alpha = mask ? t.masked_softmax_rows(scores, *mask)
                     : t.softmax_rows(scores);
    return t.matmul(alpha, v);
}

namespace {

void init_linear(ad::ParamStore& params, const std::string& name, int in,
                 int out, std::mt19937_64& rng) {
    double r = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-r, r);
    params.init(name + ".W", in, out, [&]() { return u(rng); });
    params.init(name + ".b", 1, out, [] { return 0.0; });
}

Var linear(Tape& t, ad::ParamBinding& p, const std::string& name, Var x) {
    return t.add_rowwise(t.matmul(x, p(name + ".W")), p(name + ".b"));
}

void init_ln(ad::ParamStore& params, const std::string& name, int dim) {
    params.init(name + ".g", 1, dim, [] { return 1.0; });
    params.init(name + ".b", 1, dim, [] { return 0.0; });
}

Var ln(Tape& t, ad::ParamBinding& p, const std::string& name, Var x) {
    return t.layer_norm_rows(x, p(name + ".g"), p(name + ".b"));
}

// Multi-head attention with per-head slices of the projected Q/K/V.
Var multi_head(Tape& t, ad::ParamBinding& p, const std::string& name,
               const Config& cfg, Var x_q, Var x_kv, const Matrix* mask) {
    Var q = linear(t, p, name + ".q", x_q);
    Var k = linear(t, p, name + ".k", x_kv);
    Var v = linear(t, p, name + ".v", x_kv);
    int dh = cfg.model_dim / cfg.heads;
    std::vector<Var> heads;
    for (int h = 0; h < cfg.heads; ++h) {
        Var qh = t.cols(q, h * dh, dh);
        Var kh = t.cols(k, h * dh, dh);
        Var vh = t.cols(v, h * dh, dh);
        heads.push_back(attention(t, qh, kh, vh, mask));
    }
    return linear(t, p, name + ".o", t.concat_cols(heads));
}

Matrix causal_mask(int n) {
    Matrix m = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) m(i, j) = 1.0;
    return m;
}

Var decoder_stack(Tape& t, ad::ParamBinding& p, const Config& cfg, Var x,
                  Var memory) {
    int n = static_cast<int>(t.val(x).rows());
    Matrix mask = causal_mask(n);
    for (int l = 0; l < cfg.layers; ++l) {
        std::string lp = "gen.layer" + std::to_string(l);
        Var h = multi_head(t, p, lp + ".self", cfg, ln(t, p, lp + ".ln1", x),
                           ln(t, p, lp + ".ln1", x), &mask);
        x = t.add(x, h);
        Var c = multi_head(t, p, lp + ".cross", cfg, ln(t, p, lp + ".ln2", x),
                           memory, nullptr);
        x = t.add(x, c);
        Var f = ln(t, p, lp + ".ln3", x);
        f = linear(t, p, lp + ".ffn2",
                   t.relu(linear(t, p, lp + ".ffn1", f)));
        x = t.add(x, f);
    }
    return ln(t, p, "gen.ln_final", x);
}

Var embed_tokens(Tape& t, ad::ParamBinding& p, const Config&,
                 const std::vector<int>& tokens) {
    Var e = t.row_select(p("gen.embed"), tokens);
    std::vector<int> pos(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i)
        pos[i] = static_cast<int>(i);
    return t.add(e, t.row_select(p("gen.pos"), pos));
}

}  // namespace

void init_params(ad::ParamStore& params, const Config& cfg, int vocab_size,
                 std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 0.1);
    params.init("gen.embed", vocab_size, cfg.model_dim,
                [&]() { return nd(rng); });
    params.init("gen.pos", cfg.max_len + 2, cfg.model_dim,
                [&]() { return nd(rng); });
    params.init("gen.ing_embed", vocab_size, cfg.model_dim,
                [&]() { return nd(rng); });
    init_linear(params, "gen.img_proj", cfg.d_img, cfg.model_dim, rng);
    init_linear(params, "gen.tree_proj", cfg.gat.out_dim, cfg.model_dim, rng);
    for (int l = 0; l < cfg.layers; ++l) {
        std::string lp = "gen.layer" + std::to_string(l);
        for (const char* blk : {".self", ".cross"})
            for (const char* proj : {".q", ".k", ".v", ".o"})
                init_linear(params, lp + blk + proj, cfg.model_dim,
                            cfg.model_dim, rng);
        init_ln(params, lp + ".ln1", cfg.model_dim);
        init_ln(params, lp + ".ln2", cfg.model_dim);
        init_ln(params, lp + ".ln3", cfg.model_dim);
        init_linear(params, lp + ".ffn1", cfg.model_dim, cfg.ffn_dim, rng);
        init_linear(params, lp + ".ffn2", cfg.ffn_dim, cfg.model_dim, rng);
    }
    init_ln(params, "gen.ln_final", cfg.model_dim);
    init_linear(params, "gen.head", cfg.model_dim, vocab_size, rng);
}

Var build_memory(Tape& t, ad::ParamBinding& p, const Config& cfg,
                 const Eigen::VectorXd& f_img,
                 const std::vector<int>& ingredient_ids, Var f_tree) {
    Var img = linear(t, p, "gen.img_proj", t.leaf(f_img.transpose()));
    Var ing = t.mean_rows(t.row_select(p("gen.ing_embed"), ingredient_ids));
    Var tree_slot = f_tree.valid()
                        ? linear(t, p, "gen.tree_proj", f_tree)
                        : t.leaf(Matrix::Zero(1, cfg.model_dim));
    return t.concat_rows({img, ing, tree_slot});
}

ForwardOut teacher_forced_loss(Tape& t, ad::ParamBinding& p, const Config& cfg,
                               const std::vector<int>& target, Var memory) {
    if (static_cast<int>(target.size()) > cfg.max_len + 2)
        throw std::invalid_argument("teacher_forced_loss: sequence beyond M");
    if (target.size() < 2)
        throw std::invalid_argument("teacher_forced_loss: need BOS/EOS frame");
    std::vector<int> input(target.begin(), target.end() - 1);
    std::vector<int> next(target.begin() + 1, target.end());
    Var x = embed_tokens(t, p, cfg, input);
    Var h = decoder_stack(t, p, cfg, x, memory);
    Var logits = linear(t, p, "gen.head", h);
    ForwardOut out;
    out.logits = logits;
    out.loss = t.cross_entropy_mean(logits, next);
    const Matrix& z = t.val(logits);
    for (size_t i = 0; i < next.size(); ++i) {
        Eigen::ArrayXd r = z.row(static_cast<int>(i)).array();
        double m = r.maxCoeff();
        double lse = m + std::log((r - m).exp().sum());
        out.token_logprobs.push_back(z(static_cast<int>(i), next[i]) - lse);
    }
    return out;
}

double joint_loss(double l_gen, double l_tree, const JointLossWeights& w) {
    return w.lambda1 * l_gen + w.lambda2 * l_tree;
}

Var joint_loss(Tape& t, Var l_gen, Var l_tree, const JointLossWeights& w) {
    return t.add(t.scale(l_gen, w.lambda1), t.scale(l_tree, w.lambda2));
}

std::vector<int> decode_greedy(ad::ParamStore& params, const Config& cfg,
                               const Eigen::VectorXd& f_img,
                               const std::vector<int>& ingredient_ids,
                               const tree::AdjacencyVector* gen_tree,
                               int max_len) {
    std::vector<int> out;
    std::vector<int> prefix{corpus::Vocab::kBos};
    for (int step = 0; step < max_len; ++step) {
        Tape t;
        ad::ParamBinding p(t, params);
        Var f_tree;
        if (cfg.use_tree && gen_tree)
            f_tree = treeenc::embed_generated_tree(t, p, "gat", cfg.gat,
                                                   *gen_tree);
        Var memory = build_memory(t, p, cfg, f_img, ingredient_ids, f_tree);
        Var x = embed_tokens(t, p, cfg, prefix);
        Var h = decoder_stack(t, p, cfg, x, memory);
        Var logits = linear(t, p, "gen.head", h);
        int last = static_cast<int>(prefix.size()) - 1;
        int tok = 0;
        t.val(logits).row(last).maxCoeff(&tok);
        if (tok == corpus::Vocab::kEos) break;
        out.push_back(tok);
        prefix.push_back(tok);
        if (static_cast<int>(prefix.size()) >= cfg.max_len + 1) break;
    }
    return out;
}

TrainResult train_sgn(ad::ParamStore& params, const corpus::Corpus& corpus_,
                      const corpus::Vocab& vocab,
                      const std::map<std::string, tree::SentenceTree>& trees,
                      const Config& cfg) {
    std::mt19937_64 rng(cfg.seed);
    init_params(params, cfg, vocab.size(), rng);
    img2tree::init_params(params, cfg.treegen, cfg.d_img, rng);
    {
        std::mt19937_64 gat_rng(cfg.seed + 17);
        treeenc::init_gat(params, "gat", cfg.gat, gat_rng);
    }
    std::vector<corpus::EncodedRecipe> enc;
    std::vector<tree::AdjacencyVector> gt_trees;
    for (const auto& r : corpus_.recipes) {
        auto it = trees.find(r.id);
        if (it == trees.end())
            throw std::runtime_error("train_sgn: missing pseudo-tree for " +
                                     r.id);
        enc.push_back(corpus::encode_recipe(r, vocab));
        gt_trees.push_back(tree::tree_to_adjacency_vector(it->second));
    }
    ad::AdamState adam;
    TrainResult result;
    double lr = cfg.lr;
    std::vector<int> order(enc.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum_l = 0.0, sum_gen = 0.0, sum_tree = 0.0;
        size_t i = 0;
        while (i < order.size()) {
            std::map<std::string, Matrix> grads;
            int in_batch = 0;
            for (; i < order.size() && in_batch < cfg.batch;
                 ++i, ++in_batch) {
                int ri = order[i];
                Tape t;
                ad::ParamBinding p(t, params);
                Var l_tree;
                Var f_tree;
                if (cfg.use_tree) {
                    l_tree = img2tree::tree_nll(
                        t, p, cfg.treegen,
                        corpus_.recipes[ri].image_feature, gt_trees[ri]);
                    f_tree = treeenc::embed_generated_tree(
                        t, p, "gat", cfg.gat, gt_trees[ri]);
                } else {
                    l_tree = t.leaf(Matrix::Zero(1, 1));
                }
                Var memory =
                    build_memory(t, p, cfg, corpus_.recipes[ri].image_feature,
                                 enc[ri].ingredients, f_tree);
                ForwardOut fo =
                    teacher_forced_loss(t, p, cfg, enc[ri].target, memory);
                Var total = joint_loss(t, fo.loss, l_tree, cfg.weights);
                t.backward(total);
                p.collect_grads(grads);
                sum_l += t.val(total)(0, 0);
                sum_gen += t.val(fo.loss)(0, 0);
                sum_tree += t.val(l_tree)(0, 0);
            }
            for (auto& [k, g] : grads) g /= static_cast<double>(in_batch);
            ad::adam_step(params, grads, adam, lr);
        }
        double n = static_cast<double>(order.size());
        result.log.push_back({epoch, sum_l / n, sum_gen / n, sum_tree / n});
        lr *= cfg.lr_decay;
    }
    return result;
}

std::vector<int> generate_recipe(ad::ParamStore& params, const Config& cfg,
                                 const corpus::Vocab& vocab,
                                 const corpus::Recipe& recipe) {
    std::vector<int> ing_ids;
    for (const auto& t : recipe.ingredients)
        ing_ids.push_back(vocab.index(t));
    tree::AdjacencyVector gen_tree;
    if (cfg.use_tree)
        gen_tree = img2tree::generate_tree(params, cfg.treegen,
                                           recipe.image_feature,
                                           img2tree::DecodeMode::Argmax,
                                           cfg.treegen.max_nodes);
    return decode_greedy(params, cfg, recipe.image_feature, ing_ids,
                         cfg.use_tree ? &gen_tree : nullptr, cfg.max_len);
}

}  // namespace sgn::generator
