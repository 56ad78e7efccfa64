#include "sgn/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "sgn/generator.hpp"  // attention()

namespace sgn::retrieval {

using ad::Matrix;
using ad::Tape;
using ad::Var;

Config Config::paper() {
    Config c;
    c.common_dim = 1024;
    c.enc_layers = 4;
    c.batch = 64;
    c.lr = 0.0001;
    c.lr_drop_epoch = 30;
    c.tree_cfg.heads = 8;
    return c;
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

void init_gru(ad::ParamStore& params, const std::string& prefix, int input,
              int hidden, std::mt19937_64& rng) {
    double r = 1.0 / std::sqrt(static_cast<double>(hidden));
    std::uniform_real_distribution<double> u(-r, r);
    auto gen = [&]() { return u(rng); };
    for (const char* g : {"z", "r", "h"}) {
        params.init(prefix + ".W" + g, input, hidden, gen);
        params.init(prefix + ".U" + g, hidden, hidden, gen);
        params.init(prefix + ".b" + g, 1, hidden, [] { return 0.0; });
    }
}

Var gru_step(Tape& t, ad::ParamBinding& p, const std::string& prefix, Var x,
             Var h) {
    auto lin = [&](const char* g, Var hh) {
        return t.add_rowwise(t.add(t.matmul(x, p(prefix + ".W" + g)),
                                   t.matmul(hh, p(prefix + ".U" + g))),
                             p(prefix + ".b" + g));
    };
    Var z = t.sigmoid(lin("z", h));
    Var r = t.sigmoid(lin("r", h));
    Var h_tilde = t.tanh_(t.add_rowwise(
        t.add(t.matmul(x, p(prefix + ".Wh")),
              t.matmul(t.cmul(r, h), p(prefix + ".Uh"))),
        p(prefix + ".bh")));
    Var omz = t.add_scalar(t.neg(z), 1.0);
    return t.add(t.cmul(omz, h), t.cmul(z, h_tilde));
}

// Bidirectional recurrent pass with self-attention pooling: the final
// state queries the per-step outputs.
Var bigru_attend(Tape& t, ad::ParamBinding& p, const std::string& prefix,
                 int hidden, Var seq) {
    int n = static_cast<int>(t.val(seq).rows());
    std::vector<Var> fwd(n), bwd(n);
    Var h = t.leaf(Matrix::Zero(1, hidden));
    for (int i = 0; i < n; ++i) {
        h = gru_step(t, p, prefix + ".fwd", t.rows(seq, i, 1), h);
        fwd[i] = h;
    }
    h = t.leaf(Matrix::Zero(1, hidden));
    for (int i = n - 1; i >= 0; --i) {
        h = gru_step(t, p, prefix + ".bwd", t.rows(seq, i, 1), h);
        bwd[i] = h;
    }
    std::vector<Var> steps;
    for (int i = 0; i < n; ++i)
        steps.push_back(t.concat_cols({fwd[i], bwd[i]}));
    Var outputs = t.concat_rows(steps);  // n x 2h
    Var query = t.concat_cols({fwd[n - 1], bwd[0]});
    return generator::attention(t, query, outputs, outputs);
}

// Small self-attention encoder (no mask) with mean pooling.
Var transformer_encode(Tape& t, ad::ParamBinding& p, const std::string& prefix,
                       const Config& cfg, Var seq) {
    Var x = seq;
    int dim = static_cast<int>(t.val(seq).cols());
    int dh = dim / cfg.enc_heads;
    for (int l = 0; l < cfg.enc_layers; ++l) {
        std::string lp = prefix + ".layer" + std::to_string(l);
        Var q = linear(t, p, lp + ".q", x);
        Var k = linear(t, p, lp + ".k", x);
        Var v = linear(t, p, lp + ".v", x);
        std::vector<Var> heads;
        for (int hh = 0; hh < cfg.enc_heads; ++hh)
            heads.push_back(generator::attention(
                t, t.cols(q, hh * dh, dh), t.cols(k, hh * dh, dh),
                t.cols(v, hh * dh, dh)));
        x = t.add(x, linear(t, p, lp + ".o", t.concat_cols(heads)));
        x = t.add(x, linear(t, p, lp + ".ffn2",
                            t.relu(linear(t, p, lp + ".ffn1", x))));
    }
    return t.mean_rows(x);
}

void init_sequence_encoder(ad::ParamStore& params, const std::string& prefix,
                           const Config& cfg, int input_dim,
                           std::mt19937_64& rng) {
    if (cfg.encoder == EncoderKind::Recurrent) {
        init_gru(params, prefix + ".fwd", input_dim, cfg.hidden, rng);
        init_gru(params, prefix + ".bwd", input_dim, cfg.hidden, rng);
    } else {
        for (int l = 0; l < cfg.enc_layers; ++l) {
            std::string lp = prefix + ".layer" + std::to_string(l);
            for (const char* proj : {".q", ".k", ".v", ".o"})
                init_linear(params, lp + proj, input_dim, input_dim, rng);
            init_linear(params, lp + ".ffn1", input_dim, 2 * input_dim, rng);
            init_linear(params, lp + ".ffn2", 2 * input_dim, input_dim, rng);
        }
    }
}

Var encode_sequence(Tape& t, ad::ParamBinding& p, const std::string& prefix,
                    const Config& cfg, Var seq) {
    if (cfg.encoder == EncoderKind::Recurrent)
        return bigru_attend(t, p, prefix, cfg.hidden, seq);
    return transformer_encode(t, p, prefix, cfg, seq);
}

int encoder_out_dim(const Config& cfg, int input_dim) {
    return cfg.encoder == EncoderKind::Recurrent ? 2 * cfg.hidden : input_dim;
}

// Trainable sentence embedding: mean word embedding through a tanh layer.
Var sentence_embedding(Tape& t, ad::ParamBinding& p, const Config&,
                       const std::vector<int>& tokens) {
    Var words = t.row_select(p("ret.word_embed"), tokens);
    return t.tanh_(linear(t, p, "ret.sen_proj", t.mean_rows(words)));
}

Var euclidean(Tape& t, Var a, Var b) {
    Var d = t.sub(a, b);
    return t.sqrt_(t.sum(t.cmul(d, d)));
}

}  // namespace

void init_params(ad::ParamStore& params, const Config& cfg, int vocab_size,
                 std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 0.1);
    params.init("ret.ing_embed", vocab_size, cfg.word_dim,
                [&]() { return nd(rng); });
    params.init("ret.word_embed", vocab_size, cfg.word_dim,
                [&]() { return nd(rng); });
    init_linear(params, "ret.sen_proj", cfg.word_dim, cfg.tree_cfg.sen_dim,
                rng);
    init_sequence_encoder(params, "ret.ing_enc", cfg, cfg.word_dim, rng);
    init_sequence_encoder(params, "ret.ins_enc", cfg, cfg.tree_cfg.sen_dim,
                          rng);
    treeenc::init_parsed(params, "ret.gat", cfg.tree_cfg, rng);
    int fused = encoder_out_dim(cfg, cfg.word_dim) +
                encoder_out_dim(cfg, cfg.tree_cfg.sen_dim) +
                cfg.tree_cfg.out_dim;
    init_linear(params, "ret.fuse", fused, cfg.common_dim, rng);
    init_linear(params, "ret.img_proj", cfg.d_img, cfg.common_dim, rng);
}

Var encode_image_side(Tape& t, ad::ParamBinding& p, const Config&,
                      const Eigen::VectorXd& f_img) {
    return linear(t, p, "ret.img_proj", t.leaf(f_img.transpose()));
}

Var encode_recipe_side(Tape& t, ad::ParamBinding& p, const Config& cfg,
                       const corpus::EncodedRecipe& recipe,
                       const tree::SentenceTree& tree,
                       const SentenceVectors* precomputed) {
    if (tree.leaf_count() != static_cast<int>(recipe.sentences.size()))
        throw std::invalid_argument(
            "encode_recipe_side: tree leaves != sentence count");
    Var ing_seq = t.row_select(p("ret.ing_embed"), recipe.ingredients);
    Var f_ing = encode_sequence(t, p, "ret.ing_enc", cfg, ing_seq);
    std::vector<Var> sen;
    if (precomputed && precomputed->count(recipe.id)) {
        for (const auto& row : precomputed->at(recipe.id))
            sen.push_back(t.leaf(row));
    } else {
        for (const auto& s : recipe.sentences)
            sen.push_back(sentence_embedding(t, p, cfg, s));
    }
    Var f_ins = encode_sequence(t, p, "ret.ins_enc", cfg, t.concat_rows(sen));
    Var f_tree;
    if (cfg.use_tree) {
        f_tree = treeenc::embed_parsed_tree(t, p, "ret.gat", cfg.tree_cfg,
                                            tree, sen);
    } else {
        f_tree = t.leaf(Matrix::Zero(1, cfg.tree_cfg.out_dim));
    }
    return linear(t, p, "ret.fuse", t.concat_cols({f_ing, f_ins, f_tree}));
}

Var triplet_batchhard_loss(Tape& t, Var img_embs, Var rec_embs,
                           double margin) {
    int b = static_cast<int>(t.val(img_embs).rows());
    if (b < 2)
        throw std::invalid_argument("triplet_batchhard_loss: batch < 2");
    // Hard-negative selection is discrete; pick indices from values, then
    // build differentiable terms only for the chosen triplets.
    Matrix d(b, b);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j)
            d(i, j) =
                (t.val(img_embs).row(i) - t.val(rec_embs).row(j)).norm();
    std::vector<Var> terms;
    for (int i = 0; i < b; ++i) {
        Var anchor_img = t.rows(img_embs, i, 1);
        Var pos_rec = t.rows(rec_embs, i, 1);
        int neg_rec = i == 0 ? 1 : 0;
        for (int j = 0; j < b; ++j)
            if (j != i && d(i, j) < d(i, neg_rec)) neg_rec = j;
        Var hinge_img = t.relu(t.add_scalar(
            t.sub(euclidean(t, anchor_img, pos_rec),
                  euclidean(t, anchor_img, t.rows(rec_embs, neg_rec, 1))),
            margin));
        int neg_img = i == 0 ? 1 : 0;
        for (int j = 0; j < b; ++j)
            if (j != i && d(j, i) < d(neg_img, i)) neg_img = j;
        Var anchor_rec = pos_rec;
        Var hinge_rec = t.relu(t.add_scalar(
            t.sub(euclidean(t, anchor_rec, anchor_img),
                  euclidean(t, anchor_rec, t.rows(img_embs, neg_img, 1))),
            margin));
        terms.push_back(t.add(hinge_img, hinge_rec));
    }
    Var total = terms[0];
    for (size_t k = 1; k < terms.size(); ++k) total = t.add(total, terms[k]);
    return t.scale(total, 1.0 / static_cast<double>(b));
}

EmbeddingDump embed_corpus(ad::ParamStore& params, const Config& cfg,
                           const corpus::Corpus& corpus_,
                           const corpus::Vocab& vocab,
                           const std::map<std::string, tree::SentenceTree>&
                               trees,
                           const SentenceVectors* precomputed) {
    EmbeddingDump dump;
    int n = static_cast<int>(corpus_.recipes.size());
    dump.image.resize(n, cfg.common_dim);
    dump.recipe.resize(n, cfg.common_dim);
    for (int i = 0; i < n; ++i) {
        const auto& r = corpus_.recipes[i];
        auto it = trees.find(r.id);
        if (it == trees.end())
            throw std::runtime_error("embed_corpus: missing tree for " + r.id);
        Tape t;
        ad::ParamBinding p(t, params);
        auto enc = corpus::encode_recipe(r, vocab);
        Var img = encode_image_side(t, p, cfg, r.image_feature);
        Var rec =
            encode_recipe_side(t, p, cfg, enc, it->second, precomputed);
        dump.image.row(i) = t.val(img).row(0);
        dump.recipe.row(i) = t.val(rec).row(0);
        dump.ids.push_back(r.id);
    }
    return dump;
}

TrainResult train_retrieval(
    ad::ParamStore& params, const corpus::Corpus& train,
    const corpus::Vocab& vocab,
    const std::map<std::string, tree::SentenceTree>& trees, const Config& cfg,
    const corpus::Corpus* val,
    const std::map<std::string, tree::SentenceTree>* val_trees) {
    for (const auto& r : train.recipes)
        if (!trees.count(r.id))
            throw std::runtime_error("train_retrieval: missing tree for " +
                                     r.id);
    std::mt19937_64 rng(cfg.seed);
    init_params(params, cfg, vocab.size(), rng);
    std::vector<corpus::EncodedRecipe> enc;
    for (const auto& r : train.recipes)
        enc.push_back(corpus::encode_recipe(r, vocab));
    TrainResult result;
    double lr = cfg.lr;
    std::vector<int> order(enc.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    ad::AdamState adam;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (epoch == cfg.lr_drop_epoch) lr *= 0.1;
        std::shuffle(order.begin(), order.end(), rng);
        double sum_loss = 0.0;
        int n_batches = 0;
        size_t i = 0;
        while (i + 1 < order.size()) {
            size_t bsz = std::min<size_t>(cfg.batch, order.size() - i);
            if (bsz < 2) break;
            Tape t;
            ad::ParamBinding p(t, params);
            std::vector<Var> img_rows, rec_rows;
            for (size_t k = 0; k < bsz; ++k) {
                int ri = order[i + k];
                img_rows.push_back(encode_image_side(
                    t, p, cfg, train.recipes[ri].image_feature));
                rec_rows.push_back(encode_recipe_side(
                    t, p, cfg, enc[ri], trees.at(train.recipes[ri].id)));
            }
            Var loss = triplet_batchhard_loss(t, t.concat_rows(img_rows),
                                              t.concat_rows(rec_rows),
                                              cfg.margin);
            t.backward(loss);
            std::map<std::string, Matrix> grads;
            p.collect_grads(grads);
            ad::adam_step(params, grads, adam, lr);
            sum_loss += t.val(loss)(0, 0);
            ++n_batches;
            i += bsz;
        }
        double r1 = -1.0;
        if (val && val_trees) {
            EmbeddingDump dump =
                embed_corpus(params, cfg, *val, vocab, *val_trees);
            auto rep = metrics::rank(dump.image, dump.recipe);
            r1 = metrics::recall_at_k(rep.ranks, 1);
        }
        result.log.push_back(
            {epoch, sum_loss / std::max(1, n_batches), r1});
    }
    return result;
}

void save_embedding_dump(const EmbeddingDump& dump, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write embeddings: " + path);
    for (size_t i = 0; i < dump.ids.size(); ++i) {
        out << dump.ids[i];
        for (int j = 0; j < dump.image.cols(); ++j)
            out << " " << dump.image(static_cast<int>(i), j);
        out << " |";
        for (int j = 0; j < dump.recipe.cols(); ++j)
            out << " " << dump.recipe(static_cast<int>(i), j);
        out << "\n";
    }
}

}  // namespace sgn::retrieval
