#include "sgn/onlstm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sgn::onlstm {

using ad::Matrix;
using ad::Tape;
using ad::Var;

Config Config::paper() {
    Config c;
    c.embed_dim = 400;
    c.hidden = 400;
    c.layers = 3;
    c.k_distractors = 3;
    c.min_sentences = 5;
    c.lr = 1.0;
    c.batch = 60;
    c.epochs = 50;
    return c;
}

namespace {

const char* kGates[] = {"f", "i", "o", "c", "mf", "mi"};

void init_cell(ad::ParamStore& params, const std::string& prefix, int input,
               int hidden, int layers, std::mt19937_64& rng) {
    for (int l = 0; l < layers; ++l) {
        int in_dim = (l == 0) ? input : hidden;
        // keep pre-activation variance near the input variance
        double r = std::sqrt(3.0 / static_cast<double>(in_dim));
        std::uniform_real_distribution<double> u(-r, r);
        auto gen = [&]() { return u(rng); };
        std::string base = prefix + ".l" + std::to_string(l) + ".";
        for (const char* g : kGates) {
            params.init(base + "W" + g, in_dim, hidden, gen);
            params.init(base + "U" + g, hidden, hidden, gen);
            params.init(base + "b" + g, 1, hidden, [] { return 0.0; });
        }
    }
}

Var linear_gate(Tape& t, ad::ParamBinding& p, const std::string& base,
                const char* g, Var x, Var h) {
    Var z = t.add(t.matmul(x, p(base + "W" + g)),
                  t.matmul(h, p(base + "U" + g)));
    return t.add_rowwise(z, p(base + "b" + g));
}

struct StackState {
    std::vector<Var> h, c;
};

StackState zero_state(Tape& t, int layers, int hidden) {
    StackState s;
    for (int l = 0; l < layers; ++l) {
        s.h.push_back(t.leaf(Matrix::Zero(1, hidden)));
        s.c.push_back(t.leaf(Matrix::Zero(1, hidden)));
    }
    return s;
}

// Runs the layer stack for one time step; returns the top-layer step.
CellStep stack_step(Tape& t, ad::ParamBinding& p, const std::string& prefix,
                    int layers, Var x, StackState& state) {
    CellStep top;
    Var input = x;
    for (int l = 0; l < layers; ++l) {
        std::string lp = prefix + ".l" + std::to_string(l);
        top = ordered_cell_step(t, p, lp, input, state.h[l], state.c[l]);
        state.h[l] = top.h;
        state.c[l] = top.c;
        input = top.h;
    }
    return top;
}

}  // namespace

void init_params(ad::ParamStore& params, const Config& cfg, int vocab_size,
                 std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    params.init("r2t.embed", vocab_size, cfg.embed_dim,
                [&]() { return nd(rng); });
    init_cell(params, "r2t.word", cfg.embed_dim, cfg.hidden, cfg.layers, rng);
    init_cell(params, "r2t.sent", cfg.hidden, cfg.hidden, cfg.layers, rng);
}

CellStep ordered_cell_step(Tape& t, ad::ParamBinding& p,
                           const std::string& prefix, Var x, Var h_prev,
                           Var c_prev) {
    std::string base = prefix + ".";
    Var d_f = t.softmax_rows(linear_gate(t, p, base, "mf", x, h_prev));
    Var d_i = t.softmax_rows(linear_gate(t, p, base, "mi", x, h_prev));
    // Monotone master gates from the cumulative aggregation of the split
    // distributions: f~ = cumsum(d_f), i~ = 1 - cumsum(d_i).
    Var f_tilde = t.cumsum_cols(d_f);
    Var i_tilde = t.add_scalar(t.neg(t.cumsum_cols(d_i)), 1.0);
    Var omega = t.cmul(f_tilde, i_tilde);
    Var f = t.sigmoid(linear_gate(t, p, base, "f", x, h_prev));
    Var i = t.sigmoid(linear_gate(t, p, base, "i", x, h_prev));
    Var o = t.sigmoid(linear_gate(t, p, base, "o", x, h_prev));
    Var c_hat = t.tanh_(linear_gate(t, p, base, "c", x, h_prev));
    Var f_hat = t.add(t.cmul(f, omega), t.sub(f_tilde, omega));
    Var i_hat = t.add(t.cmul(i, omega), t.sub(i_tilde, omega));
    Var c = t.add(t.cmul(f_hat, c_prev), t.cmul(i_hat, c_hat));
    Var h = t.cmul(o, t.tanh_(c));
    return CellStep{h, c, d_f, d_i};
}

double expected_split(const Eigen::RowVectorXd& p_f, double tol) {
    double s = p_f.sum();
    if (std::abs(s - 1.0) > tol)
        throw std::invalid_argument(
            "expected_split: distribution sums to " + std::to_string(s));
    double e = 0.0;
    for (int k = 0; k < p_f.size(); ++k) e += (k + 1) * p_f(k);
    return e;
}

HierOutput encode_hierarchical(Tape& t, ad::ParamBinding& p, const Config& cfg,
                               const std::vector<std::vector<int>>& sentences) {
    if (sentences.empty())
        throw std::invalid_argument("encode_hierarchical: no sentences");
    HierOutput out;
    Var embed = p("r2t.embed");
    for (const auto& sent : sentences) {
        if (sent.empty())
            throw std::invalid_argument("encode_hierarchical: empty sentence");
        StackState st = zero_state(t, cfg.layers, cfg.hidden);
        CellStep last;
        for (int tok : sent) {
            Var x = t.row_select(embed, {tok});
            last = stack_step(t, p, "r2t.word", cfg.layers, x, st);
        }
        out.sentence_embs.push_back(last.h);
    }
    StackState st = zero_state(t, cfg.layers, cfg.hidden);
    out.scores.values.resize(sentences.size(), 0.0);
    for (size_t j = 0; j < sentences.size(); ++j) {
        CellStep step = stack_step(t, p, "r2t.sent", cfg.layers,
                                   out.sentence_embs[j], st);
        out.scores.values[j] =
            expected_split(t.val(step.d_f).row(0), 1e-5);
        out.context_emb = step.h;
    }
    return out;
}

Var qt_logits(Tape& t, Var f_ctxt, const std::vector<Var>& cand_embs) {
    Var cands = t.concat_rows(cand_embs);  // (K+1) x D
    return t.matmul(f_ctxt, t.transpose(cands));
}

namespace {

struct QTSample {
    int recipe;
    int ctx_start, ctx_len;
    int correct;                                // sentence index
    std::vector<std::pair<int, int>> distract;  // (recipe, sentence)
};

std::vector<QTSample> draw_samples(const corpus::Corpus& corpus,
                                   const std::vector<int>& eligible,
                                   const Config& cfg, std::mt19937_64& rng) {
    std::vector<QTSample> out;
    for (int ri : eligible) {
        int m = static_cast<int>(corpus.recipes[ri].instructions.size());
        std::uniform_int_distribution<int> len_d(2, m - 1);
        int len = len_d(rng);
        std::uniform_int_distribution<int> start_d(0, m - 1 - len);
        QTSample s;
        s.recipe = ri;
        s.ctx_len = len;
        s.ctx_start = start_d(rng);
        s.correct = s.ctx_start + len;
        // distractors from the same recipe, outside the window and the
        // correct sentence; corpus-level fallback keeps |S_cand| = K+1
        std::vector<int> pool;
        for (int j = 0; j < m; ++j)
            if ((j < s.ctx_start || j >= s.ctx_start + len) && j != s.correct)
                pool.push_back(j);
        std::shuffle(pool.begin(), pool.end(), rng);
        for (int j : pool) {
            if (static_cast<int>(s.distract.size()) >= cfg.k_distractors)
                break;
            s.distract.emplace_back(ri, j);
        }
        while (static_cast<int>(s.distract.size()) < cfg.k_distractors) {
            std::uniform_int_distribution<int> rd(
                0, static_cast<int>(corpus.recipes.size()) - 1);
            int rr = rd(rng);
            int mm = static_cast<int>(corpus.recipes[rr].instructions.size());
            std::uniform_int_distribution<int> sd(0, mm - 1);
            s.distract.emplace_back(rr, sd(rng));
        }
        out.push_back(s);
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

std::vector<std::vector<std::vector<int>>> encode_all(
    const corpus::Corpus& corpus, const corpus::Vocab& vocab) {
    std::vector<std::vector<std::vector<int>>> enc;
    for (const auto& r : corpus.recipes) {
        std::vector<std::vector<int>> sents;
        for (const auto& s : r.instructions) {
            std::vector<int> ids;
            for (const auto& tok : s) ids.push_back(vocab.index(tok));
            sents.push_back(std::move(ids));
        }
        enc.push_back(std::move(sents));
    }
    return enc;
}

// Word-level sentence embedding only (no sentence-level pass).
Var embed_sentence(Tape& t, ad::ParamBinding& p, const Config& cfg,
                   const std::vector<int>& sent) {
    StackState st = zero_state(t, cfg.layers, cfg.hidden);
    CellStep last;
    Var embed = p("r2t.embed");
    for (int tok : sent) {
        Var x = t.row_select(embed, {tok});
        last = stack_step(t, p, "r2t.word", cfg.layers, x, st);
    }
    return last.h;
}

struct SampleEval {
    double loss;
    bool correct;
};

SampleEval eval_sample(Tape& t, ad::ParamBinding& p, const Config& cfg,
                       const std::vector<std::vector<std::vector<int>>>& enc,
                       const QTSample& s, std::mt19937_64& rng,
                       Var* loss_out) {
    std::vector<std::vector<int>> ctx(
        enc[s.recipe].begin() + s.ctx_start,
        enc[s.recipe].begin() + s.ctx_start + s.ctx_len);
    HierOutput h = encode_hierarchical(t, p, cfg, ctx);
    std::vector<std::pair<int, int>> cand{{s.recipe, s.correct}};
    for (auto& d : s.distract) cand.push_back(d);
    std::shuffle(cand.begin() + 1, cand.end(), rng);
    std::uniform_int_distribution<int> pos_d(
        0, static_cast<int>(cand.size()) - 1);
    int target = pos_d(rng);
    std::swap(cand[0], cand[target]);
    std::vector<Var> cand_embs;
    for (auto& [ri, si] : cand)
        cand_embs.push_back(embed_sentence(t, p, cfg, enc[ri][si]));
    Var logits = qt_logits(t, h.context_emb, cand_embs);
    Var loss = t.cross_entropy_mean(logits, {target});
    if (loss_out) *loss_out = loss;
    int argmax = 0;
    t.val(logits).row(0).maxCoeff(&argmax);
    return SampleEval{t.val(loss)(0, 0), argmax == target};
}

std::vector<int> eligible_recipes(const corpus::Corpus& corpus,
                                  const Config& cfg) {
    std::vector<int> out;
    for (size_t i = 0; i < corpus.recipes.size(); ++i)
        if (static_cast<int>(corpus.recipes[i].instructions.size()) >=
            cfg.min_sentences)
            out.push_back(static_cast<int>(i));
    return out;
}

}  // namespace

TrainResult train_recipe2tree(ad::ParamStore& params,
                              const corpus::Corpus& corpus,
                              const corpus::Vocab& vocab, const Config& cfg) {
    auto eligible = eligible_recipes(corpus, cfg);
    if (eligible.empty())
        throw std::runtime_error(
            "train_recipe2tree: no recipes with at least " +
            std::to_string(cfg.min_sentences) + " sentences");
    std::mt19937_64 rng(cfg.seed);
    init_params(params, cfg, vocab.size(), rng);
    auto enc = encode_all(corpus, vocab);
    TrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto samples = draw_samples(corpus, eligible, cfg, rng);
        double total_loss = 0.0;
        int correct = 0;
        size_t i = 0;
        while (i < samples.size()) {
            std::map<std::string, Matrix> grads;
            int in_batch = 0;
            for (; i < samples.size() && in_batch < cfg.batch;
                 ++i, ++in_batch) {
                Tape tape;
                ad::ParamBinding bind(tape, params);
                Var loss;
                SampleEval ev = eval_sample(tape, bind, cfg, enc, samples[i],
                                            rng, &loss);
                tape.backward(loss);
                bind.collect_grads(grads);
                total_loss += ev.loss;
                if (ev.correct) ++correct;
            }
            for (auto& [k, g] : grads) g /= static_cast<double>(in_batch);
            ad::sgd_step(params, grads, cfg.lr);
        }
        result.log.push_back(
            {epoch, total_loss / static_cast<double>(samples.size()),
             static_cast<double>(correct) /
                 static_cast<double>(samples.size())});
    }
    return result;
}

double qt_accuracy(ad::ParamStore& params, const corpus::Corpus& corpus,
                   const corpus::Vocab& vocab, const Config& cfg,
                   std::uint64_t seed) {
    auto eligible = eligible_recipes(corpus, cfg);
    if (eligible.empty()) return 0.0;
    std::mt19937_64 rng(seed);
    auto enc = encode_all(corpus, vocab);
    auto samples = draw_samples(corpus, eligible, cfg, rng);
    int correct = 0;
    for (const auto& s : samples) {
        Tape tape;
        ad::ParamBinding bind(tape, params);
        if (eval_sample(tape, bind, cfg, enc, s, rng, nullptr).correct)
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

std::map<std::string, tree::SentenceTree> derive_pseudo_trees(
    ad::ParamStore& params, const corpus::Corpus& corpus,
    const corpus::Vocab& vocab, const Config& cfg) {
    auto enc = encode_all(corpus, vocab);
    std::map<std::string, tree::SentenceTree> out;
    for (size_t i = 0; i < corpus.recipes.size(); ++i) {
        Tape tape;
        ad::ParamBinding bind(tape, params);
        HierOutput h = encode_hierarchical(tape, bind, cfg, enc[i]);
        out.emplace(corpus.recipes[i].id, tree::parse_from_scores(h.scores));
    }
    return out;
}

}  // namespace sgn::onlstm
