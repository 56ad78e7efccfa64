#include "sgn/img2tree.hpp"

#include <cmath>
#include <stdexcept>

namespace sgn::img2tree {

using ad::Matrix;
using ad::Tape;
using ad::Var;

Config Config::paper() {
    Config c;
    c.hidden = 512;
    c.layers = 2;
    return c;
}

namespace {

// Block inputs/outputs are padded to the longest possible block.
int block_width(const Config& cfg) { return cfg.max_nodes - 1; }

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
    Var one_minus_z = t.add_scalar(t.neg(z), 1.0);
    return t.add(t.cmul(one_minus_z, h), t.cmul(z, h_tilde));
}

struct StepOut {
    Var logits;  // 1 x (block_width + 1); last column is continuation
};

struct Decoder {
    Tape& t;
    ad::ParamBinding& p;
    const Config& cfg;
    std::vector<Var> h;  // per-layer state

    Decoder(Tape& tape, ad::ParamBinding& bind, const Config& c,
            const Eigen::VectorXd& f_img)
        : t(tape), p(bind), cfg(c) {
        Var img = t.leaf(f_img.transpose());  // 1 x D_img
        for (int l = 0; l < cfg.layers; ++l) {
            std::string lp = "i2t.init.l" + std::to_string(l);
            h.push_back(t.add_rowwise(t.matmul(img, p(lp + ".W")),
                                      p(lp + ".b")));
        }
    }

    StepOut step(const Matrix& prev_block_padded) {
        Var x = t.add_rowwise(
            t.matmul(t.leaf(prev_block_padded), p("i2t.in.W")),
            p("i2t.in.b"));
        for (int l = 0; l < cfg.layers; ++l) {
            std::string lp = "i2t.gru.l" + std::to_string(l);
            h[l] = gru_step(t, p, lp, x, h[l]);
            x = h[l];
        }
        Var logits =
            t.add_rowwise(t.matmul(x, p("i2t.out.W")), p("i2t.out.b"));
        return StepOut{logits};
    }
};

Matrix pad_block(const std::vector<uint8_t>& bits, size_t off, int len,
                 int width) {
    Matrix m = Matrix::Zero(1, width);
    for (int j = 0; j < len; ++j) m(0, j) = bits[off + j] ? 1.0 : 0.0;
    return m;
}

}  // namespace

void init_params(ad::ParamStore& params, const Config& cfg, int d_img,
                 std::mt19937_64& rng) {
    int bw = block_width(cfg);
    double r = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
    std::uniform_real_distribution<double> u(-r, r);
    auto gen = [&]() { return u(rng); };
    for (int l = 0; l < cfg.layers; ++l) {
        std::string lp = "i2t.init.l" + std::to_string(l);
        params.init(lp + ".W", d_img, cfg.hidden, gen);
        params.init(lp + ".b", 1, cfg.hidden, [] { return 0.0; });
    }
    params.init("i2t.in.W", bw, cfg.hidden, gen);
    params.init("i2t.in.b", 1, cfg.hidden, [] { return 0.0; });
    for (int l = 0; l < cfg.layers; ++l)
        init_gru(params, "i2t.gru.l" + std::to_string(l), cfg.hidden,
                 cfg.hidden, rng);
    params.init("i2t.out.W", cfg.hidden, bw + 1, gen);
    params.init("i2t.out.b", 1, bw + 1, [] { return 0.0; });
}

ad::Var tree_nll(Tape& t, ad::ParamBinding& p, const Config& cfg,
                 const Eigen::VectorXd& f_img,
                 const tree::AdjacencyVector& v_gt,
                 std::vector<double>* per_step) {
    if (!tree::tree_valid(v_gt))
        throw std::invalid_argument("tree_nll: adjacency vector not tree-valid");
    int n = v_gt.node_count();
    if (n > cfg.max_nodes)
        throw std::invalid_argument("tree_nll: tree exceeds max_nodes");
    int bw = block_width(cfg);
    Decoder dec(t, p, cfg, f_img);
    if (per_step) per_step->clear();
    std::vector<Var> terms;
    size_t off = 0;
    for (int i = 1; i <= n; ++i) {
        Matrix prev = (i == 1) ? Matrix::Zero(1, bw)
                               : pad_block(v_gt.bits, off - (i - 1), i - 1, bw);
        StepOut so = dec.step(prev);
        std::vector<Var> step_terms;
        if (i <= n - 1) {
            Var block_logits = t.cols(so.logits, 0, i);
            Matrix target(1, i);
            for (int j = 0; j < i; ++j)
                target(0, j) = v_gt.bits[off + j] ? 1.0 : 0.0;
            step_terms.push_back(
                t.bce_with_logits_sum(block_logits, target));
            off += i;
        }
        Matrix cont_target(1, 1);
        cont_target(0, 0) = (i <= n - 1) ? 1.0 : 0.0;
        step_terms.push_back(
            t.bce_with_logits_sum(t.cols(so.logits, bw, 1), cont_target));
        Var step_loss = step_terms.size() == 1
                            ? step_terms[0]
                            : t.add(step_terms[0], step_terms[1]);
        if (per_step) per_step->push_back(t.val(step_loss)(0, 0));
        terms.push_back(step_loss);
    }
    Var total = terms[0];
    for (size_t k = 1; k < terms.size(); ++k) total = t.add(total, terms[k]);
    return total;
}

tree::AdjacencyVector generate_tree(ad::ParamStore& params, const Config& cfg,
                                    const Eigen::VectorXd& f_img,
                                    DecodeMode mode, int max_nodes,
                                    std::uint64_t seed) {
    if (max_nodes > cfg.max_nodes)
        throw std::invalid_argument("generate_tree: max_nodes > configured");
    int bw = block_width(cfg);
    Tape t;
    ad::ParamBinding p(t, params);
    Decoder dec(t, p, cfg, f_img);
    std::mt19937_64 rng(seed);
    tree::AdjacencyVector out;
    Matrix prev = Matrix::Zero(1, bw);
    for (int i = 1; i < max_nodes; ++i) {
        StepOut so = dec.step(prev);
        const Matrix& y = t.val(so.logits);
        double p_cont = 1.0 / (1.0 + std::exp(-y(0, bw)));
        if (p_cont < 0.5) break;
        int parent = 0;
        if (mode == DecodeMode::Argmax) {
            for (int j = 1; j < i; ++j)
                if (y(0, j) > y(0, parent)) parent = j;
        } else {
            Eigen::ArrayXd scores = y.row(0).head(i).array();
            scores -= scores.maxCoeff();
            Eigen::ArrayXd probs = scores.exp();
            probs /= probs.sum();
            std::uniform_real_distribution<double> u(0.0, 1.0);
            double r = u(rng), acc = 0.0;
            parent = i - 1;
            for (int j = 0; j < i; ++j) {
                acc += probs(j);
                if (r <= acc) {
                    parent = j;
                    break;
                }
            }
        }
        std::vector<uint8_t> block(i, 0);
        block[parent] = 1;
        out.bits.insert(out.bits.end(), block.begin(), block.end());
        prev = Matrix::Zero(1, bw);
        prev(0, parent) = 1.0;
    }
    return out;
}

}  // namespace sgn::img2tree
