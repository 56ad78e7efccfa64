#include "sgn/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace sgn::ad {

Var Tape::push(Matrix v, std::function<void(Tape&)> back) {
    Node n;
    n.grad = Matrix::Zero(v.rows(), v.cols());
    n.val = std::move(v);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Matrix v) { return push(std::move(v)); }

const Matrix& Tape::val(Var v) const { return nodes_.at(v.id).val; }
const Matrix& Tape::grad(Var v) const { return nodes_.at(v.id).grad; }

Var Tape::add(Var a, Var b) {
    Var o = push(v(a.id) + v(b.id));
    int ai = a.id, bi = b.id, oi = o.id;
    nodes_[oi].back = [ai, bi, oi](Tape& t) {
        t.g(ai) += t.g(oi);
        t.g(bi) += t.g(oi);
    };
    return o;
}

Var Tape::sub(Var a, Var b) {
    Var o = push(v(a.id) - v(b.id));
    int ai = a.id, bi = b.id, oi = o.id;
    nodes_[oi].back = [ai, bi, oi](Tape& t) {
        t.g(ai) += t.g(oi);
        t.g(bi) -= t.g(oi);
    };
    return o;
}

Var Tape::cmul(Var a, Var b) {
    Var o = push(v(a.id).cwiseProduct(v(b.id)));
    int ai = a.id, bi = b.id, oi = o.id;
    nodes_[oi].back = [ai, bi, oi](Tape& t) {
        t.g(ai) += t.g(oi).cwiseProduct(t.v(bi));
        t.g(bi) += t.g(oi).cwiseProduct(t.v(ai));
    };
    return o;
}

Var Tape::add_rowwise(Var m, Var row) {
    if (v(row.id).rows() != 1 || v(row.id).cols() != v(m.id).cols())
        throw std::invalid_argument("add_rowwise: row must be 1xC");
    Matrix out = v(m.id);
    out.rowwise() += v(row.id).row(0);
    Var o = push(std::move(out));
    int mi = m.id, ri = row.id, oi = o.id;
    nodes_[oi].back = [mi, ri, oi](Tape& t) {
        t.g(mi) += t.g(oi);
        t.g(ri).row(0) += t.g(oi).colwise().sum();
    };
    return o;
}

Var Tape::scale(Var a, double s) {
    Var o = push(v(a.id) * s);
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi, s](Tape& t) { t.g(ai) += t.g(oi) * s; };
    return o;
}

Var Tape::add_scalar(Var a, double s) {
    Var o = push(v(a.id).array() + s);
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi](Tape& t) { t.g(ai) += t.g(oi); };
    return o;
}

Var Tape::sigmoid(Var a) {
    Matrix out = (1.0 / (1.0 + (-v(a.id).array()).exp())).matrix();
    Var o = push(std::move(out));
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi](Tape& t) {
        const auto& y = t.v(oi).array();
        t.g(ai) += (t.g(oi).array() * y * (1.0 - y)).matrix();
    };
    return o;
}

Var Tape::tanh_(Var a) {
    Var o = push(v(a.id).array().tanh().matrix());
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi](Tape& t) {
        const auto& y = t.v(oi).array();
        t.g(ai) += (t.g(oi).array() * (1.0 - y * y)).matrix();
    };
    return o;
}

Var Tape::relu(Var a) {
    Var o = push(v(a.id).cwiseMax(0.0));
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi](Tape& t) {
        t.g(ai) += (t.g(oi).array() * (t.v(ai).array() > 0.0).cast<double>())
                       .matrix();
    };
    return o;
}

Var Tape::exp_(Var a) {
    Var o = push(v(a.id).array().exp().matrix());
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi](Tape& t) {
        t.g(ai) += t.g(oi).cwiseProduct(t.v(oi));
    };
    return o;
}

Var Tape::log_(Var a) {
    Var o = push(v(a.id).array().log().matrix());
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi](Tape& t) {
        t.g(ai) += t.g(oi).cwiseQuotient(t.v(ai));
    };
    return o;
}

Var Tape::sqrt_(Var a, double eps) {
    Var o = push((v(a.id).array() + eps).sqrt().matrix());
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi](Tape& t) {
        t.g(ai) += (t.g(oi).array() / (2.0 * t.v(oi).array())).matrix();
    };
    return o;
}

Var Tape::matmul(Var a, Var b) {
    if (v(a.id).cols() != v(b.id).rows())
        throw std::invalid_argument("matmul: inner dims mismatch");
    Var o = push(v(a.id) * v(b.id));
    int ai = a.id, bi = b.id, oi = o.id;
    nodes_[oi].back = [ai, bi, oi](Tape& t) {
        t.g(ai) += t.g(oi) * t.v(bi).transpose();
        t.g(bi) += t.v(ai).transpose() * t.g(oi);
    };
    return o;
}

Var Tape::transpose(Var a) {
    Var o = push(v(a.id).transpose());
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi](Tape& t) { t.g(ai) += t.g(oi).transpose(); };
    return o;
}

Var Tape::rows(Var a, int start, int count) {
    Var o = push(v(a.id).middleRows(start, count));
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi, start, count](Tape& t) {
        t.g(ai).middleRows(start, count) += t.g(oi);
    };
    return o;
}

Var Tape::cols(Var a, int start, int count) {
    Var o = push(v(a.id).middleCols(start, count));
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi, start, count](Tape& t) {
        t.g(ai).middleCols(start, count) += t.g(oi);
    };
    return o;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    int total = 0, cols_n = static_cast<int>(v(parts[0].id).cols());
    for (auto p : parts) total += static_cast<int>(v(p.id).rows());
    Matrix out(total, cols_n);
    int r = 0;
    std::vector<int> ids;
    for (auto p : parts) {
        out.middleRows(r, v(p.id).rows()) = v(p.id);
        r += static_cast<int>(v(p.id).rows());
        ids.push_back(p.id);
    }
    Var o = push(std::move(out));
    int oi = o.id;
    nodes_[oi].back = [ids, oi](Tape& t) {
        int rr = 0;
        for (int id : ids) {
            int n = static_cast<int>(t.v(id).rows());
            t.g(id) += t.g(oi).middleRows(rr, n);
            rr += n;
        }
    };
    return o;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    int total = 0, rows_n = static_cast<int>(v(parts[0].id).rows());
    for (auto p : parts) total += static_cast<int>(v(p.id).cols());
    Matrix out(rows_n, total);
    int c = 0;
    std::vector<int> ids;
    for (auto p : parts) {
        out.middleCols(c, v(p.id).cols()) = v(p.id);
        c += static_cast<int>(v(p.id).cols());
        ids.push_back(p.id);
    }
    Var o = push(std::move(out));
    int oi = o.id;
    nodes_[oi].back = [ids, oi](Tape& t) {
        int cc = 0;
        for (int id : ids) {
            int n = static_cast<int>(t.v(id).cols());
            t.g(id) += t.g(oi).middleCols(cc, n);
            cc += n;
        }
    };
    return o;
}

Var Tape::row_select(Var a, std::vector<int> idx) {
    Matrix out(static_cast<int>(idx.size()), v(a.id).cols());
    for (size_t i = 0; i < idx.size(); ++i) out.row(i) = v(a.id).row(idx[i]);
    Var o = push(std::move(out));
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi, idx = std::move(idx)](Tape& t) {
        for (size_t i = 0; i < idx.size(); ++i)
            t.g(ai).row(idx[i]) += t.g(oi).row(static_cast<int>(i));
    };
    return o;
}

Var Tape::sum(Var a) {
    Matrix out(1, 1);
    out(0, 0) = v(a.id).sum();
    Var o = push(std::move(out));
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi](Tape& t) {
        t.g(ai).array() += t.g(oi)(0, 0);
    };
    return o;
}

Var Tape::mean(Var a) {
    double n = static_cast<double>(v(a.id).size());
    Matrix out(1, 1);
    out(0, 0) = v(a.id).sum() / n;
    Var o = push(std::move(out));
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi, n](Tape& t) {
        t.g(ai).array() += t.g(oi)(0, 0) / n;
    };
    return o;
}

Var Tape::mean_rows(Var a) {
    double n = static_cast<double>(v(a.id).rows());
    Matrix out = v(a.id).colwise().mean();
    Var o = push(std::move(out));
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi, n](Tape& t) {
        t.g(ai).rowwise() += (t.g(oi).row(0) / n);
    };
    return o;
}

static Matrix softmax_rows_val(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i) {
        Eigen::ArrayXd r = x.row(i).array();
        r -= r.maxCoeff();
        Eigen::ArrayXd e = r.exp();
        out.row(i) = (e / e.sum()).matrix();
    }
    return out;
}

Var Tape::softmax_rows(Var a) {
    Var o = push(softmax_rows_val(v(a.id)));
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi](Tape& t) {
        const Matrix& y = t.v(oi);
        const Matrix& go = t.g(oi);
        for (int i = 0; i < y.rows(); ++i) {
            double dot = go.row(i).dot(y.row(i));
            t.g(ai).row(i) +=
                (y.row(i).array() * (go.row(i).array() - dot)).matrix();
        }
    };
    return o;
}

Var Tape::masked_softmax_rows(Var a, Matrix mask) {
    Matrix shifted = v(a.id);
    for (int i = 0; i < shifted.rows(); ++i)
        for (int j = 0; j < shifted.cols(); ++j)
            if (mask(i, j) == 0.0) shifted(i, j) = -1e30;
    Var o = push(softmax_rows_val(shifted));
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi](Tape& t) {
        const Matrix& y = t.v(oi);
        const Matrix& go = t.g(oi);
        for (int i = 0; i < y.rows(); ++i) {
            double dot = go.row(i).dot(y.row(i));
            t.g(ai).row(i) +=
                (y.row(i).array() * (go.row(i).array() - dot)).matrix();
        }
    };
    return o;
}

Var Tape::log_softmax_rows(Var a) {
    Matrix out(v(a.id).rows(), v(a.id).cols());
    for (int i = 0; i < out.rows(); ++i) {
        Eigen::ArrayXd r = v(a.id).row(i).array();
        double m = r.maxCoeff();
        double lse = m + std::log((r - m).exp().sum());
        out.row(i) = (r - lse).matrix();
    }
    Var o = push(std::move(out));
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi](Tape& t) {
        const Matrix& go = t.g(oi);
        Matrix sm = t.v(oi).array().exp().matrix();
        for (int i = 0; i < sm.rows(); ++i) {
            double s = go.row(i).sum();
            t.g(ai).row(i) += go.row(i) - s * sm.row(i);
        }
    };
    return o;
}

Var Tape::cumsum_cols(Var a) {
    Matrix out = v(a.id);
    for (int j = 1; j < out.cols(); ++j) out.col(j) += out.col(j - 1);
    Var o = push(std::move(out));
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi](Tape& t) {
        Matrix acc = t.g(oi);
        for (int j = static_cast<int>(acc.cols()) - 2; j >= 0; --j)
            acc.col(j) += acc.col(j + 1);
        t.g(ai) += acc;
    };
    return o;
}

Var Tape::reverse_cumsum_cols(Var a) {
    Matrix out = v(a.id);
    for (int j = static_cast<int>(out.cols()) - 2; j >= 0; --j)
        out.col(j) += out.col(j + 1);
    Var o = push(std::move(out));
    int ai = a.id, oi = o.id;
    nodes_[oi].back = [ai, oi](Tape& t) {
        Matrix acc = t.g(oi);
        for (int j = 1; j < acc.cols(); ++j) acc.col(j) += acc.col(j - 1);
        t.g(ai) += acc;
    };
    return o;
}

Var Tape::layer_norm_rows(Var x, Var gain, Var bias, double eps) {
    const Matrix& xv = v(x.id);
    int R = static_cast<int>(xv.rows()), C = static_cast<int>(xv.cols());
    Matrix xhat(R, C);
    Eigen::VectorXd sigma(R);
    for (int i = 0; i < R; ++i) {
        double mu = xv.row(i).mean();
        double var = (xv.row(i).array() - mu).square().mean();
        sigma(i) = std::sqrt(var + eps);
        xhat.row(i) = ((xv.row(i).array() - mu) / sigma(i)).matrix();
    }
    Matrix out = xhat;
    for (int i = 0; i < R; ++i)
        out.row(i) = (out.row(i).array() * v(gain.id).row(0).array()).matrix() +
                     v(bias.id).row(0);
    Var o = push(std::move(out));
    int xi = x.id, gi = gain.id, bi = bias.id, oi = o.id;
    nodes_[oi].back = [xi, gi, bi, oi, xhat = std::move(xhat),
                       sigma = std::move(sigma)](Tape& t) {
        const Matrix& go = t.g(oi);
        for (int i = 0; i < go.rows(); ++i) {
            Eigen::Array<double, 1, Eigen::Dynamic> u =
                go.row(i).array() * t.v(gi).row(0).array();
            double mu_u = u.mean();
            double mu_ux = (u * xhat.row(i).array()).mean();
            t.g(xi).row(i) +=
                ((u - mu_u - xhat.row(i).array() * mu_ux) / sigma(i)).matrix();
            t.g(gi).row(0) +=
                (go.row(i).array() * xhat.row(i).array()).matrix();
            t.g(bi).row(0) += go.row(i);
        }
    };
    return o;
}

Var Tape::cross_entropy_mean(Var logits, std::vector<int> targets) {
    const Matrix& z = v(logits.id);
    if (static_cast<int>(targets.size()) != z.rows())
        throw std::invalid_argument("cross_entropy_mean: target count");
    Matrix sm = softmax_rows_val(z);
    double loss = 0.0;
    for (int i = 0; i < z.rows(); ++i) {
        Eigen::ArrayXd r = z.row(i).array();
        double m = r.maxCoeff();
        double lse = m + std::log((r - m).exp().sum());
        loss += lse - z(i, targets[i]);
    }
    loss /= static_cast<double>(z.rows());
    Matrix out(1, 1);
    out(0, 0) = loss;
    Var o = push(std::move(out));
    int li = logits.id, oi = o.id;
    nodes_[oi].back = [li, oi, sm = std::move(sm),
                       targets = std::move(targets)](Tape& t) {
        double s = t.g(oi)(0, 0) / static_cast<double>(sm.rows());
        Matrix d = sm;
        for (int i = 0; i < d.rows(); ++i) d(i, targets[i]) -= 1.0;
        t.g(li) += s * d;
    };
    return o;
}

Var Tape::bce_with_logits_sum(Var logits, Matrix targets) {
    const Matrix& z = v(logits.id);
    if (z.rows() != targets.rows() || z.cols() != targets.cols())
        throw std::invalid_argument("bce_with_logits_sum: shape");
    double loss = 0.0;
    for (int i = 0; i < z.rows(); ++i)
        for (int j = 0; j < z.cols(); ++j) {
            double zz = z(i, j), tt = targets(i, j);
            loss += std::max(zz, 0.0) - zz * tt +
                    std::log1p(std::exp(-std::abs(zz)));
        }
    Matrix out(1, 1);
    out(0, 0) = loss;
    Var o = push(std::move(out));
    int li = logits.id, oi = o.id;
    nodes_[oi].back = [li, oi, targets = std::move(targets)](Tape& t) {
        double s = t.g(oi)(0, 0);
        Matrix sig =
            (1.0 / (1.0 + (-t.v(li).array()).exp())).matrix();
        t.g(li) += s * (sig - targets);
    };
    return o;
}

void Tape::backward(Var scalar_out) {
    const Matrix& out = v(scalar_out.id);
    if (out.rows() != 1 || out.cols() != 1)
        throw std::invalid_argument("backward: output must be 1x1");
    for (auto& n : nodes_) n.grad.setZero();
    nodes_[scalar_out.id].grad(0, 0) = 1.0;
    for (int i = scalar_out.id; i >= 0; --i)
        if (nodes_[i].back) nodes_[i].back(*this);
}

Matrix& ParamStore::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end())
        throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

const Matrix& ParamStore::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end())
        throw std::out_of_range("unknown parameter: " + name);
    return it->second;
}

Matrix& ParamStore::init(const std::string& name, int rows, int cols,
                         const std::function<double()>& gen) {
    auto it = tensors.find(name);
    if (it != tensors.end()) return it->second;
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = gen();
    return tensors.emplace(name, std::move(m)).first->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : tensors) out.push_back(k);
    return out;
}

Var ParamBinding::operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Var v = tape_.leaf(store_.at(name));
    bound_.emplace(name, v);
    return v;
}

void ParamBinding::collect_grads(std::map<std::string, Matrix>& grads) const {
    for (const auto& [name, var] : bound_) {
        auto it = grads.find(name);
        if (it == grads.end())
            grads.emplace(name, tape_.grad(var));
        else
            it->second += tape_.grad(var);
    }
}

void adam_step(ParamStore& params, const std::map<std::string, Matrix>& grads,
               AdamState& state, double lr, double beta1, double beta2,
               double eps) {
    state.step += 1;
    double b1c = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    double b2c = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (const auto& [name, gmat] : grads) {
        Matrix& p = params.at(name);
        Matrix& m = state.m
                        .try_emplace(name, Matrix::Zero(p.rows(), p.cols()))
                        .first->second;
        Matrix& v = state.v
                        .try_emplace(name, Matrix::Zero(p.rows(), p.cols()))
                        .first->second;
        m = beta1 * m + (1.0 - beta1) * gmat;
        v = (beta2 * v.array() + (1.0 - beta2) * gmat.array().square())
                .matrix();
        p.array() -=
            lr * (m.array() / b1c) / ((v.array() / b2c).sqrt() + eps);
    }
}

void sgd_step(ParamStore& params, const std::map<std::string, Matrix>& grads,
              double lr) {
    for (const auto& [name, gmat] : grads) params.at(name) -= lr * gmat;
}

}  // namespace sgn::ad
