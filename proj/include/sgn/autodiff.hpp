#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace sgn::ad {

using Matrix = Eigen::MatrixXd;

// Handle into a Tape. Default-constructed handles are invalid.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense matrices. Build a graph with the op
// methods, call backward() on a 1x1 result, then read grad() of any
// node. The tape is rebuilt per training step; it never owns
// long-lived parameters (see ParamStore).
class Tape {
  public:
    Var leaf(Matrix v);

    const Matrix& val(Var v) const;
    const Matrix& grad(Var v) const;

    // elementwise / broadcast
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var cmul(Var a, Var b);           // Hadamard
    Var add_rowwise(Var m, Var row);  // broadcast a 1xC row over all rows
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var neg(Var a) { return scale(a, -1.0); }
    Var sigmoid(Var a);
    Var tanh_(Var a);
    Var relu(Var a);
    Var exp_(Var a);
    Var log_(Var a);
    Var sqrt_(Var a, double eps = 1e-12);

    // linear algebra
    Var matmul(Var a, Var b);
    Var transpose(Var a);

    // shape
    Var rows(Var a, int start, int count);
    Var cols(Var a, int start, int count);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);
    Var row_select(Var a, std::vector<int> idx);  // gather rows

    // reductions / normalizers
    Var sum(Var a);   // 1x1
    Var mean(Var a);  // 1x1
    Var mean_rows(Var a);  // 1xC column means
    Var softmax_rows(Var a);
    Var masked_softmax_rows(Var a, Matrix mask);  // mask: 1 keep, 0 ban
    Var log_softmax_rows(Var a);
    Var cumsum_cols(Var a);          // prefix sums left-to-right in each row
    Var reverse_cumsum_cols(Var a);  // suffix sums
    Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);

    // losses
    Var cross_entropy_mean(Var logits, std::vector<int> targets);
    Var bce_with_logits_sum(Var logits, Matrix targets);

    void backward(Var scalar_out);
    size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        Matrix val;
        Matrix grad;
        std::function<void(Tape&)> back;  // accumulates into parents
    };
    std::vector<Node> nodes_;

    Var push(Matrix v, std::function<void(Tape&)> back = nullptr);
    Matrix& g(int id) { return nodes_[id].grad; }
    const Matrix& v(int id) const { return nodes_[id].val; }
};

// Named long-lived parameter tensors shared across training steps.
struct ParamStore {
    std::map<std::string, Matrix> tensors;

    bool has(const std::string& name) const { return tensors.count(name) > 0; }
    Matrix& at(const std::string& name);
    const Matrix& at(const std::string& name) const;
    // Create if absent, using the given initializer; returns the tensor.
    Matrix& init(const std::string& name, int rows, int cols,
                 const std::function<double()>& gen);
    std::vector<std::string> names() const;
};

// Per-tape binding of ParamStore entries to leaves, so gradients can be
// routed back to named tensors after backward().
class ParamBinding {
  public:
    ParamBinding(Tape& tape, ParamStore& store) : tape_(tape), store_(store) {}
    Var operator()(const std::string& name);
    // Adds tape gradients of every bound parameter into `grads`.
    void collect_grads(std::map<std::string, Matrix>& grads) const;

  private:
    Tape& tape_;
    ParamStore& store_;
    std::map<std::string, Var> bound_;
};

struct AdamState {
    std::map<std::string, Matrix> m, v;
    long step = 0;
};

// In-place Adam update over every entry in grads.
void adam_step(ParamStore& params, const std::map<std::string, Matrix>& grads,
               AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

void sgd_step(ParamStore& params, const std::map<std::string, Matrix>& grads,
              double lr);

}  // namespace sgn::ad
