#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sgg/matrix.hpp"

namespace sgg::nn {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over dense double matrices. A Tape is built per
// forward pass; backward() fills gradients for every node reachable from the
// loss. Broadcasting: the second operand of add/sub/mul/div may be (1,C),
// (R,1) or (1,1) against an (R,C) first operand.
class Tape {
 public:
  Var input(Mat m);              // leaf, not differentiated
  Var param(const Mat& m);       // leaf, gradient tracked

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var scale(Var a, double s);
  Var add_const(Var a, double c);
  Var matmul(Var a, Var b);
  Var transpose(Var a);

  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);  // d/dx at 0 defined as 0
  Var square(Var a);

  Var sum(Var a);       // (1,1)
  Var mean(Var a);      // (1,1)
  Var row_sum(Var a);   // (R,1)
  Var lse_rows(Var a);  // (R,1) stable log-sum-exp per row
  Var softmax_rows(Var a);

  Var gather_rows(Var a, std::vector<int> idx);
  Var scatter_add_rows(Var a, std::vector<int> idx, int out_rows);
  Var gather_elems(Var a, std::vector<std::pair<int, int>> ij);  // (k,1)
  // softmax over entries sharing a segment id; input and output are (N,1)
  Var segment_softmax(Var a, std::vector<int> seg, int num_segments);

  Var concat_rows(Var a, Var b);
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, int c0, int c1);

  // rows scaled to unit L2 norm; throws GeometryError-free domain error on a
  // zero row because downstream cosine matching is undefined there
  Var rows_l2_normalize(Var a);

  const Mat& val(Var v) const;
  const Mat& grad(Var v) const;

  void backward(Var loss);  // loss must be (1,1)
  double scalar(Var v) const;

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  enum class Op {
    leaf,
    add,
    sub,
    mul,
    div,
    scale,
    add_const,
    matmul,
    transpose,
    sigmoid,
    tanh,
    relu,
    exp,
    log,
    sqrt,
    square,
    sum,
    mean,
    row_sum,
    lse_rows,
    softmax_rows,
    gather_rows,
    scatter_add_rows,
    gather_elems,
    segment_softmax,
    concat_rows,
    concat_cols,
    slice_cols,
    rows_l2_normalize,
  };

  struct Node {
    Op op = Op::leaf;
    int a = -1, b = -1;
    Mat val;
    Mat grad;
    bool needs_grad = false;
    double s = 0.0;
    int i0 = 0, i1 = 0;
    std::vector<int> idx;
    std::vector<std::pair<int, int>> elems;
  };

  Var push(Node n);
  Node& node(Var v);
  const Node& node(Var v) const;
  Var binary_elemwise(Var a, Var b, int op, double (*f)(double, double));
  Var unary_elemwise(Var a, int op, double (*f)(double));
  static void accumulate_broadcast(Mat& dst, const Mat& g);

  std::vector<Node> nodes_;
};

// Registers parameter matrices on a tape and applies SGD updates after
// backward. Keeps (storage, var) pairs so trainers and finite-difference
// checks can enumerate every parameter.
class Binder {
 public:
  explicit Binder(Tape& t) : tape_(&t) {}

  Var operator()(Mat& m, std::string name = {}) {
    Var v = tape_->param(m);
    bound_.push_back({&m, v, std::move(name)});
    return v;
  }

  void sgd_step(double lr);
  bool grads_finite() const;

  struct Entry {
    Mat* storage;
    Var var;
    std::string name;
  };
  const std::vector<Entry>& entries() const { return bound_; }

 private:
  Tape* tape_;
  std::vector<Entry> bound_;
};

}  // namespace sgg::nn
