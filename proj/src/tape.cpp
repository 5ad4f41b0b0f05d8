#include "sgg/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sgg/errors.hpp"

namespace sgg::nn {

namespace {

bool broadcastable(const Mat& a, const Mat& b) {
  if (a.rows == b.rows && a.cols == b.cols) return true;
  if (b.rows == 1 && b.cols == a.cols) return true;
  if (b.cols == 1 && b.rows == a.rows) return true;
  if (b.rows == 1 && b.cols == 1) return true;
  return false;
}

double bval(const Mat& b, int r, int c) {
  int br = b.rows == 1 ? 0 : r;
  int bc = b.cols == 1 ? 0 : c;
  return b.at(br, bc);
}

void shape_check(bool ok, const char* what) {
  if (!ok) throw std::logic_error(std::string("tape shape mismatch: ") + what);
}

}  // namespace

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Var v) { return nodes_.at(static_cast<size_t>(v.id)); }
const Tape::Node& Tape::node(Var v) const { return nodes_.at(static_cast<size_t>(v.id)); }

const Mat& Tape::val(Var v) const { return node(v).val; }
const Mat& Tape::grad(Var v) const { return node(v).grad; }
double Tape::scalar(Var v) const { return node(v).val.at(0, 0); }

Var Tape::input(Mat m) {
  Node n;
  n.val = std::move(m);
  n.needs_grad = false;
  return push(std::move(n));
}

Var Tape::param(const Mat& m) {
  Node n;
  n.val = m;
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::binary_elemwise(Var a, Var b, int op, double (*f)(double, double)) {
  const Mat& av = val(a);
  const Mat& bv = val(b);
  shape_check(broadcastable(av, bv), "binary elementwise");
  Node n;
  n.op = static_cast<Op>(op);
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  n.val = Mat(av.rows, av.cols);
  for (int r = 0; r < av.rows; ++r)
    for (int c = 0; c < av.cols; ++c) n.val.at(r, c) = f(av.at(r, c), bval(bv, r, c));
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  return binary_elemwise(a, b, static_cast<int>(Op::add), [](double x, double y) { return x + y; });
}
Var Tape::sub(Var a, Var b) {
  return binary_elemwise(a, b, static_cast<int>(Op::sub), [](double x, double y) { return x - y; });
}
Var Tape::mul(Var a, Var b) {
  return binary_elemwise(a, b, static_cast<int>(Op::mul), [](double x, double y) { return x * y; });
}
Var Tape::div(Var a, Var b) {
  return binary_elemwise(a, b, static_cast<int>(Op::div), [](double x, double y) { return x / y; });
}

Var Tape::scale(Var a, double s) {
  Node n;
  n.op = Op::scale;
  n.a = a.id;
  n.s = s;
  n.needs_grad = node(a).needs_grad;
  n.val = val(a);
  for (double& x : n.val.v) x *= s;
  return push(std::move(n));
}

Var Tape::add_const(Var a, double c) {
  Node n;
  n.op = Op::add_const;
  n.a = a.id;
  n.s = c;
  n.needs_grad = node(a).needs_grad;
  n.val = val(a);
  for (double& x : n.val.v) x += c;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const Mat& av = val(a);
  const Mat& bv = val(b);
  shape_check(av.cols == bv.rows, "matmul");
  Node n;
  n.op = Op::matmul;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  n.val = sgg::matmul(av, bv);
  return push(std::move(n));
}

Var Tape::transpose(Var a) {
  const Mat& av = val(a);
  Node n;
  n.op = Op::transpose;
  n.a = a.id;
  n.needs_grad = node(a).needs_grad;
  n.val = Mat(av.cols, av.rows);
  for (int r = 0; r < av.rows; ++r)
    for (int c = 0; c < av.cols; ++c) n.val.at(c, r) = av.at(r, c);
  return push(std::move(n));
}

Var Tape::unary_elemwise(Var a, int op, double (*f)(double)) {
  Node n;
  n.op = static_cast<Op>(op);
  n.a = a.id;
  n.needs_grad = node(a).needs_grad;
  n.val = val(a);
  for (double& x : n.val.v) x = f(x);
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  return unary_elemwise(a, static_cast<int>(Op::sigmoid), [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}
Var Tape::tanh(Var a) {
  return unary_elemwise(a, static_cast<int>(Op::tanh), [](double x) { return std::tanh(x); });
}
Var Tape::relu(Var a) {
  return unary_elemwise(a, static_cast<int>(Op::relu), [](double x) { return x > 0.0 ? x : 0.0; });
}
Var Tape::exp(Var a) {
  return unary_elemwise(a, static_cast<int>(Op::exp), [](double x) { return std::exp(x); });
}
Var Tape::log(Var a) {
  return unary_elemwise(a, static_cast<int>(Op::log), [](double x) { return std::log(x); });
}
Var Tape::sqrt(Var a) {
  return unary_elemwise(a, static_cast<int>(Op::sqrt), [](double x) { return std::sqrt(x); });
}
Var Tape::square(Var a) {
  return unary_elemwise(a, static_cast<int>(Op::square), [](double x) { return x * x; });
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::sum;
  n.a = a.id;
  n.needs_grad = node(a).needs_grad;
  double s = 0.0;
  for (double x : val(a).v) s += x;
  n.val = Mat(1, 1, s);
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  Node n;
  n.op = Op::mean;
  n.a = a.id;
  n.needs_grad = node(a).needs_grad;
  double s = 0.0;
  for (double x : val(a).v) s += x;
  n.val = Mat(1, 1, s / static_cast<double>(val(a).size()));
  return push(std::move(n));
}

Var Tape::row_sum(Var a) {
  const Mat& av = val(a);
  Node n;
  n.op = Op::row_sum;
  n.a = a.id;
  n.needs_grad = node(a).needs_grad;
  n.val = Mat(av.rows, 1);
  for (int r = 0; r < av.rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < av.cols; ++c) s += av.at(r, c);
    n.val.at(r, 0) = s;
  }
  return push(std::move(n));
}

Var Tape::lse_rows(Var a) {
  const Mat& av = val(a);
  Node n;
  n.op = Op::lse_rows;
  n.a = a.id;
  n.needs_grad = node(a).needs_grad;
  n.val = Mat(av.rows, 1);
  for (int r = 0; r < av.rows; ++r) {
    double m = av.at(r, 0);
    for (int c = 1; c < av.cols; ++c) m = std::max(m, av.at(r, c));
    double s = 0.0;
    for (int c = 0; c < av.cols; ++c) s += std::exp(av.at(r, c) - m);
    n.val.at(r, 0) = m + std::log(s);
  }
  return push(std::move(n));
}

Var Tape::softmax_rows(Var a) {
  const Mat& av = val(a);
  Node n;
  n.op = Op::softmax_rows;
  n.a = a.id;
  n.needs_grad = node(a).needs_grad;
  n.val = Mat(av.rows, av.cols);
  for (int r = 0; r < av.rows; ++r) {
    double m = av.at(r, 0);
    for (int c = 1; c < av.cols; ++c) m = std::max(m, av.at(r, c));
    double s = 0.0;
    for (int c = 0; c < av.cols; ++c) s += std::exp(av.at(r, c) - m);
    for (int c = 0; c < av.cols; ++c) n.val.at(r, c) = std::exp(av.at(r, c) - m) / s;
  }
  return push(std::move(n));
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
  const Mat& av = val(a);
  Node n;
  n.op = Op::gather_rows;
  n.a = a.id;
  n.needs_grad = node(a).needs_grad;
  n.val = Mat(static_cast<int>(idx.size()), av.cols);
  for (size_t i = 0; i < idx.size(); ++i) {
    shape_check(idx[i] >= 0 && idx[i] < av.rows, "gather_rows index");
    for (int c = 0; c < av.cols; ++c) n.val.at(static_cast<int>(i), c) = av.at(idx[i], c);
  }
  n.idx = std::move(idx);
  return push(std::move(n));
}

Var Tape::scatter_add_rows(Var a, std::vector<int> idx, int out_rows) {
  const Mat& av = val(a);
  shape_check(static_cast<int>(idx.size()) == av.rows, "scatter_add_rows");
  Node n;
  n.op = Op::scatter_add_rows;
  n.a = a.id;
  n.needs_grad = node(a).needs_grad;
  n.val = Mat(out_rows, av.cols);
  for (int i = 0; i < av.rows; ++i) {
    shape_check(idx[static_cast<size_t>(i)] >= 0 && idx[static_cast<size_t>(i)] < out_rows,
                "scatter_add_rows index");
    for (int c = 0; c < av.cols; ++c) n.val.at(idx[static_cast<size_t>(i)], c) += av.at(i, c);
  }
  n.idx = std::move(idx);
  return push(std::move(n));
}

Var Tape::gather_elems(Var a, std::vector<std::pair<int, int>> ij) {
  const Mat& av = val(a);
  Node n;
  n.op = Op::gather_elems;
  n.a = a.id;
  n.needs_grad = node(a).needs_grad;
  n.val = Mat(static_cast<int>(ij.size()), 1);
  for (size_t i = 0; i < ij.size(); ++i) n.val.at(static_cast<int>(i), 0) = av.at(ij[i].first, ij[i].second);
  n.elems = std::move(ij);
  return push(std::move(n));
}

Var Tape::segment_softmax(Var a, std::vector<int> seg, int num_segments) {
  const Mat& av = val(a);
  shape_check(av.cols == 1 && static_cast<int>(seg.size()) == av.rows, "segment_softmax");
  Node n;
  n.op = Op::segment_softmax;
  n.a = a.id;
  n.needs_grad = node(a).needs_grad;
  std::vector<double> mx(static_cast<size_t>(num_segments), -1e300);
  for (int i = 0; i < av.rows; ++i) mx[static_cast<size_t>(seg[static_cast<size_t>(i)])] =
      std::max(mx[static_cast<size_t>(seg[static_cast<size_t>(i)])], av.at(i, 0));
  std::vector<double> denom(static_cast<size_t>(num_segments), 0.0);
  n.val = Mat(av.rows, 1);
  for (int i = 0; i < av.rows; ++i) {
    int s = seg[static_cast<size_t>(i)];
    n.val.at(i, 0) = std::exp(av.at(i, 0) - mx[static_cast<size_t>(s)]);
    denom[static_cast<size_t>(s)] += n.val.at(i, 0);
  }
  for (int i = 0; i < av.rows; ++i) n.val.at(i, 0) /= denom[static_cast<size_t>(seg[static_cast<size_t>(i)])];
  n.idx = std::move(seg);
  n.i0 = num_segments;
  return push(std::move(n));
}

Var Tape::concat_rows(Var a, Var b) {
  const Mat& av = val(a);
  const Mat& bv = val(b);
  shape_check(av.cols == bv.cols, "concat_rows");
  Node n;
  n.op = Op::concat_rows;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  n.val = Mat(av.rows + bv.rows, av.cols);
  std::copy(av.v.begin(), av.v.end(), n.val.v.begin());
  std::copy(bv.v.begin(), bv.v.end(), n.val.v.begin() + static_cast<long>(av.size()));
  return push(std::move(n));
}

Var Tape::concat_cols(Var a, Var b) {
  const Mat& av = val(a);
  const Mat& bv = val(b);
  shape_check(av.rows == bv.rows, "concat_cols");
  Node n;
  n.op = Op::concat_cols;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = node(a).needs_grad || node(b).needs_grad;
  n.val = Mat(av.rows, av.cols + bv.cols);
  for (int r = 0; r < av.rows; ++r) {
    for (int c = 0; c < av.cols; ++c) n.val.at(r, c) = av.at(r, c);
    for (int c = 0; c < bv.cols; ++c) n.val.at(r, av.cols + c) = bv.at(r, c);
  }
  return push(std::move(n));
}

Var Tape::slice_cols(Var a, int c0, int c1) {
  const Mat& av = val(a);
  shape_check(0 <= c0 && c0 < c1 && c1 <= av.cols, "slice_cols");
  Node n;
  n.op = Op::slice_cols;
  n.a = a.id;
  n.i0 = c0;
  n.i1 = c1;
  n.needs_grad = node(a).needs_grad;
  n.val = Mat(av.rows, c1 - c0);
  for (int r = 0; r < av.rows; ++r)
    for (int c = c0; c < c1; ++c) n.val.at(r, c - c0) = av.at(r, c);
  return push(std::move(n));
}

Var Tape::rows_l2_normalize(Var a) {
  const Mat& av = val(a);
  Node n;
  n.op = Op::rows_l2_normalize;
  n.a = a.id;
  n.needs_grad = node(a).needs_grad;
  n.val = Mat(av.rows, av.cols);
  for (int r = 0; r < av.rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < av.cols; ++c) s += av.at(r, c) * av.at(r, c);
    double norm = std::sqrt(s);
    if (norm == 0.0) throw UserError("rows_l2_normalize: zero row " + std::to_string(r));
    for (int c = 0; c < av.cols; ++c) n.val.at(r, c) = av.at(r, c) / norm;
  }
  return push(std::move(n));
}

void Tape::accumulate_broadcast(Mat& dst, const Mat& g) {
  if (dst.rows == g.rows && dst.cols == g.cols) {
    for (size_t i = 0; i < dst.size(); ++i) dst.v[i] += g.v[i];
    return;
  }
  // reduce over the broadcast dimensions
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c)
      dst.at(dst.rows == 1 ? 0 : r, dst.cols == 1 ? 0 : c) += g.at(r, c);
}

void Tape::backward(Var loss) {
  Node& top = node(loss);
  if (top.val.rows != 1 || top.val.cols != 1) throw std::logic_error("backward: loss must be scalar");
  for (Node& n : nodes_) n.grad = Mat(n.val.rows, n.val.cols);
  top.grad.at(0, 0) = 1.0;

  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad || n.op == Op::leaf) continue;
    const Mat& g = n.grad;
    Node* an = n.a >= 0 ? &nodes_[static_cast<size_t>(n.a)] : nullptr;
    Node* bn = n.b >= 0 ? &nodes_[static_cast<size_t>(n.b)] : nullptr;

    switch (n.op) {
      case Op::add: {
        if (an->needs_grad) accumulate_broadcast(an->grad, g);
        if (bn->needs_grad) accumulate_broadcast(bn->grad, g);
        break;
      }
      case Op::sub: {
        if (an->needs_grad) accumulate_broadcast(an->grad, g);
        if (bn->needs_grad) {
          Mat neg = g;
          for (double& x : neg.v) x = -x;
          accumulate_broadcast(bn->grad, neg);
        }
        break;
      }
      case Op::mul: {
        if (an->needs_grad) {
          Mat da(g.rows, g.cols);
          for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) da.at(r, c) = g.at(r, c) * bval(bn->val, r, c);
          accumulate_broadcast(an->grad, da);
        }
        if (bn->needs_grad) {
          Mat db(g.rows, g.cols);
          for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) db.at(r, c) = g.at(r, c) * an->val.at(r, c);
          accumulate_broadcast(bn->grad, db);
        }
        break;
      }
      case Op::div: {
        if (an->needs_grad) {
          Mat da(g.rows, g.cols);
          for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) da.at(r, c) = g.at(r, c) / bval(bn->val, r, c);
          accumulate_broadcast(an->grad, da);
        }
        if (bn->needs_grad) {
          Mat db(g.rows, g.cols);
          for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) {
              double bv_ = bval(bn->val, r, c);
              db.at(r, c) = -g.at(r, c) * an->val.at(r, c) / (bv_ * bv_);
            }
          accumulate_broadcast(bn->grad, db);
        }
        break;
      }
      case Op::scale: {
        if (an->needs_grad)
          for (size_t i = 0; i < g.size(); ++i) an->grad.v[i] += g.v[i] * n.s;
        break;
      }
      case Op::add_const: {
        if (an->needs_grad)
          for (size_t i = 0; i < g.size(); ++i) an->grad.v[i] += g.v[i];
        break;
      }
      case Op::matmul: {
        if (an->needs_grad) {
          // da += g * b^T
          for (int i = 0; i < an->val.rows; ++i)
            for (int k = 0; k < bn->val.rows; ++k) {
              double s = 0.0;
              for (int j = 0; j < bn->val.cols; ++j) s += g.at(i, j) * bn->val.at(k, j);
              an->grad.at(i, k) += s;
            }
        }
        if (bn->needs_grad) {
          // db += a^T * g
          for (int k = 0; k < an->val.cols; ++k)
            for (int j = 0; j < g.cols; ++j) {
              double s = 0.0;
              for (int i = 0; i < an->val.rows; ++i) s += an->val.at(i, k) * g.at(i, j);
              bn->grad.at(k, j) += s;
            }
        }
        break;
      }
      case Op::transpose: {
        if (an->needs_grad)
          for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) an->grad.at(c, r) += g.at(r, c);
        break;
      }
      case Op::sigmoid: {
        if (an->needs_grad)
          for (size_t i = 0; i < g.size(); ++i)
            an->grad.v[i] += g.v[i] * n.val.v[i] * (1.0 - n.val.v[i]);
        break;
      }
      case Op::tanh: {
        if (an->needs_grad)
          for (size_t i = 0; i < g.size(); ++i)
            an->grad.v[i] += g.v[i] * (1.0 - n.val.v[i] * n.val.v[i]);
        break;
      }
      case Op::relu: {
        if (an->needs_grad)
          for (size_t i = 0; i < g.size(); ++i)
            an->grad.v[i] += an->val.v[i] > 0.0 ? g.v[i] : 0.0;
        break;
      }
      case Op::exp: {
        if (an->needs_grad)
          for (size_t i = 0; i < g.size(); ++i) an->grad.v[i] += g.v[i] * n.val.v[i];
        break;
      }
      case Op::log: {
        if (an->needs_grad)
          for (size_t i = 0; i < g.size(); ++i) an->grad.v[i] += g.v[i] / an->val.v[i];
        break;
      }
      case Op::sqrt: {
        if (an->needs_grad)
          for (size_t i = 0; i < g.size(); ++i)
            an->grad.v[i] += n.val.v[i] > 0.0 ? g.v[i] * 0.5 / n.val.v[i] : 0.0;
        break;
      }
      case Op::square: {
        if (an->needs_grad)
          for (size_t i = 0; i < g.size(); ++i) an->grad.v[i] += g.v[i] * 2.0 * an->val.v[i];
        break;
      }
      case Op::sum: {
        if (an->needs_grad)
          for (double& x : an->grad.v) x += g.at(0, 0);
        break;
      }
      case Op::mean: {
        if (an->needs_grad) {
          double gg = g.at(0, 0) / static_cast<double>(an->val.size());
          for (double& x : an->grad.v) x += gg;
        }
        break;
      }
      case Op::row_sum: {
        if (an->needs_grad)
          for (int r = 0; r < an->val.rows; ++r)
            for (int c = 0; c < an->val.cols; ++c) an->grad.at(r, c) += g.at(r, 0);
        break;
      }
      case Op::lse_rows: {
        if (an->needs_grad)
          for (int r = 0; r < an->val.rows; ++r)
            for (int c = 0; c < an->val.cols; ++c)
              an->grad.at(r, c) += g.at(r, 0) * std::exp(an->val.at(r, c) - n.val.at(r, 0));
        break;
      }
      case Op::softmax_rows: {
        if (an->needs_grad)
          for (int r = 0; r < g.rows; ++r) {
            double dot = 0.0;
            for (int c = 0; c < g.cols; ++c) dot += g.at(r, c) * n.val.at(r, c);
            for (int c = 0; c < g.cols; ++c)
              an->grad.at(r, c) += n.val.at(r, c) * (g.at(r, c) - dot);
          }
        break;
      }
      case Op::gather_rows: {
        if (an->needs_grad)
          for (int i = 0; i < g.rows; ++i)
            for (int c = 0; c < g.cols; ++c) an->grad.at(n.idx[static_cast<size_t>(i)], c) += g.at(i, c);
        break;
      }
      case Op::scatter_add_rows: {
        if (an->needs_grad)
          for (int i = 0; i < an->val.rows; ++i)
            for (int c = 0; c < g.cols; ++c) an->grad.at(i, c) += g.at(n.idx[static_cast<size_t>(i)], c);
        break;
      }
      case Op::gather_elems: {
        if (an->needs_grad)
          for (size_t i = 0; i < n.elems.size(); ++i)
            an->grad.at(n.elems[i].first, n.elems[i].second) += g.at(static_cast<int>(i), 0);
        break;
      }
      case Op::segment_softmax: {
        if (an->needs_grad) {
          std::vector<double> dot(static_cast<size_t>(n.i0), 0.0);
          for (int i = 0; i < g.rows; ++i)
            dot[static_cast<size_t>(n.idx[static_cast<size_t>(i)])] += g.at(i, 0) * n.val.at(i, 0);
          for (int i = 0; i < g.rows; ++i)
            an->grad.at(i, 0) +=
                n.val.at(i, 0) * (g.at(i, 0) - dot[static_cast<size_t>(n.idx[static_cast<size_t>(i)])]);
        }
        break;
      }
      case Op::concat_rows: {
        if (an->needs_grad)
          for (int r = 0; r < an->val.rows; ++r)
            for (int c = 0; c < g.cols; ++c) an->grad.at(r, c) += g.at(r, c);
        if (bn->needs_grad)
          for (int r = 0; r < bn->val.rows; ++r)
            for (int c = 0; c < g.cols; ++c) bn->grad.at(r, c) += g.at(an->val.rows + r, c);
        break;
      }
      case Op::concat_cols: {
        if (an->needs_grad)
          for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < an->val.cols; ++c) an->grad.at(r, c) += g.at(r, c);
        if (bn->needs_grad)
          for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < bn->val.cols; ++c) bn->grad.at(r, c) += g.at(r, an->val.cols + c);
        break;
      }
      case Op::slice_cols: {
        if (an->needs_grad)
          for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) an->grad.at(r, n.i0 + c) += g.at(r, c);
        break;
      }
      case Op::rows_l2_normalize: {
        if (an->needs_grad)
          for (int r = 0; r < g.rows; ++r) {
            double norm = 0.0;
            for (int c = 0; c < g.cols; ++c) norm += an->val.at(r, c) * an->val.at(r, c);
            norm = std::sqrt(norm);
            double dot = 0.0;
            for (int c = 0; c < g.cols; ++c) dot += g.at(r, c) * n.val.at(r, c);
            for (int c = 0; c < g.cols; ++c)
              an->grad.at(r, c) += (g.at(r, c) - n.val.at(r, c) * dot) / norm;
          }
        break;
      }
      case Op::leaf:
        break;
    }
  }
}

void Binder::sgd_step(double lr) {
  for (const Entry& e : bound_) {
    const Mat& g = tape_->grad(e.var);
    for (size_t i = 0; i < e.storage->size(); ++i) e.storage->v[i] -= lr * g.v[i];
  }
}

bool Binder::grads_finite() const {
  for (const Entry& e : bound_)
    for (double x : tape_->grad(e.var).v)
      if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace sgg::nn
