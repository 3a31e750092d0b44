#include "convhead/autodiff.hpp"

#include <cmath>

namespace convhead::ad {

namespace {

void check_size(const char* op, Eigen::Index got, Eigen::Index want) {
  if (got != want) {
    throw ShapeError(std::string(op) + ": size mismatch, got " + std::to_string(got) +
                     ", expected " + std::to_string(want));
  }
}

}  // namespace

Tape::Id Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

double Tape::scalar(Id i) const {
  const Vec& v = val(i);
  check_size("scalar", v.size(), 1);
  return v[0];
}

Tape::Id Tape::leaf(Vec v) {
  Node n;
  n.val = std::move(v);
  n.op = Op::kLeaf;
  return push(std::move(n));
}

Tape::Id Tape::matvec(Param& w, Id x) {
  check_size("matvec", val(x).size(), w.value.cols());
  Node n;
  n.val.noalias() = w.value * val(x);
  n.op = Op::kMatvec;
  n.a = x;
  n.w = &w;
  return push(std::move(n));
}

Tape::Id Tape::affine(Param& w, Param& b, Id x) {
  check_size("affine", val(x).size(), w.value.cols());
  check_size("affine bias", b.value.rows(), w.value.rows());
  Node n;
  n.val.noalias() = w.value * val(x);
  n.val += b.value.col(0);
  n.op = Op::kAffine;
  n.a = x;
  n.w = &w;
  n.bias = &b;
  return push(std::move(n));
}

Tape::Id Tape::embed(Param& table, Eigen::Index row) {
  if (row < 0 || row >= table.value.rows()) {
    throw ConfigError("embed: label id " + std::to_string(row) +
                      " outside vocabulary of size " + std::to_string(table.value.rows()));
  }
  Node n;
  n.val = table.value.row(row).transpose();
  n.op = Op::kEmbed;
  n.w = &table;
  n.off = row;
  return push(std::move(n));
}

Tape::Id Tape::concat(Id a, Id b) {
  Node n;
  n.val.resize(val(a).size() + val(b).size());
  n.val << val(a), val(b);
  n.op = Op::kConcat;
  n.a = a;
  n.b = b;
  n.off = val(a).size();
  return push(std::move(n));
}

Tape::Id Tape::slice(Id x, Eigen::Index offset, Eigen::Index len) {
  if (offset < 0 || len < 0 || offset + len > val(x).size()) {
    throw ShapeError("slice: range [" + std::to_string(offset) + ", " +
                     std::to_string(offset + len) + ") outside vector of size " +
                     std::to_string(val(x).size()));
  }
  Node n;
  n.val = val(x).segment(offset, len);
  n.op = Op::kSlice;
  n.a = x;
  n.off = offset;
  n.len = len;
  return push(std::move(n));
}

Tape::Id Tape::tanh(Id x) {
  Node n;
  n.val = val(x).array().tanh();
  n.op = Op::kTanh;
  n.a = x;
  return push(std::move(n));
}

Tape::Id Tape::sigmoid(Id x) {
  Node n;
  n.val = (1.0 / (1.0 + (-val(x).array()).exp()));
  n.op = Op::kSigmoid;
  n.a = x;
  return push(std::move(n));
}

Tape::Id Tape::add(Id a, Id b) {
  check_size("add", val(b).size(), val(a).size());
  Node n;
  n.val = val(a) + val(b);
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
  check_size("sub", val(b).size(), val(a).size());
  Node n;
  n.val = val(a) - val(b);
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

Tape::Id Tape::mul(Id a, Id b) {
  check_size("mul", val(b).size(), val(a).size());
  Node n;
  n.val = val(a).cwiseProduct(val(b));
  n.op = Op::kMul;
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

Tape::Id Tape::scale(Id x, double c) {
  Node n;
  n.val = c * val(x);
  n.op = Op::kScale;
  n.a = x;
  n.c = c;
  return push(std::move(n));
}

Tape::Id Tape::blend(Param& alpha, Id a, Id b) {
  check_size("blend", val(b).size(), val(a).size());
  check_size("blend alpha", alpha.value.size(), 1);
  const double al = alpha.value(0, 0);
  Node n;
  n.val = al * val(a) + (1.0 - al) * val(b);
  n.op = Op::kBlend;
  n.a = a;
  n.b = b;
  n.w = &alpha;
  return push(std::move(n));
}

Tape::Id Tape::l2norm(Id x) {
  Node n;
  n.val = Vec::Constant(1, val(x).norm());
  n.op = Op::kL2Norm;
  n.a = x;
  return push(std::move(n));
}

void Tape::bump(Id i, const Vec& g) {
  Node& n = at(i);
  if (!n.touched) {
    n.grad = Vec::Zero(n.val.size());
    n.touched = true;
  }
  n.grad += g;
}

void Tape::backward(Id root) {
  check_size("backward root", val(root).size(), 1);
  for (Node& n : nodes_) {
    n.touched = false;
  }
  bump(root, Vec::Constant(1, 1.0));

  for (Id i = root; i >= 0; --i) {
    Node& n = at(i);
    if (!n.touched) {
      continue;
    }
    const Vec& g = n.grad;
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatvec:
        n.w->grad.noalias() += g * val(n.a).transpose();
        bump(n.a, n.w->value.transpose() * g);
        break;
      case Op::kAffine:
        n.w->grad.noalias() += g * val(n.a).transpose();
        n.bias->grad.col(0) += g;
        bump(n.a, n.w->value.transpose() * g);
        break;
      case Op::kEmbed:
        n.w->grad.row(n.off) += g.transpose();
        break;
      case Op::kConcat:
        bump(n.a, g.head(n.off));
        bump(n.b, g.tail(g.size() - n.off));
        break;
      case Op::kSlice: {
        Vec full = Vec::Zero(val(n.a).size());
        full.segment(n.off, n.len) = g;
        bump(n.a, full);
        break;
      }
      case Op::kTanh:
        bump(n.a, (g.array() * (1.0 - n.val.array().square())).matrix());
        break;
      case Op::kSigmoid:
        bump(n.a, (g.array() * n.val.array() * (1.0 - n.val.array())).matrix());
        break;
      case Op::kAdd:
        bump(n.a, g);
        bump(n.b, g);
        break;
      case Op::kSub:
        bump(n.a, g);
        bump(n.b, -g);
        break;
      case Op::kMul:
        bump(n.a, g.cwiseProduct(val(n.b)));
        bump(n.b, g.cwiseProduct(val(n.a)));
        break;
      case Op::kScale:
        bump(n.a, n.c * g);
        break;
      case Op::kBlend: {
        const double al = n.w->value(0, 0);
        n.w->grad(0, 0) += g.dot(val(n.a) - val(n.b));
        bump(n.a, al * g);
        bump(n.b, (1.0 - al) * g);
        break;
      }
      case Op::kL2Norm: {
        const double norm = n.val[0];
        if (norm > 0.0) {
          bump(n.a, (g[0] / norm) * val(n.a));
        }
        break;
      }
    }
  }
}

}  // namespace convhead::ad
