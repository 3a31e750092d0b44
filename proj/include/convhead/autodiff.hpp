#pragma once

#include "convhead/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace convhead::ad {

/// A named trainable tensor. Vectors are stored as n x 1 matrices so the
/// optimizer and the checkpoint format treat everything uniformly.
struct Param {
  std::string name;
  Mat value;
  Mat grad;
  bool decay = true;  // false for biases, embeddings and fusion scalars

  void zero_grad() { grad.setZero(); }
  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }
};

/// Reverse-mode tape over vector-valued nodes. Values are computed eagerly;
/// backward() walks the recorded ops in reverse and accumulates gradients
/// into node slots and Param::grad. Node ids are indices into the tape, so a
/// node can only depend on earlier nodes and the reverse walk is a valid
/// topological order.
class Tape {
 public:
  using Id = std::int32_t;

  Id leaf(Vec v);
  Id matvec(Param& w, Id x);
  Id affine(Param& w, Param& b, Id x);
  Id embed(Param& table, Eigen::Index row);
  Id concat(Id a, Id b);
  Id slice(Id x, Eigen::Index offset, Eigen::Index len);
  Id tanh(Id x);
  Id sigmoid(Id x);
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);  // elementwise
  Id scale(Id x, double c);
  /// alpha * a + (1 - alpha) * b with a trainable scalar alpha (1x1 Param).
  Id blend(Param& alpha, Id a, Id b);
  /// Euclidean norm, size-1 output. Subgradient 0 at the origin.
  Id l2norm(Id x);

  const Vec& val(Id i) const { return nodes_[static_cast<std::size_t>(i)].val; }
  double scalar(Id i) const;
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(root)/d(root) = 1 and accumulates gradients into every Param
  /// reached by the graph. root must be a size-1 node.
  void backward(Id root);

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kMatvec,
    kAffine,
    kEmbed,
    kConcat,
    kSlice,
    kTanh,
    kSigmoid,
    kAdd,
    kSub,
    kMul,
    kScale,
    kBlend,
    kL2Norm,
  };

  struct Node {
    Vec val;
    Vec grad;
    Op op = Op::kLeaf;
    Id a = -1;
    Id b = -1;
    Param* w = nullptr;
    Param* bias = nullptr;
    Eigen::Index off = 0;
    Eigen::Index len = 0;
    double c = 0.0;
    bool touched = false;
  };

  Id push(Node n);
  Node& at(Id i) { return nodes_[static_cast<std::size_t>(i)]; }
  void bump(Id i, const Vec& g);

  std::vector<Node> nodes_;
};

}  // namespace convhead::ad
