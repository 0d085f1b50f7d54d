#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ccd/errors.hpp"

namespace ccd {

using Mat = Eigen::MatrixXd;

// A named trainable tensor. Gradients accumulate across backward passes
// until the optimizer consumes them; m/v are Adam moments.
struct Param {
  std::string name;
  Mat value;
  Mat grad;
  Mat m;
  Mat v;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Owns parameters in a stable, deterministic insertion order; that order is
// the canonical one for serialization and hashing.
class ParamStore {
 public:
  Param& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  std::vector<Param*> all();
  std::vector<const Param*> all() const;
  size_t size() const { return items_.size(); }
  void zero_grads();
  // FNV-1a over all values in canonical order; detects any parameter change.
  uint64_t value_hash() const;

 private:
  std::vector<std::unique_ptr<Param>> items_;
  std::map<std::string, Param*> index_;
};

struct Var {
  int i = -1;
  bool valid() const { return i >= 0; }
};

// Reverse-mode tape over Eigen matrices. Build a graph with the op methods,
// then call backward() on a 1x1 loss node. Parameter leaves push their
// gradient contributions into the owning Param on backward().
class Tape {
 public:
  Var leaf(Mat value);
  Var use(Param& p);

  const Mat& val(Var v) const { return nodes_[v.i].val; }
  size_t size() const { return nodes_.size(); }

  void backward(Var loss);

  // --- ops ---
  Var matmul(Var a, Var b);     // A * B
  Var matmul_nt(Var a, Var b);  // A * B^T
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double s);
  Var add_rowvec(Var a, Var row);  // broadcast a 1xC row over all rows of a
  Var row_select(Var a, const std::vector<int>& rows);
  Var slice_rows(Var a, int r0, int n);
  Var slice_cols(Var a, int c0, int n);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  Var mean_rows(Var a);  // 1xC column means
  Var max_rows(Var a);   // 1xC column maxima; ties route to the lowest row
  Var softmax_rows(Var scores, const Mat* add_mask = nullptr);
  Var layernorm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
  Var gelu(Var a);  // tanh approximation
  Var relu(Var a);  // subgradient 0 at 0
  Var l2normalize_rows(Var a);
  Var gather(Var a, int r, int c);  // 1x1
  Var sum_all(Var a);               // 1x1
  Var square(Var a);

  // Sum of token cross-entropies over rows whose target id is >= 0; the
  // number of contributing rows is written to *count_out.
  Var cross_entropy_sum(Var logits, const std::vector<int>& targets, int* count_out);

  // Sum over included rows of KL(softmax(teacher/tau) || softmax(student/tau)) * tau^2.
  Var kl_div_sum(Var student_logits, const Mat& teacher_logits, double tau,
                 const std::vector<char>& include);

  // Sum of hinge terms of the contrastive distillation loss given the full
  // similarity matrix S (rows: student index, cols: teacher index). Mines the
  // hard negatives internally; argmax ties break toward the lowest index.
  Var triplet_hinge_sum(Var sim, double alpha);

 private:
  struct Node {
    Mat val;
    Mat grad;
    std::function<void()> back;
  };

  Var push(Mat value, std::function<void()> back = nullptr);
  // Accumulate `delta` into node i's gradient, sizing it lazily.
  void accum(int i, const Mat& delta);
  Mat& grad_of(int i) { return nodes_[i].grad; }

  std::vector<Node> nodes_;
};

// Softmax of one row vector, numerically stable. Shared with value-level code.
Eigen::RowVectorXd softmax_row(const Eigen::RowVectorXd& x);

}  // namespace ccd
