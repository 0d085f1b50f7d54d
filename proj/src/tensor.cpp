#include "ccd/tensor.hpp"

#include "ccd/rng.hpp"

namespace ccd {

Param& ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  p->value = Mat::Zero(rows, cols);
  Param& ref = *p;
  index_[name] = p.get();
  items_.push_back(std::move(p));
  return ref;
}

Param* ParamStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

const Param* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

std::vector<Param*> ParamStore::all() {
  std::vector<Param*> out;
  out.reserve(items_.size());
  for (auto& p : items_) out.push_back(p.get());
  return out;
}

std::vector<const Param*> ParamStore::all() const {
  std::vector<const Param*> out;
  out.reserve(items_.size());
  for (auto& p : items_) out.push_back(p.get());
  return out;
}

void ParamStore::zero_grads() {
  for (auto& p : items_) p->zero_grad();
}

uint64_t ParamStore::value_hash() const {
  uint64_t h = 1469598103934665603ull;
  for (const auto& p : items_) {
    h = fnv1a64(p->name, h);
    h = fnv1a64(p->value.data(), sizeof(double) * static_cast<size_t>(p->value.size()), h);
  }
  return h;
}

Var Tape::push(Mat value, std::function<void()> back) {
  nodes_.push_back(Node{std::move(value), Mat(), std::move(back)});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::accum(int i, const Mat& delta) {
  Mat& g = nodes_[i].grad;
  if (g.size() == 0) {
    g = delta;
  } else {
    g += delta;
  }
}

Var Tape::leaf(Mat value) { return push(std::move(value)); }

Var Tape::use(Param& p) {
  Var v = push(p.value);
  int i = v.i;
  Param* pp = &p;
  nodes_[i].back = [this, i, pp]() {
    if (pp->grad.size() == 0) pp->grad = Mat::Zero(pp->value.rows(), pp->value.cols());
    pp->grad += nodes_[i].grad;
  };
  return v;
}

void Tape::backward(Var loss) {
  if (!loss.valid()) throw InputError("backward on invalid Var");
  Node& ln = nodes_[loss.i];
  if (ln.val.rows() != 1 || ln.val.cols() != 1)
    throw InputError("backward requires a 1x1 loss node");
  ln.grad = Mat::Ones(1, 1);
  for (int i = loss.i; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() != 0 && n.back) n.back();
  }
}

Var Tape::matmul(Var a, Var b) {
  Var out = push(nodes_[a.i].val * nodes_[b.i].val);
  int o = out.i;
  nodes_[o].back = [this, o, a, b]() {
    const Mat& g = nodes_[o].grad;
    accum(a.i, g * nodes_[b.i].val.transpose());
    accum(b.i, nodes_[a.i].val.transpose() * g);
  };
  return out;
}

Var Tape::matmul_nt(Var a, Var b) {
  Var out = push(nodes_[a.i].val * nodes_[b.i].val.transpose());
  int o = out.i;
  nodes_[o].back = [this, o, a, b]() {
    const Mat& g = nodes_[o].grad;
    accum(a.i, g * nodes_[b.i].val);
    accum(b.i, g.transpose() * nodes_[a.i].val);
  };
  return out;
}

Var Tape::add(Var a, Var b) {
  Var out = push(nodes_[a.i].val + nodes_[b.i].val);
  int o = out.i;
  nodes_[o].back = [this, o, a, b]() {
    accum(a.i, nodes_[o].grad);
    accum(b.i, nodes_[o].grad);
  };
  return out;
}

Var Tape::sub(Var a, Var b) {
  Var out = push(nodes_[a.i].val - nodes_[b.i].val);
  int o = out.i;
  nodes_[o].back = [this, o, a, b]() {
    accum(a.i, nodes_[o].grad);
    accum(b.i, -nodes_[o].grad);
  };
  return out;
}

Var Tape::mul(Var a, Var b) {
  Var out = push(nodes_[a.i].val.cwiseProduct(nodes_[b.i].val));
  int o = out.i;
  nodes_[o].back = [this, o, a, b]() {
    const Mat& g = nodes_[o].grad;
    accum(a.i, g.cwiseProduct(nodes_[b.i].val));
    accum(b.i, g.cwiseProduct(nodes_[a.i].val));
  };
  return out;
}

Var Tape::scale(Var a, double s) {
  Var out = push(nodes_[a.i].val * s);
  int o = out.i;
  nodes_[o].back = [this, o, a, s]() { accum(a.i, nodes_[o].grad * s); };
  return out;
}

Var Tape::add_rowvec(Var a, Var row) {
  const Mat& av = nodes_[a.i].val;
  const Mat& rv = nodes_[row.i].val;
  Var out = push(av.rowwise() + rv.row(0));
  int o = out.i;
  nodes_[o].back = [this, o, a, row]() {
    const Mat& g = nodes_[o].grad;
    accum(a.i, g);
    accum(row.i, g.colwise().sum());
  };
  return out;
}

Var Tape::row_select(Var a, const std::vector<int>& rows) {
  const Mat& av = nodes_[a.i].val;
  Mat v(static_cast<Eigen::Index>(rows.size()), av.cols());
  for (size_t k = 0; k < rows.size(); ++k) v.row(static_cast<Eigen::Index>(k)) = av.row(rows[k]);
  Var out = push(std::move(v));
  int o = out.i;
  nodes_[o].back = [this, o, a, rows]() {
    const Mat& g = nodes_[o].grad;
    Mat d = Mat::Zero(nodes_[a.i].val.rows(), nodes_[a.i].val.cols());
    for (size_t k = 0; k < rows.size(); ++k)
      d.row(rows[k]) += g.row(static_cast<Eigen::Index>(k));
    accum(a.i, d);
  };
  return out;
}

Var Tape::slice_rows(Var a, int r0, int n) {
  Var out = push(nodes_[a.i].val.middleRows(r0, n));
  int o = out.i;
  nodes_[o].back = [this, o, a, r0, n]() {
    Mat d = Mat::Zero(nodes_[a.i].val.rows(), nodes_[a.i].val.cols());
    d.middleRows(r0, n) = nodes_[o].grad;
    accum(a.i, d);
  };
  return out;
}

Var Tape::slice_cols(Var a, int c0, int n) {
  Var out = push(nodes_[a.i].val.middleCols(c0, n));
  int o = out.i;
  nodes_[o].back = [this, o, a, c0, n]() {
    Mat d = Mat::Zero(nodes_[a.i].val.rows(), nodes_[a.i].val.cols());
    d.middleCols(c0, n) = nodes_[o].grad;
    accum(a.i, d);
  };
  return out;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw InputError("concat_rows on empty list");
  Eigen::Index rows = 0;
  Eigen::Index cols = nodes_[parts[0].i].val.cols();
  for (Var p : parts) rows += nodes_[p.i].val.rows();
  Mat v(rows, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    const Mat& pv = nodes_[p.i].val;
    v.middleRows(r, pv.rows()) = pv;
    r += pv.rows();
  }
  Var out = push(std::move(v));
  int o = out.i;
  nodes_[o].back = [this, o, parts]() {
    const Mat& g = nodes_[o].grad;
    Eigen::Index r = 0;
    for (Var p : parts) {
      Eigen::Index n = nodes_[p.i].val.rows();
      accum(p.i, g.middleRows(r, n));
      r += n;
    }
  };
  return out;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InputError("concat_cols on empty list");
  Eigen::Index rows = nodes_[parts[0].i].val.rows();
  Eigen::Index cols = 0;
  for (Var p : parts) cols += nodes_[p.i].val.cols();
  Mat v(rows, cols);
  Eigen::Index c = 0;
  for (Var p : parts) {
    const Mat& pv = nodes_[p.i].val;
    v.middleCols(c, pv.cols()) = pv;
    c += pv.cols();
  }
  Var out = push(std::move(v));
  int o = out.i;
  nodes_[o].back = [this, o, parts]() {
    const Mat& g = nodes_[o].grad;
    Eigen::Index c = 0;
    for (Var p : parts) {
      Eigen::Index n = nodes_[p.i].val.cols();
      accum(p.i, g.middleCols(c, n));
      c += n;
    }
  };
  return out;
}

Var Tape::mean_rows(Var a) {
  const Mat& av = nodes_[a.i].val;
  Var out = push(av.colwise().mean());
  int o = out.i;
  nodes_[o].back = [this, o, a]() {
    const Mat& g = nodes_[o].grad;
    Eigen::Index n = nodes_[a.i].val.rows();
    accum(a.i, g.replicate(n, 1) / static_cast<double>(n));
  };
  return out;
}

Var Tape::max_rows(Var a) {
  const Mat& av = nodes_[a.i].val;
  Mat v(1, av.cols());
  std::vector<int> arg(static_cast<size_t>(av.cols()));
  for (Eigen::Index c = 0; c < av.cols(); ++c) {
    int best = 0;
    for (Eigen::Index r = 1; r < av.rows(); ++r)
      if (av(r, c) > av(best, c)) best = static_cast<int>(r);
    arg[static_cast<size_t>(c)] = best;
    v(0, c) = av(best, c);
  }
  Var out = push(std::move(v));
  int o = out.i;
  nodes_[o].back = [this, o, a, arg]() {
    const Mat& g = nodes_[o].grad;
    Mat d = Mat::Zero(nodes_[a.i].val.rows(), nodes_[a.i].val.cols());
    for (Eigen::Index c = 0; c < d.cols(); ++c) d(arg[static_cast<size_t>(c)], c) = g(0, c);
    accum(a.i, d);
  };
  return out;
}

Eigen::RowVectorXd softmax_row(const Eigen::RowVectorXd& x) {
  double m = x.maxCoeff();
  Eigen::RowVectorXd e = (x.array() - m).exp();
  return e / e.sum();
}

Var Tape::softmax_rows(Var scores, const Mat* add_mask) {
  Mat s = nodes_[scores.i].val;
  if (add_mask) s += *add_mask;
  Mat y(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) y.row(r) = softmax_row(s.row(r));
  Var out = push(std::move(y));
  int o = out.i;
  nodes_[o].back = [this, o, scores]() {
    const Mat& g = nodes_[o].grad;
    const Mat& y = nodes_[o].val;
    Mat d(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      double dot = g.row(r).dot(y.row(r));
      d.row(r) = y.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
    }
    accum(scores.i, d);
  };
  return out;
}

Var Tape::layernorm_rows(Var x, Var gain, Var bias, double eps) {
  const Mat& xv = nodes_[x.i].val;
  Eigen::Index n = xv.rows(), c = xv.cols();
  Mat xhat(n, c);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    double mu = xv.row(r).mean();
    Eigen::RowVectorXd cen = xv.row(r).array() - mu;
    double var = cen.squaredNorm() / static_cast<double>(c);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std(r) = is;
    xhat.row(r) = cen * is;
  }
  const Mat& gv = nodes_[gain.i].val;
  const Mat& bv = nodes_[bias.i].val;
  Mat y = (xhat.array().rowwise() * gv.row(0).array()).rowwise() + bv.row(0).array();
  Var out = push(std::move(y));
  int o = out.i;
  nodes_[o].back = [this, o, x, gain, bias, xhat, inv_std]() {
    const Mat& g = nodes_[o].grad;
    const Mat& gv = nodes_[gain.i].val;
    Eigen::Index n = g.rows(), c = g.cols();
    Mat dx(n, c);
    for (Eigen::Index r = 0; r < n; ++r) {
      Eigen::RowVectorXd gh = g.row(r).cwiseProduct(gv.row(0));
      double mean_gh = gh.mean();
      double mean_ghx = gh.cwiseProduct(xhat.row(r)).mean();
      dx.row(r) =
          (gh.array() - mean_gh - xhat.row(r).array() * mean_ghx).matrix() * inv_std(r);
    }
    accum(x.i, dx);
    accum(gain.i, g.cwiseProduct(xhat).colwise().sum());
    accum(bias.i, g.colwise().sum());
  };
  return out;
}

Var Tape::gelu(Var a) {
  const Mat& x = nodes_[a.i].val;
  const double k = std::sqrt(2.0 / M_PI);
  Mat u = k * (x.array() + 0.044715 * x.array().cube());
  Mat t = u.array().tanh();
  Mat y = 0.5 * x.array() * (1.0 + t.array());
  Var out = push(std::move(y));
  int o = out.i;
  nodes_[o].back = [this, o, a, t, k]() {
    const Mat& g = nodes_[o].grad;
    const Mat& x = nodes_[a.i].val;
    Eigen::ArrayXXd sech2 = 1.0 - t.array().square();
    Eigen::ArrayXXd du = k * (1.0 + 3.0 * 0.044715 * x.array().square());
    Eigen::ArrayXXd d = 0.5 * (1.0 + t.array()) + 0.5 * x.array() * sech2 * du;
    accum(a.i, (g.array() * d).matrix());
  };
  return out;
}

Var Tape::relu(Var a) {
  const Mat& x = nodes_[a.i].val;
  Var out = push(x.cwiseMax(0.0));
  int o = out.i;
  nodes_[o].back = [this, o, a]() {
    const Mat& g = nodes_[o].grad;
    const Mat& x = nodes_[a.i].val;
    accum(a.i, (x.array() > 0.0).select(g, Mat::Zero(g.rows(), g.cols())));
  };
  return out;
}

Var Tape::l2normalize_rows(Var a) {
  const Mat& x = nodes_[a.i].val;
  Mat y(x.rows(), x.cols());
  Eigen::VectorXd norms(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double n = x.row(r).norm();
    if (n < 1e-12) throw SimilarityError("zero-norm row in l2normalize");
    norms(r) = n;
    y.row(r) = x.row(r) / n;
  }
  Var out = push(std::move(y));
  int o = out.i;
  nodes_[o].back = [this, o, a, norms]() {
    const Mat& g = nodes_[o].grad;
    const Mat& y = nodes_[o].val;
    Mat d(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      double dot = g.row(r).dot(y.row(r));
      d.row(r) = (g.row(r) - dot * y.row(r)) / norms(r);
    }
    accum(a.i, d);
  };
  return out;
}

Var Tape::gather(Var a, int r, int c) {
  Mat v(1, 1);
  v(0, 0) = nodes_[a.i].val(r, c);
  Var out = push(std::move(v));
  int o = out.i;
  nodes_[o].back = [this, o, a, r, c]() {
    Mat d = Mat::Zero(nodes_[a.i].val.rows(), nodes_[a.i].val.cols());
    d(r, c) = nodes_[o].grad(0, 0);
    accum(a.i, d);
  };
  return out;
}

Var Tape::sum_all(Var a) {
  Mat v(1, 1);
  v(0, 0) = nodes_[a.i].val.sum();
  Var out = push(std::move(v));
  int o = out.i;
  nodes_[o].back = [this, o, a]() {
    const Mat& av = nodes_[a.i].val;
    accum(a.i, Mat::Constant(av.rows(), av.cols(), nodes_[o].grad(0, 0)));
  };
  return out;
}

Var Tape::square(Var a) {
  const Mat& x = nodes_[a.i].val;
  Var out = push(x.cwiseProduct(x));
  int o = out.i;
  nodes_[o].back = [this, o, a]() {
    accum(a.i, 2.0 * nodes_[o].grad.cwiseProduct(nodes_[a.i].val));
  };
  return out;
}

Var Tape::cross_entropy_sum(Var logits, const std::vector<int>& targets, int* count_out) {
  const Mat& lv = nodes_[logits.i].val;
  if (static_cast<Eigen::Index>(targets.size()) != lv.rows())
    throw InputError("cross_entropy_sum: target count does not match logits rows");
  double total = 0.0;
  int count = 0;
  for (Eigen::Index r = 0; r < lv.rows(); ++r) {
    int t = targets[static_cast<size_t>(r)];
    if (t < 0) continue;
    if (t >= lv.cols()) throw InputError("cross_entropy_sum: target id out of range");
    double m = lv.row(r).maxCoeff();
    double lse = m + std::log((lv.row(r).array() - m).exp().sum());
    total += lse - lv(r, t);
    ++count;
  }
  if (count_out) *count_out = count;
  Mat v(1, 1);
  v(0, 0) = total;
  Var out = push(std::move(v));
  int o = out.i;
  nodes_[o].back = [this, o, logits, targets]() {
    double g = nodes_[o].grad(0, 0);
    const Mat& lv = nodes_[logits.i].val;
    Mat d = Mat::Zero(lv.rows(), lv.cols());
    for (Eigen::Index r = 0; r < lv.rows(); ++r) {
      int t = targets[static_cast<size_t>(r)];
      if (t < 0) continue;
      Eigen::RowVectorXd p = softmax_row(lv.row(r));
      d.row(r) = p * g;
      d(r, t) -= g;
    }
    accum(logits.i, d);
  };
  return out;
}

Var Tape::kl_div_sum(Var student_logits, const Mat& teacher_logits, double tau,
                     const std::vector<char>& include) {
  const Mat& sv = nodes_[student_logits.i].val;
  if (sv.rows() != teacher_logits.rows() || sv.cols() != teacher_logits.cols())
    throw InputError("kl_div_sum: logits shape mismatch");
  if (static_cast<Eigen::Index>(include.size()) != sv.rows())
    throw InputError("kl_div_sum: include mask size mismatch");
  double total = 0.0;
  Mat p_rows = Mat::Zero(sv.rows(), sv.cols());
  for (Eigen::Index r = 0; r < sv.rows(); ++r) {
    if (!include[static_cast<size_t>(r)]) continue;
    Eigen::RowVectorXd p = softmax_row(teacher_logits.row(r) / tau);
    Eigen::RowVectorXd slog = sv.row(r) / tau;
    double m = slog.maxCoeff();
    double lse = m + std::log((slog.array() - m).exp().sum());
    Eigen::RowVectorXd logq = slog.array() - lse;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      if (p(c) > 0.0) total += p(c) * (std::log(p(c)) - logq(c));
    }
    p_rows.row(r) = p;
  }
  total *= tau * tau;
  Mat v(1, 1);
  v(0, 0) = total;
  Var out = push(std::move(v));
  int o = out.i;
  nodes_[o].back = [this, o, student_logits, p_rows, tau, include]() {
    double g = nodes_[o].grad(0, 0);
    const Mat& sv = nodes_[student_logits.i].val;
    Mat d = Mat::Zero(sv.rows(), sv.cols());
    for (Eigen::Index r = 0; r < sv.rows(); ++r) {
      if (!include[static_cast<size_t>(r)]) continue;
      Eigen::RowVectorXd q = softmax_row(sv.row(r) / tau);
      d.row(r) = g * tau * (q - p_rows.row(r));
    }
    accum(student_logits.i, d);
  };
  return out;
}

Var Tape::triplet_hinge_sum(Var sim, double alpha) {
  const Mat& S = nodes_[sim.i].val;
  if (S.rows() != S.cols()) throw InputError("triplet_hinge_sum: similarity matrix not square");
  Eigen::Index K = S.rows();
  double total = 0.0;
  // Per anchor k: hard teacher negative i (row scan) and hard student
  // negative j (column scan); a hinge contributes gradient only when
  // strictly positive.
  std::vector<int> neg_i(static_cast<size_t>(K), -1), neg_j(static_cast<size_t>(K), -1);
  std::vector<char> act_i(static_cast<size_t>(K), 0), act_j(static_cast<size_t>(K), 0);
  if (K >= 2) {
    for (Eigen::Index k = 0; k < K; ++k) {
      int bi = -1, bj = -1;
      for (Eigen::Index i = 0; i < K; ++i) {
        if (i == k) continue;
        if (bi < 0 || S(k, i) > S(k, bi)) bi = static_cast<int>(i);
      }
      for (Eigen::Index j = 0; j < K; ++j) {
        if (j == k) continue;
        if (bj < 0 || S(j, k) > S(bj, k)) bj = static_cast<int>(j);
      }
      neg_i[static_cast<size_t>(k)] = bi;
      neg_j[static_cast<size_t>(k)] = bj;
      double h1 = alpha - S(k, k) + S(k, bi);
      double h2 = alpha - S(k, k) + S(bj, k);
      if (h1 > 0.0) {
        total += h1;
        act_i[static_cast<size_t>(k)] = 1;
      }
      if (h2 > 0.0) {
        total += h2;
        act_j[static_cast<size_t>(k)] = 1;
      }
    }
  }
  Mat v(1, 1);
  v(0, 0) = total;
  Var out = push(std::move(v));
  int o = out.i;
  nodes_[o].back = [this, o, sim, neg_i, neg_j, act_i, act_j]() {
    double g = nodes_[o].grad(0, 0);
    const Mat& S = nodes_[sim.i].val;
    Mat d = Mat::Zero(S.rows(), S.cols());
    for (Eigen::Index k = 0; k < S.rows(); ++k) {
      if (act_i[static_cast<size_t>(k)]) {
        d(k, k) -= g;
        d(k, neg_i[static_cast<size_t>(k)]) += g;
      }
      if (act_j[static_cast<size_t>(k)]) {
        d(k, k) -= g;
        d(neg_j[static_cast<size_t>(k)], k) += g;
      }
    }
    accum(sim.i, d);
  };
  return out;
}

}  // namespace ccd
