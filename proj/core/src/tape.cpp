#include "amc/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace amc {

namespace {

constexpr double kCosineEps = 1e-8;

void require_same_tape(Value a, Value b, const char* op) {
    if (a.tape == nullptr || b.tape == nullptr || a.tape != b.tape) {
        throw ContractError(std::string(op) + ": operands live on different tapes");
    }
}

double norm(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data) s += v * v;
    return std::sqrt(s);
}

}  // namespace

Value Tape::emit(const char* op, Tensor value, bool tracked, Backprop bp) {
    require_finite(value, op);
    nodes_.push_back(Node{op, std::move(value), tracked, tracked ? std::move(bp) : Backprop{}});
    return Value{this, static_cast<int>(nodes_.size()) - 1};
}

Value Tape::input(Tensor v) {
    return emit("input", std::move(v), false, {});
}

Value Tape::param(Tensor v) {
    return emit("param", std::move(v), true, {});
}

void Tape::check(Value v) const {
    if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
        throw ContractError("value handle does not belong to this tape");
    }
}

const Tensor& Tape::value(Value v) const {
    check(v);
    return nodes_[static_cast<size_t>(v.id)].value;
}

bool Tape::tracked(Value v) const {
    check(v);
    return nodes_[static_cast<size_t>(v.id)].tracked;
}

const char* Tape::op_name(Value v) const {
    check(v);
    return nodes_[static_cast<size_t>(v.id)].op;
}

Tensor& Tape::grad_acc(int id) {
    Tensor& g = grads_[static_cast<size_t>(id)];
    if (g.empty()) {
        g = Tensor::zeros(nodes_[static_cast<size_t>(id)].value.shape);
    }
    return g;
}

void Tape::backward(Value seed) {
    check(seed);
    const Tensor& sv = nodes_[static_cast<size_t>(seed.id)].value;
    if (sv.numel() != 1) {
        throw ContractError("backward seed must be scalar, got shape " + sv.shape.str());
    }
    grads_.clear();
    grads_.resize(nodes_.size());
    grad_acc(seed.id)[0] = 1.0;
    for (int id = seed.id; id >= 0; --id) {
        const Node& n = nodes_[static_cast<size_t>(id)];
        const Tensor& g = grads_[static_cast<size_t>(id)];
        if (g.empty() || !n.tracked || !n.backprop) continue;
        n.backprop(g, *this, id);
    }
}

Tensor Tape::gradient(Value v) const {
    check(v);
    if (static_cast<size_t>(v.id) < grads_.size()) {
        const Tensor& g = grads_[static_cast<size_t>(v.id)];
        if (!g.empty()) return g;
    }
    return Tensor::zeros(nodes_[static_cast<size_t>(v.id)].value.shape);
}

void Tape::reset() {
    nodes_.clear();
    grads_.clear();
}

// --- ops ---------------------------------------------------------------------

Value matmul(Value av, Value bv) {
    require_same_tape(av, bv, "matmul");
    Tape& t = *av.tape;
    const Tensor& a = t.value(av);
    const Tensor& b = t.value(bv);
    const int ar = a.shape.rank();
    const int br = b.shape.rank();
    if (ar < 1 || ar > 2 || br < 1 || br > 2) {
        throw ShapeError("matmul expects rank-1/2 operands, got " + a.shape.str() + " and " +
                         b.shape.str());
    }
    // Vector convention: rank-1 left = row, rank-1 right = column.
    const int m = ar == 2 ? a.shape[0] : 1;
    const int k = ar == 2 ? a.shape[1] : a.shape[0];
    const int kb = b.shape[0];
    const int p = br == 2 ? b.shape[1] : 1;
    if (k != kb) {
        throw ShapeError("matmul inner extents disagree: " + a.shape.str() + " vs " +
                         b.shape.str());
    }
    Shape out_shape = (ar == 1 && br == 1) ? Shape{1}
                      : ar == 1            ? Shape{p}
                      : br == 1            ? Shape{m}
                                           : Shape{m, p};
    std::vector<double> out(static_cast<size_t>(m) * p, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int kk = 0; kk < k; ++kk) {
            const double aik = a.data[static_cast<size_t>(i) * k + kk];
            for (int j = 0; j < p; ++j) {
                out[static_cast<size_t>(i) * p + j] +=
                    aik * b.data[static_cast<size_t>(kk) * p + j];
            }
        }
    }
    const bool tracked = t.tracked(av) || t.tracked(bv);
    const int aid = av.id, bid = bv.id;
    return t.emit("matmul", Tensor::from(out_shape, std::move(out)), tracked,
                  [aid, bid, m, k, p](const Tensor& g, Tape& tp, int) {
                      const Tensor& a = tp.value(Value{&tp, aid});
                      const Tensor& b = tp.value(Value{&tp, bid});
                      if (tp.tracked(Value{&tp, aid})) {
                          Tensor& da = tp.grad_acc(aid);
                          for (int i = 0; i < m; ++i)
                              for (int kk = 0; kk < k; ++kk) {
                                  double s = 0.0;
                                  for (int j = 0; j < p; ++j)
                                      s += g.data[static_cast<size_t>(i) * p + j] *
                                           b.data[static_cast<size_t>(kk) * p + j];
                                  da.data[static_cast<size_t>(i) * k + kk] += s;
                              }
                      }
                      if (tp.tracked(Value{&tp, bid})) {
                          Tensor& db = tp.grad_acc(bid);
                          for (int kk = 0; kk < k; ++kk)
                              for (int j = 0; j < p; ++j) {
                                  double s = 0.0;
                                  for (int i = 0; i < m; ++i)
                                      s += a.data[static_cast<size_t>(i) * k + kk] *
                                           g.data[static_cast<size_t>(i) * p + j];
                                  db.data[static_cast<size_t>(kk) * p + j] += s;
                              }
                      }
                  });
}

Value add(Value av, Value bv) {
    require_same_tape(av, bv, "add");
    Tape& t = *av.tape;
    const Tensor& a = t.value(av);
    const Tensor& b = t.value(bv);
    const bool broadcast =
        a.shape.rank() == 2 && b.shape.rank() == 1 && a.shape[1] == b.shape[0];
    if (!broadcast && a.shape != b.shape) {
        throw ShapeError("add shapes disagree: " + a.shape.str() + " vs " + b.shape.str());
    }
    std::vector<double> out(a.data.size());
    if (broadcast) {
        const int rows = a.shape[0], cols = a.shape[1];
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                out[static_cast<size_t>(i) * cols + j] =
                    a.data[static_cast<size_t>(i) * cols + j] + b.data[static_cast<size_t>(j)];
    } else {
        for (size_t i = 0; i < out.size(); ++i) out[i] = a.data[i] + b.data[i];
    }
    const bool tracked = t.tracked(av) || t.tracked(bv);
    const int aid = av.id, bid = bv.id;
    return t.emit("add", Tensor::from(a.shape, std::move(out)), tracked,
                  [aid, bid, broadcast](const Tensor& g, Tape& tp, int) {
                      if (tp.tracked(Value{&tp, aid})) {
                          Tensor& da = tp.grad_acc(aid);
                          for (size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
                      }
                      if (tp.tracked(Value{&tp, bid})) {
                          Tensor& db = tp.grad_acc(bid);
                          if (broadcast) {
                              const int cols = static_cast<int>(db.data.size());
                              const int rows = static_cast<int>(g.data.size()) / cols;
                              for (int i = 0; i < rows; ++i)
                                  for (int j = 0; j < cols; ++j)
                                      db.data[static_cast<size_t>(j)] +=
                                          g.data[static_cast<size_t>(i) * cols + j];
                          } else {
                              for (size_t i = 0; i < g.data.size(); ++i) db.data[i] += g.data[i];
                          }
                      }
                  });
}

Value relu(Value xv) {
    Tape& t = *xv.tape;
    const Tensor& x = t.value(xv);
    std::vector<double> out(x.data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
    const int xid = xv.id;
    return t.emit("relu", Tensor::from(x.shape, std::move(out)), t.tracked(xv),
                  [xid](const Tensor& g, Tape& tp, int) {
                      const Tensor& x = tp.value(Value{&tp, xid});
                      Tensor& dx = tp.grad_acc(xid);
                      // Subgradient at exactly 0 is fixed to 0.
                      for (size_t i = 0; i < g.data.size(); ++i)
                          if (x.data[i] > 0.0) dx.data[i] += g.data[i];
                  });
}

namespace {

void softmax_slice(const std::vector<double>& x, std::vector<double>& y, size_t start,
                   size_t stride, int count) {
    double mx = x[start];
    for (int i = 1; i < count; ++i)
        mx = std::max(mx, x[start + static_cast<size_t>(i) * stride]);
    double sum = 0.0;
    for (int i = 0; i < count; ++i) {
        const size_t idx = start + static_cast<size_t>(i) * stride;
        y[idx] = std::exp(x[idx] - mx);
        sum += y[idx];
    }
    for (int i = 0; i < count; ++i) y[start + static_cast<size_t>(i) * stride] /= sum;
}

void softmax_slice_backward(const std::vector<double>& y, const std::vector<double>& g,
                            std::vector<double>& dx, size_t start, size_t stride, int count) {
    double inner = 0.0;
    for (int i = 0; i < count; ++i) {
        const size_t idx = start + static_cast<size_t>(i) * stride;
        inner += g[idx] * y[idx];
    }
    for (int i = 0; i < count; ++i) {
        const size_t idx = start + static_cast<size_t>(i) * stride;
        dx[idx] += y[idx] * (g[idx] - inner);
    }
}

}  // namespace

Value softmax(Value xv, int axis) {
    Tape& t = *xv.tape;
    const Tensor& x = t.value(xv);
    const int rank = x.shape.rank();
    if (rank != 1 && rank != 2) {
        throw ShapeError("softmax expects rank-1/2 input, got " + x.shape.str());
    }
    if (axis < 0 || axis >= rank) {
        throw ContractError("softmax axis " + std::to_string(axis) + " out of range for " +
                            x.shape.str());
    }
    const int rows = rank == 2 ? x.shape[0] : 1;
    const int cols = rank == 2 ? x.shape[1] : x.shape[0];
    const bool along_rows = (rank == 1) || (axis == 1);
    std::vector<double> out(x.data.size());
    if (along_rows) {
        for (int i = 0; i < rows; ++i)
            softmax_slice(x.data, out, static_cast<size_t>(i) * cols, 1, cols);
    } else {
        for (int j = 0; j < cols; ++j)
            softmax_slice(x.data, out, static_cast<size_t>(j), static_cast<size_t>(cols), rows);
    }
    const int xid = xv.id;
    return t.emit("softmax", Tensor::from(x.shape, std::move(out)), t.tracked(xv),
                  [xid, rows, cols, along_rows](const Tensor& g, Tape& tp, int self) {
                      const Tensor& y = tp.value(Value{&tp, self});
                      Tensor& dx = tp.grad_acc(xid);
                      if (along_rows) {
                          for (int i = 0; i < rows; ++i)
                              softmax_slice_backward(y.data, g.data, dx.data,
                                                     static_cast<size_t>(i) * cols, 1, cols);
                      } else {
                          for (int j = 0; j < cols; ++j)
                              softmax_slice_backward(y.data, g.data, dx.data,
                                                     static_cast<size_t>(j),
                                                     static_cast<size_t>(cols), rows);
                      }
                  });
}

Value masked_softmax(Value xv, const std::vector<bool>& active) {
    Tape& t = *xv.tape;
    const Tensor& x = t.value(xv);
    if (x.shape.rank() != 1) {
        throw ShapeError("masked_softmax expects a rank-1 input, got " + x.shape.str());
    }
    const int n = x.shape[0];
    if (static_cast<int>(active.size()) != n) {
        throw ShapeError("mask length " + std::to_string(active.size()) +
                         " does not match input " + x.shape.str());
    }
    int n_active = 0;
    for (bool b : active) n_active += b ? 1 : 0;
    if (n_active == 0) {
        throw ContractError("masked_softmax requires at least one active row");
    }
    std::vector<double> out(static_cast<size_t>(n), 0.0);
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
        if (active[static_cast<size_t>(i)]) mx = std::max(mx, x.data[static_cast<size_t>(i)]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i)
        if (active[static_cast<size_t>(i)]) {
            out[static_cast<size_t>(i)] = std::exp(x.data[static_cast<size_t>(i)] - mx);
            sum += out[static_cast<size_t>(i)];
        }
    for (int i = 0; i < n; ++i)
        if (active[static_cast<size_t>(i)]) out[static_cast<size_t>(i)] /= sum;
    const int xid = xv.id;
    return t.emit("masked_softmax", Tensor::from(x.shape, std::move(out)), t.tracked(xv),
                  [xid, active](const Tensor& g, Tape& tp, int self) {
                      const Tensor& y = tp.value(Value{&tp, self});
                      Tensor& dx = tp.grad_acc(xid);
                      double inner = 0.0;
                      for (size_t i = 0; i < y.data.size(); ++i)
                          if (active[i]) inner += g.data[i] * y.data[i];
                      for (size_t i = 0; i < y.data.size(); ++i)
                          if (active[i]) dx.data[i] += y.data[i] * (g.data[i] - inner);
                  });
}

Value row_scale(Value mv, Value wv) {
    require_same_tape(mv, wv, "row_scale");
    Tape& t = *mv.tape;
    const Tensor& m = t.value(mv);
    const Tensor& w = t.value(wv);
    if (m.shape.rank() != 2 || w.shape.rank() != 1 || m.shape[0] != w.shape[0]) {
        throw ShapeError("row_scale expects [m x d] and [m], got " + m.shape.str() + " and " +
                         w.shape.str());
    }
    const int rows = m.shape[0], cols = m.shape[1];
    std::vector<double> out(m.data.size());
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            out[static_cast<size_t>(i) * cols + j] =
                m.data[static_cast<size_t>(i) * cols + j] * w.data[static_cast<size_t>(i)];
    const bool tracked = t.tracked(mv) || t.tracked(wv);
    const int mid = mv.id, wid = wv.id;
    return t.emit("row_scale", Tensor::from(m.shape, std::move(out)), tracked,
                  [mid, wid, rows, cols](const Tensor& g, Tape& tp, int) {
                      const Tensor& m = tp.value(Value{&tp, mid});
                      const Tensor& w = tp.value(Value{&tp, wid});
                      if (tp.tracked(Value{&tp, mid})) {
                          Tensor& dm = tp.grad_acc(mid);
                          for (int i = 0; i < rows; ++i)
                              for (int j = 0; j < cols; ++j)
                                  dm.data[static_cast<size_t>(i) * cols + j] +=
                                      g.data[static_cast<size_t>(i) * cols + j] *
                                      w.data[static_cast<size_t>(i)];
                      }
                      if (tp.tracked(Value{&tp, wid})) {
                          Tensor& dw = tp.grad_acc(wid);
                          for (int i = 0; i < rows; ++i) {
                              double s = 0.0;
                              for (int j = 0; j < cols; ++j)
                                  s += g.data[static_cast<size_t>(i) * cols + j] *
                                       m.data[static_cast<size_t>(i) * cols + j];
                              dw.data[static_cast<size_t>(i)] += s;
                          }
                      }
                  });
}

Value mean_rows(Value mv) {
    Tape& t = *mv.tape;
    const Tensor& m = t.value(mv);
    if (m.shape.rank() != 2) {
        throw ShapeError("mean_rows expects a rank-2 input, got " + m.shape.str());
    }
    const int rows = m.shape[0], cols = m.shape[1];
    std::vector<double> out(static_cast<size_t>(cols), 0.0);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            out[static_cast<size_t>(j)] += m.data[static_cast<size_t>(i) * cols + j];
    for (int j = 0; j < cols; ++j) out[static_cast<size_t>(j)] /= rows;
    const int mid = mv.id;
    return t.emit("mean_rows", Tensor::from(Shape{cols}, std::move(out)), t.tracked(mv),
                  [mid, rows, cols](const Tensor& g, Tape& tp, int) {
                      Tensor& dm = tp.grad_acc(mid);
                      for (int i = 0; i < rows; ++i)
                          for (int j = 0; j < cols; ++j)
                              dm.data[static_cast<size_t>(i) * cols + j] +=
                                  g.data[static_cast<size_t>(j)] / rows;
                  });
}

Value cosine(Value uv, Value vv) {
    require_same_tape(uv, vv, "cosine");
    Tape& t = *uv.tape;
    const Tensor& u = t.value(uv);
    const Tensor& v = t.value(vv);
    if (u.shape.rank() != 1 || v.shape.rank() != 1 || u.shape[0] != v.shape[0]) {
        throw ShapeError("cosine expects equal-length rank-1 inputs, got " + u.shape.str() +
                         " and " + v.shape.str());
    }
    const double nu_raw = norm(u);
    const double nv_raw = norm(v);
    const double nu = std::max(nu_raw, kCosineEps);
    const double nv = std::max(nv_raw, kCosineEps);
    double d = 0.0;
    for (size_t i = 0; i < u.data.size(); ++i) d += u.data[i] * v.data[i];
    const double c = d / (nu * nv);
    const bool tracked = t.tracked(uv) || t.tracked(vv);
    const int uid = uv.id, vid = vv.id;
    return t.emit("cosine", Tensor::scalar(c), tracked,
                  [uid, vid, nu, nv, nu_raw, nv_raw, c](const Tensor& g, Tape& tp, int) {
                      const Tensor& u = tp.value(Value{&tp, uid});
                      const Tensor& v = tp.value(Value{&tp, vid});
                      const double gs = g.data[0];
                      // When a norm is clamped the denominator is locally constant.
                      if (tp.tracked(Value{&tp, uid})) {
                          Tensor& du = tp.grad_acc(uid);
                          for (size_t i = 0; i < u.data.size(); ++i) {
                              double d = v.data[i] / (nu * nv);
                              if (nu_raw > kCosineEps) d -= c * u.data[i] / (nu * nu);
                              du.data[i] += gs * d;
                          }
                      }
                      if (tp.tracked(Value{&tp, vid})) {
                          Tensor& dv = tp.grad_acc(vid);
                          for (size_t i = 0; i < v.data.size(); ++i) {
                              double d = u.data[i] / (nu * nv);
                              if (nv_raw > kCosineEps) d -= c * v.data[i] / (nv * nv);
                              dv.data[i] += gs * d;
                          }
                      }
                  });
}

Value dot(Value uv, Value vv) {
    require_same_tape(uv, vv, "dot");
    Tape& t = *uv.tape;
    const Tensor& u = t.value(uv);
    const Tensor& v = t.value(vv);
    if (u.shape.rank() != 1 || v.shape.rank() != 1 || u.shape[0] != v.shape[0]) {
        throw ShapeError("dot expects equal-length rank-1 inputs, got " + u.shape.str() +
                         " and " + v.shape.str());
    }
    double d = 0.0;
    for (size_t i = 0; i < u.data.size(); ++i) d += u.data[i] * v.data[i];
    const bool tracked = t.tracked(uv) || t.tracked(vv);
    const int uid = uv.id, vid = vv.id;
    return t.emit("dot", Tensor::scalar(d), tracked, [uid, vid](const Tensor& g, Tape& tp, int) {
        const Tensor& u = tp.value(Value{&tp, uid});
        const Tensor& v = tp.value(Value{&tp, vid});
        const double gs = g.data[0];
        if (tp.tracked(Value{&tp, uid})) {
            Tensor& du = tp.grad_acc(uid);
            for (size_t i = 0; i < u.data.size(); ++i) du.data[i] += gs * v.data[i];
        }
        if (tp.tracked(Value{&tp, vid})) {
            Tensor& dv = tp.grad_acc(vid);
            for (size_t i = 0; i < v.data.size(); ++i) dv.data[i] += gs * u.data[i];
        }
    });
}

Value scale(Value sv, Value xv) {
    require_same_tape(sv, xv, "scale");
    Tape& t = *sv.tape;
    const Tensor& s = t.value(sv);
    const Tensor& x = t.value(xv);
    if (s.numel() != 1) {
        throw ShapeError("scale expects a scalar weight, got " + s.shape.str());
    }
    const double w = s.data[0];
    std::vector<double> out(x.data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = w * x.data[i];
    const bool tracked = t.tracked(sv) || t.tracked(xv);
    const int sid = sv.id, xid = xv.id;
    return t.emit("scale", Tensor::from(x.shape, std::move(out)), tracked,
                  [sid, xid, w](const Tensor& g, Tape& tp, int) {
                      const Tensor& x = tp.value(Value{&tp, xid});
                      if (tp.tracked(Value{&tp, xid})) {
                          Tensor& dx = tp.grad_acc(xid);
                          for (size_t i = 0; i < g.data.size(); ++i) dx.data[i] += w * g.data[i];
                      }
                      if (tp.tracked(Value{&tp, sid})) {
                          Tensor& ds = tp.grad_acc(sid);
                          double acc = 0.0;
                          for (size_t i = 0; i < g.data.size(); ++i)
                              acc += g.data[i] * x.data[i];
                          ds.data[0] += acc;
                      }
                  });
}

Value lincomb(const std::vector<std::pair<double, Value>>& terms, double constant) {
    if (terms.empty()) {
        throw ContractError("lincomb requires at least one term");
    }
    Tape& t = *terms[0].second.tape;
    const Shape shape = t.value(terms[0].second).shape;
    bool tracked = false;
    std::vector<double> out(static_cast<size_t>(shape.numel()), constant);
    std::vector<std::pair<double, int>> ids;
    ids.reserve(terms.size());
    for (const auto& [coeff, v] : terms) {
        require_same_tape(terms[0].second, v, "lincomb");
        const Tensor& x = t.value(v);
        if (x.shape != shape) {
            throw ShapeError("lincomb term shapes disagree: " + shape.str() + " vs " +
                             x.shape.str());
        }
        for (size_t i = 0; i < out.size(); ++i) out[i] += coeff * x.data[i];
        tracked = tracked || t.tracked(v);
        ids.emplace_back(coeff, v.id);
    }
    return t.emit("lincomb", Tensor::from(shape, std::move(out)), tracked,
                  [ids](const Tensor& g, Tape& tp, int) {
                      for (const auto& [coeff, id] : ids) {
                          if (!tp.tracked(Value{&tp, id})) continue;
                          Tensor& dx = tp.grad_acc(id);
                          for (size_t i = 0; i < g.data.size(); ++i)
                              dx.data[i] += coeff * g.data[i];
                      }
                  });
}

Value pack(const std::vector<Value>& scalars) {
    if (scalars.empty()) {
        throw ContractError("pack requires at least one scalar");
    }
    Tape& t = *scalars[0].tape;
    std::vector<double> out;
    out.reserve(scalars.size());
    bool tracked = false;
    std::vector<int> ids;
    ids.reserve(scalars.size());
    for (Value v : scalars) {
        require_same_tape(scalars[0], v, "pack");
        const Tensor& x = t.value(v);
        if (x.numel() != 1) {
            throw ShapeError("pack expects scalar entries, got " + x.shape.str());
        }
        out.push_back(x.data[0]);
        tracked = tracked || t.tracked(v);
        ids.push_back(v.id);
    }
    const int n = static_cast<int>(out.size());
    return t.emit("pack", Tensor::from(Shape{n}, std::move(out)), tracked,
                  [ids](const Tensor& g, Tape& tp, int) {
                      for (size_t i = 0; i < ids.size(); ++i) {
                          if (!tp.tracked(Value{&tp, ids[i]})) continue;
                          tp.grad_acc(ids[i]).data[0] += g.data[i];
                      }
                  });
}

Value at(Value xv, int i) {
    Tape& t = *xv.tape;
    const Tensor& x = t.value(xv);
    if (x.shape.rank() != 1) {
        throw ShapeError("at expects a rank-1 input, got " + x.shape.str());
    }
    if (i < 0 || i >= x.shape[0]) {
        throw ContractError("at index " + std::to_string(i) + " out of range for " +
                            x.shape.str());
    }
    const int xid = xv.id;
    return t.emit("at", Tensor::scalar(x.data[static_cast<size_t>(i)]), t.tracked(xv),
                  [xid, i](const Tensor& g, Tape& tp, int) {
                      tp.grad_acc(xid).data[static_cast<size_t>(i)] += g.data[0];
                  });
}

Value reshape(Value xv, const Shape& s) {
    Tape& t = *xv.tape;
    const Tensor& x = t.value(xv);
    if (x.numel() != s.numel()) {
        throw ShapeError("reshape cannot map " + x.shape.str() + " to " + s.str());
    }
    const int xid = xv.id;
    return t.emit("reshape", Tensor::from(s, x.data), t.tracked(xv),
                  [xid](const Tensor& g, Tape& tp, int) {
                      Tensor& dx = tp.grad_acc(xid);
                      for (size_t i = 0; i < g.data.size(); ++i) dx.data[i] += g.data[i];
                  });
}

}  // namespace amc
