#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

#include "tjepa/array.hpp"

namespace tjepa {

// Reverse-mode autodiff over Arr<T>. Operations append nodes in forward
// (topological) order; backward() replays the records once, in reverse.
//
// Broadcasting: binary elementwise ops align the smaller operand against the
// trailing axes of the larger one (leading-axis expansion) or accept a scalar.
// Any other mismatch is a ShapeError. broadcast_to() covers explicit size-1
// axis expansion.
template <typename T>
class Tape {
 public:
  using Id = int;

  struct Node {
    Arr<T> value;
    Arr<T> grad;  // allocated lazily during backward
    bool rg = false;
    std::function<void(Tape&, Id)> back;
  };

  Id leaf(Arr<T> v, bool requires_grad = false) {
    Node n;
    n.value = std::move(v);
    n.rg = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size()) - 1;
  }
  Id constant(Arr<T> v) { return leaf(std::move(v), false); }

  const Arr<T>& value(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Arr<T>& grad(Id id) const { return nodes_[static_cast<size_t>(id)].grad; }
  bool has_grad(Id id) const { return !nodes_[static_cast<size_t>(id)].grad.data.empty(); }
  size_t size() const { return nodes_.size(); }

  void backward(Id loss) {
    if (value(loss).n() != 1) {
      throw ShapeError("backward expects a scalar loss, got " + shape_str(value(loss).shape));
    }
    ensure_grad(loss);
    nodes_[static_cast<size_t>(loss)].grad.data[0] = T(1);
    for (Id i = loss; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.rg && n.back && !n.grad.data.empty()) n.back(*this, i);
    }
  }

  // ---- elementwise binary ----

  Id add(Id a, Id b) { return binary(a, b, BinOp::Add); }
  Id sub(Id a, Id b) { return binary(a, b, BinOp::Sub); }
  Id mul(Id a, Id b) { return binary(a, b, BinOp::Mul); }

  Id scale(Id x, T c) {
    const Arr<T>& xv = value(x);
    Arr<T> out = xv;
    for (auto& v : out.data) v *= c;
    return record(std::move(out), {x}, [x, c](Tape& t, Id self) {
      const Arr<T>& g = t.grad(self);
      if (!t.wants(x)) return;
      Arr<T>& gx = t.ensure_grad(x);
      for (int64_t i = 0; i < g.n(); ++i) gx[i] += g[i] * c;
    });
  }

  Id shift(Id x, T c) {
    Arr<T> out = value(x);
    for (auto& v : out.data) v += c;
    return record(std::move(out), {x}, [x](Tape& t, Id self) {
      const Arr<T>& g = t.grad(self);
      if (!t.wants(x)) return;
      Arr<T>& gx = t.ensure_grad(x);
      for (int64_t i = 0; i < g.n(); ++i) gx[i] += g[i];
    });
  }

  // ---- matmul / affine ----

  // a: [..., m, k]; b: [..., k, n] with identical leading axes, or b: [k, n]
  // shared across all of a's leading batches.
  Id matmul(Id a, Id b) {
    const Arr<T>& av = value(a);
    const Arr<T>& bv = value(b);
    if (av.rank() < 2 || bv.rank() < 2) {
      throw ShapeError("matmul needs rank >= 2 operands, got " + shape_str(av.shape) + " and " +
                       shape_str(bv.shape));
    }
    const int m = av.shape[av.rank() - 2], k = av.shape[av.rank() - 1];
    const int kb = bv.shape[bv.rank() - 2], nb = bv.shape[bv.rank() - 1];
    if (k != kb) {
      throw ShapeError("matmul inner extents differ: " + shape_str(av.shape) + " vs " +
                       shape_str(bv.shape));
    }
    const bool shared_b = bv.rank() == 2 && av.rank() > 2;
    if (!shared_b) {
      Shape la(av.shape.begin(), av.shape.end() - 2);
      Shape lb(bv.shape.begin(), bv.shape.end() - 2);
      if (la != lb) {
        throw ShapeError("matmul leading axes differ: " + shape_str(av.shape) + " vs " +
                         shape_str(bv.shape));
      }
    }
    const int64_t batches = av.n() / (static_cast<int64_t>(m) * k);
    Shape os(av.shape.begin(), av.shape.end() - 2);
    os.push_back(m);
    os.push_back(nb);
    Arr<T> out(os);
    for (int64_t bt = 0; bt < batches; ++bt) {
      const T* ap = av.data.data() + bt * m * k;
      const T* bp = bv.data.data() + (shared_b ? 0 : bt * static_cast<int64_t>(k) * nb);
      T* op = out.data.data() + bt * m * nb;
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < nb; ++j) {
          T acc = T(0);
          for (int l = 0; l < k; ++l) acc += ap[i * k + l] * bp[l * nb + j];
          op[i * nb + j] = acc;
        }
      }
    }
    return record(std::move(out), {a, b},
                  [a, b, m, k, nb, batches, shared_b](Tape& t, Id self) {
                    const Arr<T>& g = t.grad(self);
                    const Arr<T>& av2 = t.value(a);
                    const Arr<T>& bv2 = t.value(b);
                    if (t.wants(a)) {
                      Arr<T>& ga = t.ensure_grad(a);
                      for (int64_t bt = 0; bt < batches; ++bt) {
                        const T* gp = g.data.data() + bt * m * nb;
                        const T* bp =
                            bv2.data.data() + (shared_b ? 0 : bt * static_cast<int64_t>(k) * nb);
                        T* gap = ga.data.data() + bt * m * k;
                        for (int i = 0; i < m; ++i)
                          for (int l = 0; l < k; ++l) {
                            T acc = T(0);
                            for (int j = 0; j < nb; ++j) acc += gp[i * nb + j] * bp[l * nb + j];
                            gap[i * k + l] += acc;
                          }
                      }
                    }
                    if (t.wants(b)) {
                      Arr<T>& gb = t.ensure_grad(b);
                      for (int64_t bt = 0; bt < batches; ++bt) {
                        const T* gp = g.data.data() + bt * m * nb;
                        const T* ap = av2.data.data() + bt * m * k;
                        T* gbp =
                            gb.data.data() + (shared_b ? 0 : bt * static_cast<int64_t>(k) * nb);
                        for (int l = 0; l < k; ++l)
                          for (int j = 0; j < nb; ++j) {
                            T acc = T(0);
                            for (int i = 0; i < m; ++i) acc += ap[i * k + l] * gp[i * nb + j];
                            gbp[l * nb + j] += acc;
                          }
                      }
                    }
                  });
  }

  // x: [..., in] -> [..., out] via x*w + b. w: [in, out], b: [out].
  Id affine(Id x, Id w, Id b) {
    const Arr<T>& xv = value(x);
    const Arr<T>& wv = value(w);
    const Arr<T>& bv = value(b);
    if (wv.rank() != 2 || bv.rank() != 1) {
      throw ShapeError("affine expects w rank 2 and b rank 1, got " + shape_str(wv.shape) +
                       " and " + shape_str(bv.shape));
    }
    const int in = wv.shape[0], out_d = wv.shape[1];
    if (xv.rank() < 1 || xv.shape[xv.rank() - 1] != in || bv.shape[0] != out_d) {
      throw ShapeError("affine shapes incompatible: x " + shape_str(xv.shape) + ", w " +
                       shape_str(wv.shape) + ", b " + shape_str(bv.shape));
    }
    const int64_t rows = xv.n() / in;
    Shape os = xv.shape;
    os.back() = out_d;
    Arr<T> o(os);
    for (int64_t r = 0; r < rows; ++r) {
      const T* xp = xv.data.data() + r * in;
      T* op = o.data.data() + r * out_d;
      for (int j = 0; j < out_d; ++j) {
        T acc = bv.data[static_cast<size_t>(j)];
        for (int i = 0; i < in; ++i) acc += xp[i] * wv.data[static_cast<size_t>(i) * out_d + j];
        op[j] = acc;
      }
    }
    return record(std::move(o), {x, w, b}, [x, w, b, in, out_d, rows](Tape& t, Id self) {
      const Arr<T>& g = t.grad(self);
      const Arr<T>& xv2 = t.value(x);
      const Arr<T>& wv2 = t.value(w);
      if (t.wants(x)) {
        Arr<T>& gx = t.ensure_grad(x);
        for (int64_t r = 0; r < rows; ++r) {
          const T* gp = g.data.data() + r * out_d;
          T* gxp = gx.data.data() + r * in;
          for (int i = 0; i < in; ++i) {
            T acc = T(0);
            for (int j = 0; j < out_d; ++j)
              acc += gp[j] * wv2.data[static_cast<size_t>(i) * out_d + j];
            gxp[i] += acc;
          }
        }
      }
      if (t.wants(w)) {
        Arr<T>& gw = t.ensure_grad(w);
        for (int64_t r = 0; r < rows; ++r) {
          const T* gp = g.data.data() + r * out_d;
          const T* xp = xv2.data.data() + r * in;
          for (int i = 0; i < in; ++i)
            for (int j = 0; j < out_d; ++j)
              gw.data[static_cast<size_t>(i) * out_d + j] += xp[i] * gp[j];
        }
      }
      if (t.wants(b)) {
        Arr<T>& gb = t.ensure_grad(b);
        for (int64_t r = 0; r < rows; ++r) {
          const T* gp = g.data.data() + r * out_d;
          for (int j = 0; j < out_d; ++j) gb.data[static_cast<size_t>(j)] += gp[j];
        }
      }
    });
  }

  // ---- shape ops ----

  Id reshape(Id x, Shape s) {
    const Arr<T>& xv = value(x);
    if (shape_numel(s) != xv.n()) {
      throw ShapeError("reshape " + shape_str(xv.shape) + " -> " + shape_str(s) +
                       " changes element count");
    }
    Arr<T> out(s, xv.data);
    return record(std::move(out), {x}, [x](Tape& t, Id self) {
      const Arr<T>& g = t.grad(self);
      if (!t.wants(x)) return;
      Arr<T>& gx = t.ensure_grad(x);
      for (int64_t i = 0; i < g.n(); ++i) gx[i] += g[i];
    });
  }

  Id transpose(Id x, std::vector<int> perm) {
    const Arr<T>& xv = value(x);
    const int r = xv.rank();
    if (static_cast<int>(perm.size()) != r) {
      throw ShapeError("transpose perm rank mismatch for " + shape_str(xv.shape));
    }
    Shape os(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) os[static_cast<size_t>(i)] = xv.shape[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    Arr<T> out(os);
    std::vector<int64_t> ist = strides(xv.shape);
    std::vector<int> coord(static_cast<size_t>(r), 0);
    for (int64_t o = 0; o < out.n(); ++o) {
      int64_t ii = 0;
      for (int d = 0; d < r; ++d) ii += static_cast<int64_t>(coord[static_cast<size_t>(d)]) * ist[static_cast<size_t>(perm[static_cast<size_t>(d)])];
      out[o] = xv[ii];
      for (int d = r - 1; d >= 0; --d) {
        if (++coord[static_cast<size_t>(d)] < os[static_cast<size_t>(d)]) break;
        coord[static_cast<size_t>(d)] = 0;
      }
    }
    return record(std::move(out), {x}, [x, perm, r](Tape& t, Id self) {
      const Arr<T>& g = t.grad(self);
      if (!t.wants(x)) return;
      Arr<T>& gx = t.ensure_grad(x);
      std::vector<int64_t> ist = strides(gx.shape);
      std::vector<int> coord(static_cast<size_t>(r), 0);
      for (int64_t o = 0; o < g.n(); ++o) {
        int64_t ii = 0;
        for (int d = 0; d < r; ++d) ii += static_cast<int64_t>(coord[static_cast<size_t>(d)]) * ist[static_cast<size_t>(perm[static_cast<size_t>(d)])];
        gx[ii] += g[o];
        for (int d = r - 1; d >= 0; --d) {
          if (++coord[static_cast<size_t>(d)] < g.shape[static_cast<size_t>(d)]) break;
          coord[static_cast<size_t>(d)] = 0;
        }
      }
    });
  }

  Id slice(Id x, int axis, int start, int len) {
    const Arr<T>& xv = value(x);
    check_axis(xv, axis, "slice");
    const int K = xv.shape[static_cast<size_t>(axis)];
    if (start < 0 || len <= 0 || start + len > K) {
      throw ShapeError("slice [" + std::to_string(start) + "," + std::to_string(start + len) +
                       ") out of range for axis " + std::to_string(axis) + " of " +
                       shape_str(xv.shape));
    }
    auto [outer, inner] = split_at(xv.shape, axis);
    Shape os = xv.shape;
    os[static_cast<size_t>(axis)] = len;
    Arr<T> out(os);
    for (int64_t o = 0; o < outer; ++o)
      for (int j = 0; j < len; ++j)
        for (int64_t i = 0; i < inner; ++i)
          out[(o * len + j) * inner + i] = xv[(o * K + start + j) * inner + i];
    return record(std::move(out), {x}, [x, axis, start, len](Tape& t, Id self) {
      const Arr<T>& g = t.grad(self);
      if (!t.wants(x)) return;
      Arr<T>& gx = t.ensure_grad(x);
      const int K2 = gx.shape[static_cast<size_t>(axis)];
      auto [outer2, inner2] = split_at(gx.shape, axis);
      for (int64_t o = 0; o < outer2; ++o)
        for (int j = 0; j < len; ++j)
          for (int64_t i = 0; i < inner2; ++i)
            gx[(o * K2 + start + j) * inner2 + i] += g[(o * len + j) * inner2 + i];
    });
  }

  Id concat(int axis, const std::vector<Id>& parts) {
    if (parts.empty()) throw ShapeError("concat of zero parts");
    const Arr<T>& first = value(parts[0]);
    check_axis(first, axis, "concat");
    int total = 0;
    for (Id p : parts) {
      const Arr<T>& pv = value(p);
      if (pv.rank() != first.rank()) {
        throw ShapeError("concat rank mismatch: " + shape_str(first.shape) + " vs " +
                         shape_str(pv.shape));
      }
      for (int d = 0; d < first.rank(); ++d) {
        if (d != axis && pv.shape[static_cast<size_t>(d)] != first.shape[static_cast<size_t>(d)]) {
          throw ShapeError("concat axis mismatch: " + shape_str(first.shape) + " vs " +
                           shape_str(pv.shape));
        }
      }
      total += pv.shape[static_cast<size_t>(axis)];
    }
    Shape os = first.shape;
    os[static_cast<size_t>(axis)] = total;
    Arr<T> out(os);
    auto [outer, inner] = split_at(os, axis);
    int at = 0;
    for (Id p : parts) {
      const Arr<T>& pv = value(p);
      const int k = pv.shape[static_cast<size_t>(axis)];
      for (int64_t o = 0; o < outer; ++o)
        for (int j = 0; j < k; ++j)
          for (int64_t i = 0; i < inner; ++i)
            out[(o * total + at + j) * inner + i] = pv[(o * k + j) * inner + i];
      at += k;
    }
    auto parts_copy = parts;
    return record(std::move(out), parts, [parts_copy, axis, total](Tape& t, Id self) {
      const Arr<T>& g = t.grad(self);
      auto [outer2, inner2] = split_at(g.shape, axis);
      int at2 = 0;
      for (Id p : parts_copy) {
        const int k = t.value(p).shape[static_cast<size_t>(axis)];
        if (t.wants(p)) {
          Arr<T>& gp = t.ensure_grad(p);
          for (int64_t o = 0; o < outer2; ++o)
            for (int j = 0; j < k; ++j)
              for (int64_t i = 0; i < inner2; ++i)
                gp[(o * k + j) * inner2 + i] += g[(o * total + at2 + j) * inner2 + i];
        }
        at2 += k;
      }
    });
  }

  // Expand size-1 axes of x to the target shape (same rank).
  Id broadcast_to(Id x, Shape target) {
    const Arr<T>& xv = value(x);
    if (xv.rank() != static_cast<int>(target.size())) {
      throw ShapeError("broadcast_to rank mismatch: " + shape_str(xv.shape) + " -> " +
                       shape_str(target));
    }
    for (int d = 0; d < xv.rank(); ++d) {
      int sd = xv.shape[static_cast<size_t>(d)];
      if (sd != target[static_cast<size_t>(d)] && sd != 1) {
        throw ShapeError("broadcast_to invalid: " + shape_str(xv.shape) + " -> " +
                         shape_str(target));
      }
    }
    Arr<T> out(target);
    std::vector<int64_t> xst = strides(xv.shape);
    const int r = xv.rank();
    std::vector<int> coord(static_cast<size_t>(r), 0);
    for (int64_t o = 0; o < out.n(); ++o) {
      int64_t ii = 0;
      for (int d = 0; d < r; ++d)
        if (xv.shape[static_cast<size_t>(d)] != 1) ii += coord[static_cast<size_t>(d)] * xst[static_cast<size_t>(d)];
      out[o] = xv[ii];
      for (int d = r - 1; d >= 0; --d) {
        if (++coord[static_cast<size_t>(d)] < target[static_cast<size_t>(d)]) break;
        coord[static_cast<size_t>(d)] = 0;
      }
    }
    return record(std::move(out), {x}, [x, r](Tape& t, Id self) {
      const Arr<T>& g = t.grad(self);
      if (!t.wants(x)) return;
      Arr<T>& gx = t.ensure_grad(x);
      std::vector<int64_t> xst = strides(gx.shape);
      std::vector<int> coord(static_cast<size_t>(r), 0);
      for (int64_t o = 0; o < g.n(); ++o) {
        int64_t ii = 0;
        for (int d = 0; d < r; ++d)
          if (gx.shape[static_cast<size_t>(d)] != 1) ii += coord[static_cast<size_t>(d)] * xst[static_cast<size_t>(d)];
        gx[ii] += g[o];
        for (int d = r - 1; d >= 0; --d) {
          if (++coord[static_cast<size_t>(d)] < g.shape[static_cast<size_t>(d)]) break;
          coord[static_cast<size_t>(d)] = 0;
        }
      }
    });
  }

  // Rows of the output cycle through the rows of x: out[r, :] = x[r % K, :].
  Id tile_rows_mod(Id x, int nrows) {
    const Arr<T>& xv = value(x);
    if (xv.rank() != 2) throw ShapeError("tile_rows_mod expects rank 2, got " + shape_str(xv.shape));
    const int K = xv.shape[0], D = xv.shape[1];
    if (nrows <= 0) throw ShapeError("tile_rows_mod needs positive row count");
    Arr<T> out(Shape{nrows, D});
    for (int r = 0; r < nrows; ++r)
      for (int d = 0; d < D; ++d) out.at2(r, d) = xv.at2(r % K, d);
    return record(std::move(out), {x}, [x, nrows, K, D](Tape& t, Id self) {
      const Arr<T>& g = t.grad(self);
      if (!t.wants(x)) return;
      Arr<T>& gx = t.ensure_grad(x);
      for (int r = 0; r < nrows; ++r)
        for (int d = 0; d < D; ++d) gx.at2(r % K, d) += g.at2(r, d);
    });
  }

  // ---- normalization / activations ----

  // Normalizes the last axis to zero mean, unit variance (no affine).
  Id layer_norm(Id x, T eps = T(1e-5)) {
    const Arr<T>& xv = value(x);
    if (xv.rank() < 1) throw ShapeError("layer_norm needs rank >= 1");
    const int D = xv.shape[xv.rank() - 1];
    const int64_t rows = xv.n() / D;
    Arr<T> out(xv.shape);
    Arr<T> inv_std(Shape{static_cast<int>(rows)});
    for (int64_t r = 0; r < rows; ++r) {
      const T* xp = xv.data.data() + r * D;
      T mean = T(0);
      for (int i = 0; i < D; ++i) mean += xp[i];
      mean /= T(D);
      T var = T(0);
      for (int i = 0; i < D; ++i) var += (xp[i] - mean) * (xp[i] - mean);
      var /= T(D);
      const T is = T(1) / std::sqrt(var + eps);
      inv_std[r] = is;
      T* op = out.data.data() + r * D;
      for (int i = 0; i < D; ++i) op[i] = (xp[i] - mean) * is;
    }
    Arr<T> saved_y = out;
    return record(std::move(out), {x},
                  [x, D, rows, inv_std = std::move(inv_std), y = std::move(saved_y)](Tape& t, Id self) {
                    const Arr<T>& g = t.grad(self);
                    if (!t.wants(x)) return;
                    Arr<T>& gx = t.ensure_grad(x);
                    for (int64_t r = 0; r < rows; ++r) {
                      const T* gp = g.data.data() + r * D;
                      const T* yp = y.data.data() + r * D;
                      T gm = T(0), gym = T(0);
                      for (int i = 0; i < D; ++i) {
                        gm += gp[i];
                        gym += gp[i] * yp[i];
                      }
                      gm /= T(D);
                      gym /= T(D);
                      T* gxp = gx.data.data() + r * D;
                      for (int i = 0; i < D; ++i)
                        gxp[i] += inv_std[r] * (gp[i] - gm - yp[i] * gym);
                    }
                  });
  }

  Id softmax(Id x, int axis) {
    const Arr<T>& xv = value(x);
    check_axis(xv, axis, "softmax");
    const int K = xv.shape[static_cast<size_t>(axis)];
    auto [outer, inner] = split_at(xv.shape, axis);
    Arr<T> out(xv.shape);
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t i = 0; i < inner; ++i) {
        T mx = xv[(o * K) * inner + i];
        for (int k = 1; k < K; ++k) mx = std::max(mx, xv[(o * K + k) * inner + i]);
        T sum = T(0);
        for (int k = 0; k < K; ++k) {
          T e = std::exp(xv[(o * K + k) * inner + i] - mx);
          out[(o * K + k) * inner + i] = e;
          sum += e;
        }
        for (int k = 0; k < K; ++k) out[(o * K + k) * inner + i] /= sum;
      }
    }
    Arr<T> saved_y = out;
    return record(std::move(out), {x},
                  [x, axis, K, outer, inner, y = std::move(saved_y)](Tape& t, Id self) {
                    const Arr<T>& g = t.grad(self);
                    if (!t.wants(x)) return;
                    Arr<T>& gx = t.ensure_grad(x);
                    for (int64_t o = 0; o < outer; ++o)
                      for (int64_t i = 0; i < inner; ++i) {
                        T dot = T(0);
                        for (int k = 0; k < K; ++k)
                          dot += g[(o * K + k) * inner + i] * y[(o * K + k) * inner + i];
                        for (int k = 0; k < K; ++k) {
                          const int64_t ix = (o * K + k) * inner + i;
                          gx[ix] += y[ix] * (g[ix] - dot);
                        }
                      }
                  });
  }

  Id gelu(Id x) {
    const Arr<T>& xv = value(x);
    Arr<T> out(xv.shape);
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    for (int64_t i = 0; i < xv.n(); ++i) {
      const double v = static_cast<double>(xv[i]);
      out[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * inv_sqrt2)));
    }
    return record(std::move(out), {x}, [x](Tape& t, Id self) {
      const Arr<T>& g = t.grad(self);
      if (!t.wants(x)) return;
      const Arr<T>& xv2 = t.value(x);
      Arr<T>& gx = t.ensure_grad(x);
      constexpr double inv_sqrt2b = 0.7071067811865475244;
      constexpr double inv_sqrt2pi = 0.3989422804014326779;
      for (int64_t i = 0; i < g.n(); ++i) {
        const double v = static_cast<double>(xv2[i]);
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2b));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        gx[i] += g[i] * static_cast<T>(cdf + v * pdf);
      }
    });
  }

  // ---- reductions ----

  Id mean_pool(Id x, int axis) {
    const Arr<T>& xv = value(x);
    check_axis(xv, axis, "mean_pool");
    const int K = xv.shape[static_cast<size_t>(axis)];
    auto [outer, inner] = split_at(xv.shape, axis);
    Shape os;
    for (int d = 0; d < xv.rank(); ++d)
      if (d != axis) os.push_back(xv.shape[static_cast<size_t>(d)]);
    if (os.empty()) os.push_back(1);
    Arr<T> out(os);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t i = 0; i < inner; ++i) {
        T acc = T(0);
        for (int k = 0; k < K; ++k) acc += xv[(o * K + k) * inner + i];
        out[o * inner + i] = acc / T(K);
      }
    return record(std::move(out), {x}, [x, axis, K](Tape& t, Id self) {
      const Arr<T>& g = t.grad(self);
      if (!t.wants(x)) return;
      Arr<T>& gx = t.ensure_grad(x);
      auto [outer2, inner2] = split_at(gx.shape, axis);
      for (int64_t o = 0; o < outer2; ++o)
        for (int64_t i = 0; i < inner2; ++i)
          for (int k = 0; k < K; ++k)
            gx[(o * K + k) * inner2 + i] += g[o * inner2 + i] / T(K);
    });
  }

  Id sum_all(Id x) {
    const Arr<T>& xv = value(x);
    T acc = T(0);
    for (const T& v : xv.data) acc += v;
    Arr<T> out(Shape{1});
    out[0] = acc;
    return record(std::move(out), {x}, [x](Tape& t, Id self) {
      const T g = t.grad(self)[0];
      if (!t.wants(x)) return;
      Arr<T>& gx = t.ensure_grad(x);
      for (auto& v : gx.data) v += g;
    });
  }

  Id mean_all(Id x) {
    const int64_t n = value(x).n();
    return scale(sum_all(x), T(1) / T(n));
  }

  // Euclidean norm along an axis (axis removed from the output shape).
  Id l2_norm(Id x, int axis) {
    const Arr<T>& xv = value(x);
    check_axis(xv, axis, "l2_norm");
    const int K = xv.shape[static_cast<size_t>(axis)];
    auto [outer, inner] = split_at(xv.shape, axis);
    Shape os;
    for (int d = 0; d < xv.rank(); ++d)
      if (d != axis) os.push_back(xv.shape[static_cast<size_t>(d)]);
    if (os.empty()) os.push_back(1);
    Arr<T> out(os);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t i = 0; i < inner; ++i) {
        T acc = T(0);
        for (int k = 0; k < K; ++k) {
          const T v = xv[(o * K + k) * inner + i];
          acc += v * v;
        }
        out[o * inner + i] = std::sqrt(acc);
      }
    Arr<T> saved = out;
    return record(std::move(out), {x}, [x, axis, K, norms = std::move(saved)](Tape& t, Id self) {
      const Arr<T>& g = t.grad(self);
      if (!t.wants(x)) return;
      const Arr<T>& xv2 = t.value(x);
      Arr<T>& gx = t.ensure_grad(x);
      auto [outer2, inner2] = split_at(gx.shape, axis);
      for (int64_t o = 0; o < outer2; ++o)
        for (int64_t i = 0; i < inner2; ++i) {
          const T nrm = norms[o * inner2 + i];
          if (nrm <= T(0)) continue;
          const T go = g[o * inner2 + i];
          for (int k = 0; k < K; ++k) {
            const int64_t ix = (o * K + k) * inner2 + i;
            gx[ix] += go * xv2[ix] / nrm;
          }
        }
    });
  }

  // Elementwise smooth-L1: 0.5*d^2/beta inside |d|<beta, |d|-0.5*beta outside.
  Id smooth_l1(Id x, Id y, T beta) {
    const Arr<T>& xv = value(x);
    const Arr<T>& yv = value(y);
    if (xv.shape != yv.shape) {
      throw ShapeError("smooth_l1 shape mismatch: " + shape_str(xv.shape) + " vs " +
                       shape_str(yv.shape));
    }
    if (beta <= T(0)) throw ConfigError("smooth_l1 beta must be positive");
    Arr<T> out(xv.shape);
    for (int64_t i = 0; i < xv.n(); ++i) {
      const T d = xv[i] - yv[i];
      const T a = std::abs(d);
      out[i] = a < beta ? T(0.5) * d * d / beta : a - T(0.5) * beta;
    }
    return record(std::move(out), {x, y}, [x, y, beta](Tape& t, Id self) {
      const Arr<T>& g = t.grad(self);
      const Arr<T>& xv2 = t.value(x);
      const Arr<T>& yv2 = t.value(y);
      const bool wx = t.wants(x), wy = t.wants(y);
      if (!wx && !wy) return;
      for (int64_t i = 0; i < g.n(); ++i) {
        const T d = xv2[i] - yv2[i];
        const T dd = std::abs(d) < beta ? d / beta : (d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)));
        if (wx) t.ensure_grad(x)[i] += g[i] * dd;
        if (wy) t.ensure_grad(y)[i] -= g[i] * dd;
      }
    });
  }

  // Rotary position encoding over the last axis of x: [..., S, dh], dh even.
  // positions[s] gives the integer position of sequence element s.
  Id rope(Id x, const std::vector<int>& positions, double base = 10000.0) {
    const Arr<T>& xv = value(x);
    if (xv.rank() < 2) throw ShapeError("rope needs rank >= 2, got " + shape_str(xv.shape));
    const int dh = xv.shape[xv.rank() - 1];
    const int S = xv.shape[xv.rank() - 2];
    if (dh % 2 != 0) throw ShapeError("rope head dim must be even, got " + shape_str(xv.shape));
    if (static_cast<int>(positions.size()) != S) {
      throw ShapeError("rope positions length " + std::to_string(positions.size()) +
                       " != sequence length " + std::to_string(S));
    }
    const int pairs = dh / 2;
    Arr<T> cos_t(Shape{S, pairs}), sin_t(Shape{S, pairs});
    for (int s = 0; s < S; ++s)
      for (int j = 0; j < pairs; ++j) {
        const double theta =
            positions[static_cast<size_t>(s)] * std::pow(base, -2.0 * j / static_cast<double>(dh));
        cos_t.at2(s, j) = static_cast<T>(std::cos(theta));
        sin_t.at2(s, j) = static_cast<T>(std::sin(theta));
      }
    const int64_t batches = xv.n() / (static_cast<int64_t>(S) * dh);
    Arr<T> out(xv.shape);
    for (int64_t bt = 0; bt < batches; ++bt)
      for (int s = 0; s < S; ++s) {
        const T* xp = xv.data.data() + (bt * S + s) * dh;
        T* op = out.data.data() + (bt * S + s) * dh;
        for (int j = 0; j < pairs; ++j) {
          const T c = cos_t.at2(s, j), sn = sin_t.at2(s, j);
          op[2 * j] = xp[2 * j] * c - xp[2 * j + 1] * sn;
          op[2 * j + 1] = xp[2 * j] * sn + xp[2 * j + 1] * c;
        }
      }
    return record(std::move(out), {x},
                  [x, S, dh, pairs, batches, cos_t = std::move(cos_t),
                   sin_t = std::move(sin_t)](Tape& t, Id self) {
                    const Arr<T>& g = t.grad(self);
                    if (!t.wants(x)) return;
                    Arr<T>& gx = t.ensure_grad(x);
                    for (int64_t bt = 0; bt < batches; ++bt)
                      for (int s = 0; s < S; ++s) {
                        const T* gp = g.data.data() + (bt * S + s) * dh;
                        T* gxp = gx.data.data() + (bt * S + s) * dh;
                        for (int j = 0; j < pairs; ++j) {
                          const T c = cos_t.at2(s, j), sn = sin_t.at2(s, j);
                          gxp[2 * j] += gp[2 * j] * c + gp[2 * j + 1] * sn;
                          gxp[2 * j + 1] += -gp[2 * j] * sn + gp[2 * j + 1] * c;
                        }
                      }
                  });
  }

  Arr<T>& ensure_grad(Id id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.data.empty()) n.grad = Arr<T>::zeros(n.value.shape);
    return n.grad;
  }
  bool wants(Id id) const { return nodes_[static_cast<size_t>(id)].rg; }

 private:
  enum class BinOp { Add, Sub, Mul };

  std::vector<Node> nodes_;

  static std::vector<int64_t> strides(const Shape& s) {
    std::vector<int64_t> st(s.size(), 1);
    for (int d = static_cast<int>(s.size()) - 2; d >= 0; --d)
      st[static_cast<size_t>(d)] = st[static_cast<size_t>(d) + 1] * s[static_cast<size_t>(d) + 1];
    return st;
  }

  static std::pair<int64_t, int64_t> split_at(const Shape& s, int axis) {
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s[static_cast<size_t>(d)];
    for (int d = axis + 1; d < static_cast<int>(s.size()); ++d) inner *= s[static_cast<size_t>(d)];
    return {outer, inner};
  }

  static void check_axis(const Arr<T>& a, int axis, const char* op) {
    if (axis < 0 || axis >= a.rank()) {
      throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                       shape_str(a.shape));
    }
  }

  // Validates leading-axis broadcast compatibility; returns the output operand
  // order: (big, small, small_is_b).
  static void check_suffix(const Shape& big, const Shape& small) {
    if (shape_numel(small) == 1) return;
    if (small.size() > big.size()) {
      throw ShapeError("broadcast rank mismatch: " + shape_str(big) + " vs " + shape_str(small));
    }
    const size_t off = big.size() - small.size();
    for (size_t d = 0; d < small.size(); ++d) {
      if (big[off + d] != small[d]) {
        throw ShapeError("shapes not broadcastable: " + shape_str(big) + " vs " +
                         shape_str(small));
      }
    }
  }

  Id binary(Id a, Id b, BinOp op) {
    const Arr<T>& av = value(a);
    const Arr<T>& bv = value(b);
    const bool b_small = bv.n() < av.n() || (bv.n() == av.n() && av.shape == bv.shape);
    const Arr<T>& big = b_small ? av : bv;
    const Arr<T>& small = b_small ? bv : av;
    if (big.shape != small.shape) check_suffix(big.shape, small.shape);
    const int64_t ns = small.n();
    Arr<T> out(big.shape);
    for (int64_t i = 0; i < big.n(); ++i) {
      const T x = b_small ? av[b_small ? i : i % ns] : av[i % ns];
      const T y = b_small ? bv[i % ns] : bv[i];
      switch (op) {
        case BinOp::Add: out[i] = x + y; break;
        case BinOp::Sub: out[i] = x - y; break;
        case BinOp::Mul: out[i] = x * y; break;
      }
    }
    return record(std::move(out), {a, b}, [a, b, op, b_small, ns](Tape& t, Id self) {
      const Arr<T>& g = t.grad(self);
      const Arr<T>& av2 = t.value(a);
      const Arr<T>& bv2 = t.value(b);
      const bool wa = t.wants(a), wb = t.wants(b);
      if (!wa && !wb) return;
      for (int64_t i = 0; i < g.n(); ++i) {
        const int64_t ia = b_small ? i : i % ns;
        const int64_t ib = b_small ? i % ns : i;
        switch (op) {
          case BinOp::Add:
            if (wa) t.ensure_grad(a)[ia] += g[i];
            if (wb) t.ensure_grad(b)[ib] += g[i];
            break;
          case BinOp::Sub:
            if (wa) t.ensure_grad(a)[ia] += g[i];
            if (wb) t.ensure_grad(b)[ib] -= g[i];
            break;
          case BinOp::Mul:
            if (wa) t.ensure_grad(a)[ia] += g[i] * bv2[ib];
            if (wb) t.ensure_grad(b)[ib] += g[i] * av2[ia];
            break;
        }
      }
    });
  }

  Id record(Arr<T> out, const std::vector<Id>& parents, std::function<void(Tape&, Id)> back) {
    Node n;
    n.value = std::move(out);
    for (Id p : parents) n.rg = n.rg || nodes_[static_cast<size_t>(p)].rg;
    if (n.rg) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size()) - 1;
  }
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

// softmax(q k^T / sqrt(dh)) v over the trailing (sequence, head-dim) axes.
// q: [..., Sq, dh], k/v: [..., Sk, dh] with matching leading axes.
template <typename T>
int scaled_dot_attention(Tape<T>& t, int q, int k, int v) {
  const int r = t.value(k).rank();
  if (r < 2) throw ShapeError("attention operands need rank >= 2");
  const int dh = t.value(q).shape[static_cast<size_t>(t.value(q).rank() - 1)];
  std::vector<int> perm(static_cast<size_t>(r));
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[static_cast<size_t>(r - 1)], perm[static_cast<size_t>(r - 2)]);
  const int kt = t.transpose(k, perm);
  const int scores = t.scale(t.matmul(q, kt), T(1.0 / std::sqrt(static_cast<double>(dh))));
  const int attn = t.softmax(scores, t.value(scores).rank() - 1);
  return t.matmul(attn, v);
}

}  // namespace tjepa
