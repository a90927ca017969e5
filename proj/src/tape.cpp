#include "iconvec/tape.h"

#include <cmath>

#include "iconvec/errors.h"
#include "iconvec/kernels.h"
#include "iconvec/tokenizer.h"

namespace iconvec {

// ---------------------------------------------------------------------------
// ParamStore / GradStore

int ParamStore::add(const std::string& name, Tensor value, const std::string& group) {
    if (index_.count(name)) throw Error("duplicate parameter name: " + name);
    int id = static_cast<int>(items_.size());
    items_.push_back({name, group, std::move(value), true});
    index_[name] = id;
    return id;
}

int ParamStore::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
}

void GradStore::init(const ParamStore& params) {
    grads.clear();
    grads.reserve(params.count());
    for (int i = 0; i < params.count(); ++i)
        grads.emplace_back(params.value(i).rows, params.value(i).cols);
}

void GradStore::zero() {
    for (Tensor& g : grads) g.zero();
}

void GradStore::add_from(const GradStore& other) {
    for (size_t i = 0; i < grads.size(); ++i)
        kern::serial::add(grads[i].data(), other.grads[i].data(), grads[i].data(),
                          grads[i].size());
}

void GradStore::scale(double s) {
    for (Tensor& g : grads)
        for (double& x : g.a) x *= s;
}

// ---------------------------------------------------------------------------
// Tape

namespace {

// Thread-local recycling of tensor storage across tapes. Values are always
// fully overwritten by the op that creates them, so reused buffers are
// handed out dirty; gradients are zero-filled explicitly.
class BufferPool {
  public:
    static BufferPool& local() {
        static thread_local BufferPool pool;
        return pool;
    }

    std::vector<double> get(size_t n) {
        auto it = buckets_.find(n);
        if (it == buckets_.end() || it->second.empty()) return std::vector<double>(n);
        std::vector<double> v = std::move(it->second.back());
        it->second.pop_back();
        return v;
    }

    void put(std::vector<double>&& v) {
        if (!v.empty()) buckets_[v.size()].push_back(std::move(v));
    }

  private:
    std::unordered_map<size_t, std::vector<std::vector<double>>> buckets_;
};

}  // namespace

Tape::~Tape() {
    BufferPool& pool = BufferPool::local();
    for (auto& node : nodes_) {
        pool.put(std::move(node->owned.a));
        pool.put(std::move(node->grad.a));
    }
}

Node* Tape::make(Tensor value) {
    auto node = std::make_unique<Node>();
    node->owned = std::move(value);
    node->v = &node->owned;
    node->grad.rows = node->owned.rows;
    node->grad.cols = node->owned.cols;
    node->grad.a = BufferPool::local().get(node->owned.size());
    std::fill(node->grad.a.begin(), node->grad.a.end(), 0.0);
    nodes_.push_back(std::move(node));
    return nodes_.back().get();
}

Node* Tape::make_like(int rows, int cols) {
    Tensor t;
    t.rows = rows;
    t.cols = cols;
    t.a = BufferPool::local().get(size_t(rows) * cols);
    return make(std::move(t));
}

Node* Tape::param(int id) {
    auto it = param_nodes_.find(id);
    if (it != param_nodes_.end()) return it->second;
    auto node = std::make_unique<Node>();
    node->v = &params_->value(id);
    node->grad.rows = node->v->rows;
    node->grad.cols = node->v->cols;
    node->grad.a = BufferPool::local().get(node->v->size());
    std::fill(node->grad.a.begin(), node->grad.a.end(), 0.0);
    node->param_id = id;
    nodes_.push_back(std::move(node));
    param_nodes_[id] = nodes_.back().get();
    return nodes_.back().get();
}

Node* Tape::constant(Tensor t) { return make(std::move(t)); }

Node* Tape::matmul(Node* a, Node* b) {
    if (a->cols() != b->rows()) throw ShapeError("matmul: inner dimensions differ");
    Node* out = make_like(a->rows(), b->cols());
    kern::gemm_nn(a->v->data(), b->v->data(), out->owned.data(), a->rows(), a->cols(), b->cols());
    out->back = [a, b, out] {
        // dA += dC * B^T ; dB += A^T * dC
        kern::gemm_nt(out->grad.data(), b->v->data(), a->grad.data(), out->rows(), out->cols(),
                      b->rows(), true);
        kern::gemm_tn(a->v->data(), out->grad.data(), b->grad.data(), a->rows(), a->cols(),
                      out->cols(), true);
    };
    return out;
}

Node* Tape::matmul_nt(Node* a, Node* b) {
    if (a->cols() != b->cols()) throw ShapeError("matmul_nt: inner dimensions differ");
    Node* out = make_like(a->rows(), b->rows());
    kern::gemm_nt(a->v->data(), b->v->data(), out->owned.data(), a->rows(), a->cols(), b->rows());
    out->back = [a, b, out] {
        // C = A*B^T: dA += dC * B ; dB += dC^T * A
        kern::gemm_nn(out->grad.data(), b->v->data(), a->grad.data(), out->rows(), out->cols(),
                      b->cols(), true);
        kern::gemm_tn(out->grad.data(), a->v->data(), b->grad.data(), out->rows(), out->cols(),
                      a->cols(), true);
    };
    return out;
}

Node* Tape::linear(Node* x, Node* w, Node* b) {
    if (x->cols() != w->rows() || b->rows() != 1 || b->cols() != w->cols())
        throw ShapeError("linear: shape mismatch");
    const int n = x->rows(), in = x->cols(), out_w = w->cols();
    Node* out = make_like(n, out_w);
    kern::gemm_nn(x->v->data(), w->v->data(), out->owned.data(), n, in, out_w);
    for (int i = 0; i < n; ++i)
        kern::serial::axpy(1.0, b->v->data(), out->owned.data() + size_t(i) * out_w, out_w);
    out->back = [x, w, b, out, n, in, out_w] {
        kern::gemm_nt(out->grad.data(), w->v->data(), x->grad.data(), n, out_w, in, true);
        kern::gemm_tn(x->v->data(), out->grad.data(), w->grad.data(), n, in, out_w, true);
        for (int i = 0; i < n; ++i)
            kern::serial::axpy(1.0, out->grad.data() + size_t(i) * out_w, b->grad.data(), out_w);
    };
    return out;
}

Node* Tape::attention(Node* q, Node* k, Node* v, int n_heads, std::vector<int> limits) {
    const int n = q->rows(), m = k->rows(), d = q->cols();
    if (k->cols() != d || v->cols() != d || v->rows() != m)
        throw ShapeError("attention: shape mismatch");
    if (d % n_heads != 0) throw ShapeError("attention: d not divisible by heads");
    if (!limits.empty() && static_cast<int>(limits.size()) != n)
        throw ShapeError("attention: limits size mismatch");
    Node* out = make_like(n, d);
    auto probs = std::make_shared<std::vector<double>>(size_t(n_heads) * n * m);
    auto lim = std::make_shared<std::vector<int>>(std::move(limits));
    const int* lp = lim->empty() ? nullptr : lim->data();
    kern::attention_forward(q->v->data(), k->v->data(), v->v->data(), probs->data(),
                            out->owned.data(), n, m, d, n_heads, lp);
    out->back = [q, k, v, out, probs, lim, n, m, d, n_heads] {
        kern::attention_backward(q->v->data(), k->v->data(), v->v->data(), probs->data(),
                                 out->grad.data(), q->grad.data(), k->grad.data(),
                                 v->grad.data(), n, m, d, n_heads,
                                 lim->empty() ? nullptr : lim->data());
    };
    return out;
}

Node* Tape::add(Node* a, Node* b) {
    if (!a->v->same_shape(*b->v)) throw ShapeError("add: shape mismatch");
    Node* out = make_like(a->rows(), a->cols());
    kern::add(a->v->data(), b->v->data(), out->owned.data(), out->owned.size());
    out->back = [a, b, out] {
        kern::axpy(1.0, out->grad.data(), a->grad.data(), out->grad.size());
        kern::axpy(1.0, out->grad.data(), b->grad.data(), out->grad.size());
    };
    return out;
}

Node* Tape::add_rowvec(Node* a, Node* b) {
    if (b->rows() != 1 || b->cols() != a->cols()) throw ShapeError("add_rowvec: bad vector shape");
    Node* out = make_like(a->rows(), a->cols());
    const int n = a->rows(), m = a->cols();
    for (int i = 0; i < n; ++i)
        kern::serial::add(a->v->data() + size_t(i) * m, b->v->data(),
                          out->owned.data() + size_t(i) * m, m);
    out->back = [a, b, out, n, m] {
        kern::axpy(1.0, out->grad.data(), a->grad.data(), out->grad.size());
        for (int i = 0; i < n; ++i)
            kern::serial::axpy(1.0, out->grad.data() + size_t(i) * m, b->grad.data(), m);
    };
    return out;
}

Node* Tape::scale(Node* a, double s) {
    Node* out = make_like(a->rows(), a->cols());
    for (size_t i = 0; i < out->owned.size(); ++i) out->owned.a[i] = a->v->a[i] * s;
    out->back = [a, out, s] { kern::axpy(s, out->grad.data(), a->grad.data(), out->grad.size()); };
    return out;
}

Node* Tape::slice_cols(Node* a, int j0, int w) {
    if (j0 < 0 || j0 + w > a->cols()) throw ShapeError("slice_cols: out of range");
    Node* out = make_like(a->rows(), w);
    const int m = a->cols();
    for (int i = 0; i < a->rows(); ++i)
        std::copy_n(a->v->data() + size_t(i) * m + j0, w, out->owned.data() + size_t(i) * w);
    out->back = [a, out, j0, w, m] {
        for (int i = 0; i < out->rows(); ++i)
            kern::serial::axpy(1.0, out->grad.data() + size_t(i) * w,
                               a->grad.data() + size_t(i) * m + j0, w);
    };
    return out;
}

Node* Tape::slice_rows(Node* a, int i0, int h) {
    if (i0 < 0 || i0 + h > a->rows()) throw ShapeError("slice_rows: out of range");
    Node* out = make_like(h, a->cols());
    const int m = a->cols();
    std::copy_n(a->v->data() + size_t(i0) * m, size_t(h) * m, out->owned.data());
    out->back = [a, out, i0, m] {
        kern::serial::axpy(1.0, out->grad.data(), a->grad.data() + size_t(i0) * m,
                           out->grad.size());
    };
    return out;
}

Node* Tape::reshape(Node* a, int rows, int cols) {
    if (size_t(rows) * cols != a->v->size()) throw ShapeError("reshape: element count mismatch");
    Node* out = make_like(rows, cols);
    std::copy_n(a->v->data(), a->v->size(), out->owned.data());
    out->back = [a, out] {
        kern::serial::axpy(1.0, out->grad.data(), a->grad.data(), out->grad.size());
    };
    return out;
}

Node* Tape::concat_cols(const std::vector<Node*>& parts) {
    int rows = parts[0]->rows(), total = 0;
    for (Node* p : parts) {
        if (p->rows() != rows) throw ShapeError("concat_cols: row mismatch");
        total += p->cols();
    }
    Node* out = make_like(rows, total);
    int off = 0;
    for (Node* p : parts) {
        for (int i = 0; i < rows; ++i)
            std::copy_n(p->v->data() + size_t(i) * p->cols(), p->cols(),
                        out->owned.data() + size_t(i) * total + off);
        off += p->cols();
    }
    std::vector<Node*> ps = parts;
    out->back = [ps, out, rows, total] {
        int off2 = 0;
        for (Node* p : ps) {
            for (int i = 0; i < rows; ++i)
                kern::serial::axpy(1.0, out->grad.data() + size_t(i) * total + off2,
                                   p->grad.data() + size_t(i) * p->cols(), p->cols());
            off2 += p->cols();
        }
    };
    return out;
}

Node* Tape::stack_rows(const std::vector<Node*>& parts) {
    int cols = parts[0]->cols();
    Node* out = make_like(static_cast<int>(parts.size()), cols);
    for (size_t i = 0; i < parts.size(); ++i) {
        if (parts[i]->rows() != 1 || parts[i]->cols() != cols)
            throw ShapeError("stack_rows: parts must be 1 x cols");
        std::copy_n(parts[i]->v->data(), cols, out->owned.data() + i * cols);
    }
    std::vector<Node*> ps = parts;
    out->back = [ps, out, cols] {
        for (size_t i = 0; i < ps.size(); ++i)
            kern::serial::axpy(1.0, out->grad.data() + i * cols, ps[i]->grad.data(), cols);
    };
    return out;
}

Node* Tape::mean_rows(Node* a) {
    std::vector<int> rows(a->rows());
    for (int i = 0; i < a->rows(); ++i) rows[i] = i;
    return mean_rows_subset(a, std::move(rows));
}

Node* Tape::mean_rows_subset(Node* a, std::vector<int> rows) {
    if (rows.empty()) throw ShapeError("mean_rows_subset: empty row set");
    Node* out = make_like(1, a->cols());
    const int m = a->cols();
    const double inv = 1.0 / double(rows.size());
    for (int j = 0; j < m; ++j) {
        double s = 0.0;
        for (int i : rows) s += a->v->at(i, j);
        out->owned.a[j] = s * inv;
    }
    auto rs = std::make_shared<std::vector<int>>(std::move(rows));
    out->back = [a, out, rs, m, inv] {
        for (int i : *rs)
            kern::serial::axpy(inv, out->grad.data(), a->grad.data() + size_t(i) * m, m);
    };
    return out;
}

Node* Tape::layernorm(Node* x, Node* gain, Node* bias, double eps) {
    if (gain->cols() != x->cols() || bias->cols() != x->cols())
        throw ShapeError("layernorm: gain/bias width mismatch");
    Node* out = make_like(x->rows(), x->cols());
    auto stats = std::make_shared<std::vector<double>>(size_t(x->rows()) * 2);
    double* mean = stats->data();
    double* rstd = stats->data() + x->rows();
    kern::layernorm_rows(x->v->data(), gain->v->data(), bias->v->data(), out->owned.data(), mean,
                         rstd, x->rows(), x->cols(), eps);
    out->back = [x, gain, bias, out, stats] {
        const double* mean2 = stats->data();
        const double* rstd2 = stats->data() + x->rows();
        kern::layernorm_backward_rows(x->v->data(), gain->v->data(), mean2, rstd2,
                                      out->grad.data(), x->grad.data(), gain->grad.data(),
                                      bias->grad.data(), x->rows(), x->cols());
    };
    return out;
}

Node* Tape::gelu(Node* x) {
    Node* out = make_like(x->rows(), x->cols());
    kern::gelu(x->v->data(), out->owned.data(), out->owned.size());
    out->back = [x, out] {
        kern::gelu_backward(x->v->data(), out->grad.data(), x->grad.data(), out->grad.size());
    };
    return out;
}

Node* Tape::softmax_rows(Node* x, std::vector<int> limits) {
    Node* out = make_like(x->rows(), x->cols());
    std::copy_n(x->v->data(), x->v->size(), out->owned.data());
    auto lim = std::make_shared<std::vector<int>>(std::move(limits));
    const int* lp = lim->empty() ? nullptr : lim->data();
    kern::softmax_rows(out->owned.data(), x->rows(), x->cols(), lp);
    out->back = [x, out, lim] {
        kern::softmax_backward_rows(out->owned.data(), out->grad.data(), x->grad.data(), x->rows(),
                                    x->cols(), lim->empty() ? nullptr : lim->data());
    };
    return out;
}

Node* Tape::dropout(Node* x, double p, uint64_t seed) {
    if (p <= 0.0) return x;
    Node* out = make_like(x->rows(), x->cols());
    auto mask = std::make_shared<std::vector<double>>(x->v->size());
    double keep = 1.0 - p;
    for (size_t i = 0; i < mask->size(); ++i) {
        // Counter-based stream: deterministic for a given (seed, i).
        double u = (kern::hash_mix(seed + i) >> 11) * 0x1.0p-53;
        (*mask)[i] = u < p ? 0.0 : 1.0 / keep;
        out->owned.a[i] = x->v->a[i] * (*mask)[i];
    }
    out->back = [x, out, mask] {
        for (size_t i = 0; i < mask->size(); ++i) x->grad.a[i] += out->grad.a[i] * (*mask)[i];
    };
    return out;
}

Node* Tape::cross_entropy_rows(Node* logits, std::vector<int> targets) {
    if (static_cast<int>(targets.size()) != logits->rows())
        throw ShapeError("cross_entropy_rows: target count mismatch");
    const int n = logits->rows(), k = logits->cols();
    auto probs = std::make_shared<Tensor>(n, k);
    std::copy_n(logits->v->data(), logits->v->size(), probs->data());
    kern::softmax_rows(probs->data(), n, k, nullptr);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        int t = targets[i];
        if (t < 0) continue;
        if (t >= k) throw ShapeError("cross_entropy_rows: target class out of range");
        total += -std::log(std::max(probs->at(i, t), 1e-300));
    }
    Node* out = make_like(1, 1);
    out->owned.a[0] = total;
    auto tg = std::make_shared<std::vector<int>>(std::move(targets));
    out->back = [logits, out, probs, tg, n, k] {
        double up = out->grad.a[0];
        for (int i = 0; i < n; ++i) {
            int t = (*tg)[i];
            if (t < 0) continue;
            double* dst = logits->grad.data() + size_t(i) * k;
            const double* p = probs->data() + size_t(i) * k;
            for (int j = 0; j < k; ++j) dst[j] += up * (p[j] - (j == t ? 1.0 : 0.0));
        }
    };
    return out;
}

Node* Tape::squared_error_masked(Node* pred, Tensor target, Tensor mask) {
    if (!pred->v->same_shape(target) || !pred->v->same_shape(mask))
        throw ShapeError("squared_error_masked: shape mismatch");
    double total = 0.0;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (mask.a[i] == 0.0) continue;
        double d = pred->v->a[i] - target.a[i];
        total += d * d;
    }
    Node* out = make_like(1, 1);
    out->owned.a[0] = total;
    auto tgt = std::make_shared<Tensor>(std::move(target));
    auto msk = std::make_shared<Tensor>(std::move(mask));
    out->back = [pred, out, tgt, msk] {
        double up = out->grad.a[0];
        for (size_t i = 0; i < msk->size(); ++i) {
            if (msk->a[i] == 0.0) continue;
            pred->grad.a[i] += up * 2.0 * (pred->v->a[i] - tgt->a[i]);
        }
    };
    return out;
}

Node* Tape::add_scalars(const std::vector<Node*>& xs) {
    Node* out = make_like(1, 1);
    double s = 0.0;
    for (Node* x : xs) {
        if (x->rows() != 1 || x->cols() != 1) throw ShapeError("add_scalars: non-scalar input");
        s += x->scalar();
    }
    out->owned.a[0] = s;
    std::vector<Node*> parts = xs;
    out->back = [parts, out] {
        for (Node* x : parts) x->grad.a[0] += out->grad.a[0];
    };
    return out;
}

Node* Tape::embed_tokens(const int16_t* types, const double* args, const int* positions, int n,
                         Node* type_table, Node* index_table, Node* arg_w, Node* arg_b,
                         Node* arg_table) {
    const int d = type_table->cols();
    const bool discrete = arg_table != nullptr;
    Node* out = make_like(n, d);

    auto row_of = [](int16_t t) { return t == kPad ? kTokenTypes : int(t); };
    auto qidx = std::make_shared<std::vector<int>>(n, -1);
    auto pos = std::make_shared<std::vector<int>>(n);
    for (int i = 0; i < n; ++i) (*pos)[i] = positions ? positions[i] : i;
    for (int i = 0; i < n; ++i) {
        if ((*pos)[i] >= index_table->rows())
            throw RangeError("embed_tokens: position beyond index table");
        double* dst = out->owned.data() + size_t(i) * d;
        const double* trow = type_table->v->data() + size_t(row_of(types[i])) * d;
        const double* irow = index_table->v->data() + size_t((*pos)[i]) * d;
        for (int j = 0; j < d; ++j) dst[j] = trow[j] + irow[j];
        if (types[i] == kArg) {
            if (discrete) {
                int q = quantize8(std::clamp(args[i], 0.0, 1.0));
                (*qidx)[i] = q;
                kern::serial::axpy(1.0, arg_table->v->data() + size_t(q) * d, dst, d);
            } else {
                double a = args[i];
                for (int j = 0; j < d; ++j) dst[j] += a * arg_w->v->a[j] + arg_b->v->a[j];
            }
        }
    }

    auto ts = std::make_shared<std::vector<int16_t>>(types, types + n);
    auto as = std::make_shared<std::vector<double>>(args, args + n);
    out->back = [out, type_table, index_table, arg_w, arg_b, arg_table, ts, as, qidx, pos, n, d,
                 discrete, row_of] {
        for (int i = 0; i < n; ++i) {
            const double* g = out->grad.data() + size_t(i) * d;
            kern::serial::axpy(1.0, g, type_table->grad.data() + size_t(row_of((*ts)[i])) * d, d);
            kern::serial::axpy(1.0, g, index_table->grad.data() + size_t((*pos)[i]) * d, d);
            if ((*ts)[i] == kArg) {
                if (discrete) {
                    kern::serial::axpy(1.0, g, arg_table->grad.data() + size_t((*qidx)[i]) * d, d);
                } else {
                    kern::serial::axpy((*as)[i], g, arg_w->grad.data(), d);
                    kern::serial::axpy(1.0, g, arg_b->grad.data(), d);
                }
            }
        }
    };
    return out;
}

void Tape::backward(Node* root) {
    if (!sink_) throw Error("tape: backward without a gradient sink");
    if (root->rows() != 1 || root->cols() != 1) throw ShapeError("backward: root must be scalar");
    root->grad.a[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
        if ((*it)->back) (*it)->back();
    for (auto& [id, node] : param_nodes_)
        kern::serial::axpy(1.0, node->grad.data(), sink_->grads[id].data(), node->grad.size());
}

}  // namespace iconvec
