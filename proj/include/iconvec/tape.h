#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace iconvec {

// Row-major dense matrix of doubles. Vectors are 1 x n.
struct Tensor {
    int rows = 0, cols = 0;
    std::vector<double> a;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), a(size_t(r) * c, 0.0) {}

    size_t size() const { return a.size(); }
    double* data() { return a.data(); }
    const double* data() const { return a.data(); }
    double& at(int i, int j) { return a[size_t(i) * cols + j]; }
    double at(int i, int j) const { return a[size_t(i) * cols + j]; }
    void zero() { std::fill(a.begin(), a.end(), 0.0); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

// Named parameter tensors. Group tags drive freezing and per-group checks.
class ParamStore {
  public:
    int add(const std::string& name, Tensor value, const std::string& group);
    int count() const { return static_cast<int>(items_.size()); }
    Tensor& value(int id) { return items_[id].value; }
    const Tensor& value(int id) const { return items_[id].value; }
    const std::string& name(int id) const { return items_[id].name; }
    const std::string& group(int id) const { return items_[id].group; }
    bool trainable(int id) const { return items_[id].trainable; }
    void set_trainable(int id, bool t) { items_[id].trainable = t; }
    int find(const std::string& name) const;  // -1 when absent

  private:
    struct Item {
        std::string name;
        std::string group;
        Tensor value;
        bool trainable = true;
    };
    std::vector<Item> items_;
    std::unordered_map<std::string, int> index_;
};

// Per-thread gradient accumulator aligned with ParamStore ids.
struct GradStore {
    std::vector<Tensor> grads;

    void init(const ParamStore& params);
    void zero();
    void add_from(const GradStore& other);  // fixed element order
    void scale(double s);
};

struct Node {
    Tensor owned;            // storage unless this is a parameter view
    const Tensor* v = nullptr;
    Tensor grad;
    int param_id = -1;
    std::function<void()> back;

    int rows() const { return v->rows; }
    int cols() const { return v->cols; }
    double scalar() const { return v->a[0]; }
};

// Eager reverse-mode tape. Nodes are created in topological order; backward
// walks them in reverse. Parameter values are referenced, never copied, and
// their gradients are flushed into the GradStore sink after the walk.
class Tape {
  public:
    explicit Tape(const ParamStore* params, GradStore* sink = nullptr)
        : params_(params), sink_(sink) {}
    ~Tape();  // returns tensor storage to the thread-local pool
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Node* param(int id);
    Node* constant(Tensor t);

    Node* matmul(Node* a, Node* b);     // a[n,k] * b[k,m]
    Node* matmul_nt(Node* a, Node* b);  // a[n,k] * b[m,k]^T
    Node* linear(Node* x, Node* w, Node* b);  // x*w + row-broadcast b, fused
    // Multi-head scaled dot-product attention; q is n x d, memory k/v are
    // m x d, heads are column blocks. One node for the whole operation.
    Node* attention(Node* q, Node* k, Node* v, int n_heads, std::vector<int> limits);
    Node* add(Node* a, Node* b);        // same shape
    Node* add_rowvec(Node* a, Node* b);  // b is 1 x cols, broadcast over rows
    Node* scale(Node* a, double s);
    Node* slice_cols(Node* a, int j0, int w);
    Node* slice_rows(Node* a, int i0, int h);
    Node* reshape(Node* a, int rows, int cols);  // same element count and layout
    Node* concat_cols(const std::vector<Node*>& parts);
    Node* stack_rows(const std::vector<Node*>& parts);  // each 1 x c
    Node* mean_rows(Node* a);                           // 1 x c
    Node* mean_rows_subset(Node* a, std::vector<int> rows);
    Node* layernorm(Node* x, Node* gain, Node* bias, double eps = 1e-5);
    Node* gelu(Node* x);
    // limits[i]: attend to columns [0, limits[i]); empty means full rows.
    Node* softmax_rows(Node* x, std::vector<int> limits);
    Node* dropout(Node* x, double p, uint64_t seed);  // p <= 0 returns x

    // Scalar (1x1) results.
    // Sum of -log softmax(logits[i])[target[i]] over rows with target >= 0.
    Node* cross_entropy_rows(Node* logits, std::vector<int> targets);
    // Sum over mask != 0 of (pred - target)^2; shapes all equal pred's.
    Node* squared_error_masked(Node* pred, Tensor target, Tensor mask);
    Node* add_scalars(const std::vector<Node*>& xs);

    // Token embedding: row k = type_table[row(type_k)] + index_table[pos_k]
    // + arg embedding when type_k == kArg. Continuous mode maps the scalar
    // through arg_w/arg_b; discrete mode indexes arg_table by quantize8.
    // positions == nullptr means 0..n-1.
    Node* embed_tokens(const int16_t* types, const double* args, const int* positions, int n,
                       Node* type_table, Node* index_table, Node* arg_w, Node* arg_b,
                       Node* arg_table);

    void backward(Node* root);  // root must be 1x1

  private:
    Node* make(Tensor value);
    Node* make_like(int rows, int cols);

    const ParamStore* params_;
    GradStore* sink_;
    std::vector<std::unique_ptr<Node>> nodes_;
    std::unordered_map<int, Node*> param_nodes_;
};

}  // namespace iconvec
