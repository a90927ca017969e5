#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "iconvec/nn.h"
#include "iconvec/tape.h"
#include "iconvec/tokenizer.h"

using namespace iconvec;

namespace {

Tensor rand_tensor(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
    Tensor t(r, c);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (double& x : t.a) x = u(rng);
    return t;
}

// Checks analytic gradients of a scalar-valued graph against central
// differences over every parameter coordinate.
void check_grads(ParamStore& params, const std::function<Node*(Tape&)>& build,
                 double tol = 1e-6) {
    GradStore sink;
    sink.init(params);
    double base;
    {
        Tape t(&params, &sink);
        Node* loss = build(t);
        base = loss->scalar();
        t.backward(loss);
    }
    CHECK(std::isfinite(base));
    const double h = 1e-6;
    for (int id = 0; id < params.count(); ++id) {
        Tensor& value = params.value(id);
        for (size_t j = 0; j < value.size(); ++j) {
            double keep = value.a[j];
            value.a[j] = keep + h;
            double fp, fm;
            {
                Tape t(&params);
                fp = build(t)->scalar();
            }
            value.a[j] = keep - h;
            {
                Tape t(&params);
                fm = build(t)->scalar();
            }
            value.a[j] = keep;
            double numeric = (fp - fm) / (2 * h);
            double analytic = sink.grads[id].a[j];
            double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
            CHECK_MESSAGE(std::abs(numeric - analytic) / denom < tol,
                          params.name(id) << "[" << j << "]: analytic " << analytic
                                          << " numeric " << numeric);
        }
    }
}

}  // namespace

TEST_SUITE("tape") {

TEST_CASE("matmul chain gradients") {
    std::mt19937_64 rng(1);
    ParamStore params;
    int a = params.add("a", rand_tensor(3, 4, rng), "g");
    int b = params.add("b", rand_tensor(4, 5, rng), "g");
    int c = params.add("c", rand_tensor(3, 5, rng), "g");
    check_grads(params, [&](Tape& t) {
        Node* prod = t.matmul(t.param(a), t.param(b));
        Node* sum = t.add(prod, t.param(c));
        Tensor target(3, 5), mask(3, 5);
        for (double& x : mask.a) x = 1.0;
        return t.squared_error_masked(sum, std::move(target), std::move(mask));
    });
}

TEST_CASE("matmul_nt, scale, slice and concat gradients") {
    std::mt19937_64 rng(2);
    ParamStore params;
    int a = params.add("a", rand_tensor(4, 6, rng), "g");
    int b = params.add("b", rand_tensor(3, 6, rng), "g");
    check_grads(params, [&](Tape& t) {
        Node* s = t.scale(t.matmul_nt(t.param(a), t.param(b)), 0.7);  // 4x3
        Node* left = t.slice_cols(s, 0, 2);
        Node* right = t.slice_cols(s, 2, 1);
        Node* joined = t.concat_cols({right, left});  // 4x3 reshuffled
        Node* rows = t.slice_rows(joined, 1, 2);
        Tensor target(2, 3), mask(2, 3);
        for (double& x : mask.a) x = 1.0;
        target.at(0, 0) = 0.3;
        return t.squared_error_masked(rows, std::move(target), std::move(mask));
    });
}

TEST_CASE("layernorm, gelu, add_rowvec, mean gradients") {
    std::mt19937_64 rng(3);
    ParamStore params;
    int x = params.add("x", rand_tensor(5, 8, rng), "g");
    int gain = params.add("gain", rand_tensor(1, 8, rng, 0.5), "g");
    int bias = params.add("bias", rand_tensor(1, 8, rng, 0.5), "g");
    check_grads(params, [&](Tape& t) {
        Node* n = t.layernorm(t.param(x), t.param(gain), t.param(bias));
        Node* g = t.gelu(n);
        Node* shifted = t.add_rowvec(g, t.param(bias));
        Node* pooled = t.mean_rows_subset(shifted, {0, 2, 4});
        Tensor target(1, 8), mask(1, 8);
        for (double& v : mask.a) v = 1.0;
        return t.squared_error_masked(pooled, std::move(target), std::move(mask));
    });
}

TEST_CASE("softmax with causal limits and cross entropy gradients") {
    std::mt19937_64 rng(4);
    ParamStore params;
    int x = params.add("x", rand_tensor(5, 5, rng), "g");
    SUBCASE("softmax composed into a quadratic") {
        check_grads(params, [&](Tape& t) {
            std::vector<int> limits{1, 2, 3, 4, 5};
            Node* sm = t.softmax_rows(t.param(x), limits);
            Tensor target(5, 5), mask(5, 5);
            for (double& v : mask.a) v = 1.0;
            return t.squared_error_masked(sm, std::move(target), std::move(mask));
        });
    }
    SUBCASE("cross entropy with ignored rows") {
        check_grads(params, [&](Tape& t) {
            return t.cross_entropy_rows(t.param(x), {0, -1, 3, -1, 1});
        });
    }
}

TEST_CASE("stack_rows and reshape gradients") {
    std::mt19937_64 rng(5);
    ParamStore params;
    int a = params.add("a", rand_tensor(1, 6, rng), "g");
    int b = params.add("b", rand_tensor(1, 6, rng), "g");
    check_grads(params, [&](Tape& t) {
        Node* stacked = t.stack_rows({t.param(a), t.param(b), t.param(a)});
        Node* wide = t.reshape(stacked, 2, 9);
        return t.cross_entropy_rows(wide, {4, 7});
    });
}

TEST_CASE("embed_tokens gradients in both argument modes") {
    std::mt19937_64 rng(6);
    const int d = 6;
    std::vector<int16_t> types{kSOS, kTokM, kArg, kArg, kPad, kEOS};
    std::vector<double> args{-1, -1, 0.25, 0.8, -1, -1};

    SUBCASE("continuous") {
        ParamStore params;
        int tt = params.add("type", rand_tensor(kTokenTypes + 1, d, rng), "g");
        int it = params.add("index", rand_tensor(8, d, rng), "g");
        int aw = params.add("aw", rand_tensor(1, d, rng), "g");
        int ab = params.add("ab", rand_tensor(1, d, rng), "g");
        check_grads(params, [&](Tape& t) {
            Node* e = t.embed_tokens(types.data(), args.data(), nullptr, 6, t.param(tt),
                                     t.param(it), t.param(aw), t.param(ab), nullptr);
            Tensor target(6, d), mask(6, d);
            for (double& v : mask.a) v = 1.0;
            return t.squared_error_masked(e, std::move(target), std::move(mask));
        });
    }
    SUBCASE("discrete") {
        ParamStore params;
        int tt = params.add("type", rand_tensor(kTokenTypes + 1, d, rng), "g");
        int it = params.add("index", rand_tensor(8, d, rng), "g");
        int at = params.add("at", rand_tensor(256, d, rng), "g");
        GradStore sink;
        sink.init(params);
        Tape t(&params, &sink);
        Node* e = t.embed_tokens(types.data(), args.data(), nullptr, 6, t.param(tt), t.param(it),
                                 nullptr, nullptr, t.param(at));
        Tensor target(6, d), mask(6, d);
        for (double& v : mask.a) v = 1.0;
        Node* loss = t.squared_error_masked(e, std::move(target), std::move(mask));
        t.backward(loss);
        // Rows 64 (=quantize8(0.25)) and 204 (=quantize8(0.8)) receive
        // gradient; everything else stays zero.
        const Tensor& g = sink.grads[at];
        for (int r = 0; r < 256; ++r) {
            double s = 0;
            for (int j = 0; j < d; ++j) s += std::abs(g.at(r, j));
            if (r == quantize8(0.25) || r == quantize8(0.8))
                CHECK(s > 0);
            else
                CHECK(s == 0);
        }
    }
}

TEST_CASE("full attention block gradients") {
    std::mt19937_64 rng(7);
    ParamStore params;
    std::mt19937_64 init_rng(11);
    nn::Builder builder(params, init_rng);
    nn::BlockIds blk = builder.block("blk", 8, 16, true, "g");
    int x = params.add("x", rand_tensor(4, 8, rng, 0.5), "g");
    int mem = params.add("mem", rand_tensor(1, 8, rng, 0.5), "g");
    check_grads(
        params,
        [&](Tape& t) {
            Node* out = nn::transformer_block(t, t.param(x), t.param(mem), blk, 2,
                                              nn::Mask::causal, {});
            return t.cross_entropy_rows(out, {1, 5, -1, 3});
        },
        5e-6);
}

TEST_CASE("dropout is deterministic per seed and scales by 1/keep") {
    std::mt19937_64 rng(8);
    ParamStore params;
    int x = params.add("x", rand_tensor(10, 10, rng), "g");
    GradStore sink;
    sink.init(params);
    Tape t1(&params, &sink);
    Node* a = t1.dropout(t1.param(x), 0.5, 42);
    Tape t2(&params, &sink);
    Node* b = t2.dropout(t2.param(x), 0.5, 42);
    CHECK(a->v->a == b->v->a);

    int zeros = 0;
    for (size_t i = 0; i < a->v->size(); ++i) {
        if (a->v->a[i] == 0.0) ++zeros;
        else CHECK(a->v->a[i] == doctest::Approx(params.value(x).a[i] * 2.0));
    }
    CHECK(zeros > 20);
    CHECK(zeros < 80);

    Tape t3(&params, &sink);
    CHECK(t3.dropout(t3.param(x), 0.0, 1)->v->a == params.value(x).a);
}

TEST_CASE("backward accumulates parameter gradients into the sink") {
    ParamStore params;
    Tensor w(1, 1);
    w.a[0] = 3.0;
    int id = params.add("w", std::move(w), "g");
    GradStore sink;
    sink.init(params);
    Tape t(&params, &sink);
    // loss = (2w)^2 => dloss/dw = 8w = 24.
    Node* two_w = t.scale(t.param(id), 2.0);
    Tensor target(1, 1), mask(1, 1);
    mask.a[0] = 1.0;
    Node* loss = t.squared_error_masked(two_w, std::move(target), std::move(mask));
    t.backward(loss);
    CHECK(sink.grads[id].a[0] == doctest::Approx(24.0));
}

}  // TEST_SUITE
