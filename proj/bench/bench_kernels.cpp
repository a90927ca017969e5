// Timing comparison of the OpenMP kernels against the serial reference, at
// the shapes the model actually runs, plus one end-to-end training step.
//
//   iconvec_bench [--repeat N]

#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <vector>

#include "iconvec/dataset.h"
#include "iconvec/kernels.h"
#include "iconvec/objective.h"
#include "iconvec/train.h"

#if defined(_OPENMP)
#include <omp.h>
#endif

using namespace iconvec;

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <typename F>
double time_ms(int repeat, F&& fn) {
    fn();  // warm up
    double t0 = now_ms();
    for (int i = 0; i < repeat; ++i) fn();
    return (now_ms() - t0) / repeat;
}

std::vector<double> rand_vec(size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

void bench_gemm(int n, int k, int m, int repeat) {
    std::mt19937_64 rng(1);
    auto A = rand_vec(size_t(n) * k, rng);
    auto B = rand_vec(size_t(k) * m, rng);
    std::vector<double> C(size_t(n) * m);
    double serial = time_ms(repeat, [&] { kern::serial::gemm_nn(A.data(), B.data(), C.data(), n, k, m); });
    double par = time_ms(repeat, [&] { kern::gemm_nn(A.data(), B.data(), C.data(), n, k, m); });
    double gflops = 2.0 * n * k * m / 1e6;
    std::printf("gemm_nn %4dx%3dx%3d  serial %8.3f ms (%6.2f GF/s)  omp %8.3f ms (%6.2f GF/s)  speedup %.2fx\n",
                n, k, m, serial, gflops / serial, par, gflops / par, serial / par);
}

void bench_rowwise(int rows, int cols, int repeat) {
    std::mt19937_64 rng(2);
    auto x = rand_vec(size_t(rows) * cols, rng);
    auto gain = rand_vec(cols, rng);
    auto bias = rand_vec(cols, rng);
    std::vector<double> y(x.size()), mean(rows), rstd(rows);
    double s_ln = time_ms(repeat, [&] {
        kern::serial::layernorm_rows(x.data(), gain.data(), bias.data(), y.data(), mean.data(),
                                     rstd.data(), rows, cols, 1e-5);
    });
    double p_ln = time_ms(repeat, [&] {
        kern::layernorm_rows(x.data(), gain.data(), bias.data(), y.data(), mean.data(),
                             rstd.data(), rows, cols, 1e-5);
    });
    auto sm = x;
    double s_sm = time_ms(repeat, [&] {
        std::memcpy(sm.data(), x.data(), x.size() * 8);
        kern::serial::softmax_rows(sm.data(), rows, cols, nullptr);
    });
    double p_sm = time_ms(repeat, [&] {
        std::memcpy(sm.data(), x.data(), x.size() * 8);
        kern::softmax_rows(sm.data(), rows, cols, nullptr);
    });
    std::printf("layernorm %4dx%3d     serial %8.3f ms              omp %8.3f ms              speedup %.2fx\n",
                rows, cols, s_ln, p_ln, s_ln / p_ln);
    std::printf("softmax   %4dx%3d     serial %8.3f ms              omp %8.3f ms              speedup %.2fx\n",
                rows, cols, s_sm, p_sm, s_sm / p_sm);
}

// One teacher-forced training step (forward + backward + optimizer) on a
// synthetic batch, comparing 1 worker against all hardware threads.
void bench_train_step(int repeat) {
    ModelConfig cfg = ModelConfig::desk();
    std::mt19937_64 rng(3);
    std::vector<TokenizedIcon> batch;
    for (int i = 0; i < 8; ++i) batch.push_back(encode_script(synth_icon(rng), cfg.limits()));

    auto run_step = [&](Model& model, std::vector<GradStore>& grads, int workers) {
#if defined(_OPENMP)
        omp_set_num_threads(workers);
#endif
#pragma omp parallel for schedule(dynamic, 1)
        for (int b = 0; b < int(batch.size()); ++b) {
            grads[b].zero();
            Tape tape(&model.params(), &grads[b]);
            Node* z = model.svg_encode(tape, batch[b]);
            Node* loss = total_loss(tape, model, batch[b], z, LossWeights{});
            tape.backward(loss);
        }
    };

#if defined(_OPENMP)
    int hw = omp_get_max_threads();
#else
    int hw = 1;
#endif
    for (int workers : {1, hw}) {
        Model model(cfg, 5);
        std::vector<GradStore> grads(batch.size());
        for (GradStore& g : grads) g.init(model.params());
        double ms = time_ms(repeat, [&] { run_step(model, grads, workers); });
        std::printf("train step (batch 8, desk config), %d worker%s: %8.2f ms\n", workers,
                    workers == 1 ? " " : "s", ms);
    }
}

}  // namespace

int main(int argc, char** argv) {
    int repeat = 20;
    for (int i = 1; i < argc - 1; ++i)
        if (std::strcmp(argv[i], "--repeat") == 0) repeat = std::atoi(argv[i + 1]);

#if defined(_OPENMP)
    std::printf("hardware threads: %d\n", omp_get_max_threads());
#endif
    bench_gemm(58, 64, 64, repeat);
    bench_gemm(58, 64, 128, repeat);
    bench_gemm(226, 256, 256, repeat);
    bench_gemm(226, 256, 512, repeat);
    bench_rowwise(226, 256, repeat);
    bench_rowwise(1024, 512, repeat);
    bench_train_step(std::max(3, repeat / 4));
    return 0;
}
