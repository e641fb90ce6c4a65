#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "drq/kernels.hpp"
#include "drq/ref_kernels.hpp"
#include "drq/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<float> random_vec(size_t n, drq::Rng& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return v;
}

struct Shape {
    int rows, in, out;
};

// Times one (impl, kernel, shape) combination and returns GFLOP/s.
template <typename F>
double time_gflops(F&& body, double flops_per_call, int reps) {
    body(); // warm-up, also first-touch
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) body();
    const double dt = seconds_since(t0);
    return flops_per_call * reps / dt / 1e9;
}

float max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    float worst = 0.0f;
    for (size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dense-kernel benchmark: OpenMP build vs serial reference"};
    int reps = 20;
    int batch = 256;
    app.add_option("--reps", reps, "timed repetitions per kernel");
    app.add_option("--batch", batch, "batch size (rows)");
    CLI11_PARSE(app, argc, argv);

    drq::Rng rng(7);
    const std::vector<Shape> shapes = {
        {batch, 4, 750}, {batch, 750, 512}, {batch, 768, 750}, {batch, 512, 577},
        {batch, 512, 512}, {batch, 64, 128}, {batch, 128, 64},
    };

    std::printf("%-22s %8s %10s %10s %8s %10s\n", "kernel", "shape", "omp GF/s",
                "ref GF/s", "speedup", "max|diff|");

    for (const auto& sh : shapes) {
        const size_t xn = static_cast<size_t>(sh.rows) * sh.in;
        const size_t wn = static_cast<size_t>(sh.in) * sh.out;
        const size_t yn = static_cast<size_t>(sh.rows) * sh.out;
        const auto x = random_vec(xn, rng);
        const auto w = random_vec(wn, rng);
        const double flops = 2.0 * sh.rows * sh.in * sh.out;

        std::vector<float> y_omp(yn), y_ref(yn);
        const double gf_omp = time_gflops(
            [&] {
                std::fill(y_omp.begin(), y_omp.end(), 0.0f);
                drq::kernels::gemm_acc(x.data(), static_cast<size_t>(sh.in), size_t(1),
                                       w.data(), y_omp.data(), sh.rows, sh.in, sh.out);
            },
            flops, reps);
        const double gf_ref = time_gflops(
            [&] {
                std::fill(y_ref.begin(), y_ref.end(), 0.0f);
                drq::ref_kernels::gemm_acc(x.data(), static_cast<size_t>(sh.in),
                                           size_t(1), w.data(), y_ref.data(), sh.rows,
                                           sh.in, sh.out);
            },
            flops, reps);
        char shape_str[32];
        std::snprintf(shape_str, sizeof(shape_str), "%dx%dx%d", sh.rows, sh.in, sh.out);
        std::printf("%-22s %8s %10.2f %10.2f %8.2f %10.3g\n", "gemm_acc (forward)",
                    shape_str, gf_omp, gf_ref, gf_omp / gf_ref,
                    max_abs_diff(y_omp, y_ref));

        const auto dy = random_vec(yn, rng);
        std::vector<float> dx_omp(xn), dx_ref(xn);
        const double gnt_omp = time_gflops(
            [&] {
                std::fill(dx_omp.begin(), dx_omp.end(), 0.0f);
                drq::kernels::gemm_nt_acc(dy.data(), w.data(), dx_omp.data(), sh.rows,
                                          sh.in, sh.out);
            },
            flops, reps);
        const double gnt_ref = time_gflops(
            [&] {
                std::fill(dx_ref.begin(), dx_ref.end(), 0.0f);
                drq::ref_kernels::gemm_nt_acc(dy.data(), w.data(), dx_ref.data(),
                                              sh.rows, sh.in, sh.out);
            },
            flops, reps);
        std::printf("%-22s %8s %10.2f %10.2f %8.2f %10.3g\n", "gemm_nt_acc (dx)",
                    shape_str, gnt_omp, gnt_ref, gnt_omp / gnt_ref,
                    max_abs_diff(dx_omp, dx_ref));

        // dW += x^T dy reuses gemm_acc with strided a access.
        std::vector<float> dw_omp(wn), dw_ref(wn);
        const double gw_omp = time_gflops(
            [&] {
                std::fill(dw_omp.begin(), dw_omp.end(), 0.0f);
                drq::kernels::gemm_acc(x.data(), size_t(1),
                                       static_cast<size_t>(sh.in), dy.data(),
                                       dw_omp.data(), sh.in, sh.rows, sh.out);
            },
            flops, reps);
        const double gw_ref = time_gflops(
            [&] {
                std::fill(dw_ref.begin(), dw_ref.end(), 0.0f);
                drq::ref_kernels::gemm_acc(x.data(), size_t(1),
                                           static_cast<size_t>(sh.in), dy.data(),
                                           dw_ref.data(), sh.in, sh.rows, sh.out);
            },
            flops, reps);
        std::printf("%-22s %8s %10.2f %10.2f %8.2f %10.3g\n", "gemm_acc (dW)",
                    shape_str, gw_omp, gw_ref, gw_omp / gw_ref,
                    max_abs_diff(dw_omp, dw_ref));
    }

    // Elementwise kernels at one representative size.
    const size_t n = static_cast<size_t>(batch) * 750;
    const auto x = random_vec(n, rng);
    const auto dy = random_vec(n, rng);
    std::vector<float> y_omp(n), y_ref(n), dx_omp(n), dx_ref(n);
    const double act_flops = 2.0 * static_cast<double>(n);

    const double a_omp = time_gflops(
        [&] { drq::kernels::act_forward(drq::Act::ELU, x.data(), y_omp.data(), n); },
        act_flops, reps * 10);
    const double a_ref = time_gflops(
        [&] {
            drq::ref_kernels::act_forward(drq::Act::ELU, x.data(), y_ref.data(), n);
        },
        act_flops, reps * 10);
    std::printf("%-22s %8zu %10.2f %10.2f %8.2f %10.3g\n", "act_forward (ELU)", n,
                a_omp, a_ref, a_omp / a_ref, max_abs_diff(y_omp, y_ref));

    const double b_omp = time_gflops(
        [&] {
            std::fill(dx_omp.begin(), dx_omp.end(), 0.0f);
            drq::kernels::act_backward(drq::Act::ELU, x.data(), y_omp.data(), dy.data(),
                                       dx_omp.data(), n);
        },
        act_flops, reps * 10);
    const double b_ref = time_gflops(
        [&] {
            std::fill(dx_ref.begin(), dx_ref.end(), 0.0f);
            drq::ref_kernels::act_backward(drq::Act::ELU, x.data(), y_ref.data(),
                                           dy.data(), dx_ref.data(), n);
        },
        act_flops, reps * 10);
    std::printf("%-22s %8zu %10.2f %10.2f %8.2f %10.3g\n", "act_backward (ELU)", n,
                b_omp, b_ref, b_omp / b_ref, max_abs_diff(dx_omp, dx_ref));

    return 0;
}
