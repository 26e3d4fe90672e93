// Benchmark comparing the OpenMP kernels against their serial references.
// Build target: bca_bench. `--quick` shrinks problem sizes for smoke runs.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include <omp.h>

#include "bca/mesh.hpp"
#include "bca/procgen.hpp"
#include "bca/rng.hpp"
#include "bca/scan_sim.hpp"
#include "bca/trainer.hpp"
#include "bca/volume.hpp"

using namespace bca;
using clk = std::chrono::steady_clock;

namespace {

template <typename F>
double time_ms(F&& f, int reps) {
    // One warmup, then best of `reps`.
    f();
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = clk::now();
        f();
        const auto t1 = clk::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

void row(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-22s %10.1f ms %10.1f ms %8.2fx\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms);
}

}  // namespace

int main(int argc, char** argv) {
    bool quick = false;
    for (int i = 1; i < argc; ++i)
        if (std::strcmp(argv[i], "--quick") == 0) quick = true;

    const double spacing = quick ? 4.0 : 2.0;
    const int reps = quick ? 1 : 3;
    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-22s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

    const BodySpec spec = sample_body(7, ProcgenRanges{});

    LabelVolume vol;
    row("rasterize",
        time_ms([&] { vol = ref::rasterize(spec, spacing); }, reps),
        time_ms([&] { vol = rasterize(spec, spacing); }, reps));

    BinaryMask mask;
    row("body_mask + fill",
        time_ms([&] { mask = ref::fill_cavities(ref::body_mask(vol)); }, reps),
        time_ms([&] { mask = fill_cavities(body_mask(vol)); }, reps));

    row("tissue_volumes",
        time_ms([&] { (void)ref::tissue_volumes(vol); }, reps),
        time_ms([&] { (void)tissue_volumes(vol); }, reps));

    TriMesh mesh;
    row("marching_cubes",
        time_ms([&] { mesh = ref::marching_cubes(mask, 0.5); }, reps),
        time_ms([&] { mesh = marching_cubes(mask, 0.5); }, reps));

    TriMesh smooth;
    row("laplacian_smooth x10",
        time_ms([&] { smooth = ref::laplacian_smooth(mesh, 0.5, 10); }, reps),
        time_ms([&] { smooth = laplacian_smooth(mesh, 0.5, 10); }, reps));

    const std::size_t nsamp = quick ? 100000 : 800000;
    OrientedPointCloud dense;
    row("sample_surface",
        time_ms([&] { dense = ref::sample_surface(smooth, nsamp, 3); }, reps),
        time_ms([&] { dense = sample_surface(smooth, nsamp, 3); }, reps));

    ScanConfig sc;
    row("augment",
        time_ms([&] { (void)ref::augment(dense, sc, 5); }, reps),
        time_ms([&] { (void)augment(dense, sc, 5); }, reps));

    row("illumination_filter",
        time_ms([&] { (void)ref::illumination_filter(dense, sc.panel_axis, 0.7); }, reps),
        time_ms([&] { (void)illumination_filter(dense, sc.panel_axis, 0.7); }, reps));

    // Batch forward/backward at desk-scale network dimensions.
    NetConfig net;
    net.enc_hidden1 = 32;
    net.enc_hidden2 = 64;
    net.feature_dim = 128;
    Model model(net, default_heads());
    model.init_params(1);
    LossConfig lc;
    Rng rng(2);
    const int batch_n = quick ? 4 : 12;
    const int pts_n = quick ? 512 : 2048;
    std::vector<std::vector<Vec3>> clouds(batch_n);
    std::vector<BatchSample> batch;
    std::vector<MaskedTargetVector> targets(batch_n);
    for (int i = 0; i < batch_n; ++i) {
        for (int k = 0; k < pts_n; ++k)
            clouds[i].push_back({rng.uniform(-300, 300), rng.uniform(-150, 150),
                                 rng.uniform(0, 1700)});
        targets[i].mask.fill(1);
        for (int j = 0; j < 10; ++j) targets[i].y[j] = rng.uniform(-1, 1);
        batch.push_back({&clouds[i], targets[i], static_cast<std::uint64_t>(i)});
    }
    const std::vector<double> w = {1.0, 1.0, 1.0};
    row("batch_grad (train)",
        time_ms([&] { (void)ref::batch_forward_backward(model, batch, w, lc, true, true); },
                reps),
        time_ms([&] { (void)batch_forward_backward(model, batch, w, lc, true, true, true); },
                reps));
    return 0;
}
