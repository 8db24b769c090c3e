// Compares the serial reference kernels against their OpenMP variants on a
// synthetic workload: the EM e-step (one QP per trajectory) and batch spatial
// compression. The parallel results must match the serial ones exactly; the
// table reports wall time and speedup per worker count.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ontrac/spatial.hpp"
#include "ontrac/synth.hpp"
#include "ontrac/ttlearn.hpp"

using namespace ontrac;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
    std::size_t n_trajectories = 400;
    std::size_t walk_length = 60;
    int max_workers = 0;
    for (int i = 1; i + 1 < argc; i += 2) {
        std::string flag = argv[i];
        if (flag == "--n") n_trajectories = static_cast<std::size_t>(std::atoll(argv[i + 1]));
        else if (flag == "--walk-length") walk_length = static_cast<std::size_t>(std::atoll(argv[i + 1]));
        else if (flag == "--max-workers") max_workers = std::atoi(argv[i + 1]);
        else {
            std::fprintf(stderr, "usage: parbench [--n N] [--walk-length L] [--max-workers W]\n");
            return 2;
        }
    }
    if (max_workers <= 0) {
#ifdef _OPENMP
        max_workers = omp_get_max_threads();
#else
        max_workers = 1;
#endif
    }

    RoadNetwork net = make_grid_network(10, 10, 150.0);
    SynthConfig cfg;
    cfg.mode = SynthMode::RandomWalk;
    cfg.n_trajectories = n_trajectories;
    cfg.walk_length = walk_length;
    cfg.speed_std = 3.0;
    cfg.gps_interval = 45.0;
    cfg.seed = 1234;
    auto data = gen_random_walk(net, cfg);
    auto trajs = group_by_object(data.stream);

    TrainingConfig tcfg;
    TravelTimeModel model = initial_model(net, tcfg, 5.0, 0.5);
    SpatialModel sm = spatial_training(net, trajs, 2);

    std::printf("kernel,workers,seconds,speedup,matches_serial\n");

    auto t0 = std::chrono::steady_clock::now();
    auto estep_ref = infer_all_serial(model, trajs, net, QpOptions{});
    const double estep_serial = seconds_since(t0);
    std::printf("estep,1,%.4f,1.00,yes\n", estep_serial);

    t0 = std::chrono::steady_clock::now();
    auto comp_ref = compress_all_serial(sm, trajs);
    const double comp_serial = seconds_since(t0);
    std::printf("spatial_compress,1,%.4f,1.00,yes\n", comp_serial);

    for (int workers = 2; workers <= max_workers; ++workers) {
        t0 = std::chrono::steady_clock::now();
        auto estep = infer_all(model, trajs, net, QpOptions{}, workers);
        const double estep_par = seconds_since(t0);
        bool ok = estep.size() == estep_ref.size();
        for (std::size_t i = 0; ok && i < estep.size(); ++i)
            ok = estep[i].ok == estep_ref[i].ok && estep[i].times.t_prime == estep_ref[i].times.t_prime;
        std::printf("estep,%d,%.4f,%.2f,%s\n", workers, estep_par, estep_serial / estep_par, ok ? "yes" : "NO");

        t0 = std::chrono::steady_clock::now();
        auto comp = compress_all(sm, trajs, workers);
        const double comp_par = seconds_since(t0);
        bool comp_ok = comp.size() == comp_ref.size();
        for (std::size_t i = 0; comp_ok && i < comp.size(); ++i) comp_ok = comp[i].kept == comp_ref[i].kept;
        std::printf("spatial_compress,%d,%.4f,%.2f,%s\n", workers, comp_par, comp_serial / comp_par,
                    comp_ok ? "yes" : "NO");
        if (!ok || !comp_ok) return 1;
    }
    return 0;
}
