#include "ontrac/ttlearn.hpp"

#include <chrono>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ontrac {

std::string TrainingReport::to_csv() const {
    std::string out = "iteration,estep_log_likelihood,log_likelihood,seconds\n";
    for (std::size_t i = 0; i < log_likelihood.size(); ++i) {
        out += std::to_string(i + 1);
        out += ',';
        out += format_double(estep_log_likelihood[i]);
        out += ',';
        out += format_double(log_likelihood[i]);
        out += ',';
        out += format_double(iteration_seconds[i]);
        out += '\n';
    }
    return out;
}

std::vector<EStepResult> infer_all_serial(const TravelTimeModel& model, std::span<const Trajectory> trajs,
                                          const RoadNetwork& net, const QpOptions& opts) {
    std::vector<EStepResult> out(trajs.size());
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        try {
            out[i].times = infer_travel_times(model, trajs[i], net, opts);
            out[i].ok = true;
        } catch (const std::exception& e) {
            out[i].error = e.what();
        }
    }
    return out;
}

std::vector<EStepResult> infer_all(const TravelTimeModel& model, std::span<const Trajectory> trajs,
                                   const RoadNetwork& net, const QpOptions& opts, int workers) {
    if (workers <= 1) return infer_all_serial(model, trajs, net, opts);
    std::vector<EStepResult> out(trajs.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8) num_threads(workers)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(trajs.size()); ++i) {
        auto& slot = out[static_cast<std::size_t>(i)];
        try {
            slot.times = infer_travel_times(model, trajs[static_cast<std::size_t>(i)], net, opts);
            slot.ok = true;
        } catch (const std::exception& e) {
            slot.error = e.what();
        }
    }
    return out;
}

TravelTimeModel initial_model(const RoadNetwork& net, const TrainingConfig& config, double sigma_star, double delta) {
    if (config.iterations < 1) throw ValidationError("iterations must be >= 1");
    if (!(config.initial_speed > 0.0)) throw ValidationError("initial_speed must be positive");
    if (!(config.initial_omega_fraction > 0.0 && config.initial_omega_fraction <= 1.0))
        throw ValidationError("initial_omega_fraction must be in (0,1]");
    TravelTimeModel model;
    model.sigma_star = sigma_star;
    model.delta = delta;
    model.omega_floor = config.omega_floor;
    model.phi.resize(net.size());
    model.omega.resize(net.size());
    for (std::size_t i = 0; i < net.size(); ++i) {
        model.phi[i] = net.length(static_cast<SegmentId>(i)) / config.initial_speed;
        model.omega[i] = std::max(config.initial_omega_fraction * model.phi[i], config.omega_floor);
    }
    return model;
}

namespace {

double total_log_likelihood(const TravelTimeModel& model, std::span<const Trajectory> trajs,
                            std::span<const EStepResult> results, const RoadNetwork& net,
                            std::span<const double> lengths) {
    double total = 0.0;
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        if (!results[i].ok || results[i].times.t_prime.empty()) continue;
        BlockPartition part = make_blocks(trajs[i], net, model.sigma_star);
        total += travel_time_log_density(model, part.blocks, lengths, results[i].times.t_prime);
    }
    return total;
}

}  // namespace

std::pair<TravelTimeModel, TrainingReport> temporal_training(const RoadNetwork& net,
                                                             std::span<const Trajectory> train,
                                                             const TrainingConfig& config, double sigma_star,
                                                             double delta) {
    if (train.empty()) throw ValidationError("temporal training needs trajectories");
    TravelTimeModel model = initial_model(net, config, sigma_star, delta);
    TrainingReport report;

    std::vector<double> lengths(net.size());
    for (std::size_t i = 0; i < net.size(); ++i) lengths[i] = net.length(static_cast<SegmentId>(i));

    std::vector<char> has_data(net.size(), 0);
    for (int iter = 0; iter < config.iterations; ++iter) {
        auto t0 = std::chrono::steady_clock::now();

        auto results = infer_all(model, train, net, config.qp, config.parallelism);
        std::size_t used = 0;
        for (const auto& r : results)
            if (r.ok) ++used;
        if (used == 0) throw ValidationError("no trajectory in the training set is usable for inference");
        report.trajectories_used = used;
        report.trajectories_skipped = results.size() - used;

        const double estep_ll = total_log_likelihood(model, train, results, net, lengths);

        // m-step: per-segment sample mean and population std of the inferred
        // times, in fixed trajectory order so the result does not depend on
        // the worker count.
        std::vector<double> sum(net.size(), 0.0), sumsq(net.size(), 0.0);
        std::vector<std::uint64_t> cnt(net.size(), 0);
        for (std::size_t i = 0; i < train.size(); ++i) {
            if (!results[i].ok) continue;
            const auto& times = results[i].times;
            for (std::size_t v = 0; v < times.t_prime.size(); ++v) {
                const auto seg =
                    static_cast<std::size_t>(train[i].points[times.first_position + v].segment);
                sum[seg] += times.t_prime[v];
                sumsq[seg] += times.t_prime[v] * times.t_prime[v];
                ++cnt[seg];
            }
        }
        for (std::size_t s = 0; s < net.size(); ++s) {
            if (cnt[s] == 0) continue;  // never traversed: keep the defaults
            has_data[s] = 1;
            const double mean = sum[s] / static_cast<double>(cnt[s]);
            double var = sumsq[s] / static_cast<double>(cnt[s]) - mean * mean;
            if (var < 0.0) var = 0.0;
            model.phi[s] = std::max(mean, 1e-9);
            model.omega[s] = std::max(std::sqrt(var), config.omega_floor);
        }

        const double post_ll = total_log_likelihood(model, train, results, net, lengths);
        report.estep_log_likelihood.push_back(estep_ll);
        report.log_likelihood.push_back(post_ll);
        report.iteration_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

        if (iter > 0) {
            const double prev = report.log_likelihood[static_cast<std::size_t>(iter) - 1];
            const double rel = std::abs(post_ll - prev) / std::max(1.0, std::abs(prev));
            if (rel < config.rel_improvement_exit) break;
        }
    }

    for (char f : has_data) {
        if (f)
            ++report.segments_with_data;
        else
            ++report.segments_defaulted;
    }
    return {std::move(model), std::move(report)};
}

}  // namespace ontrac
