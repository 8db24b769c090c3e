#ifndef ONTRAC_TTLEARN_HPP
#define ONTRAC_TTLEARN_HPP

#include <span>
#include <string>
#include <vector>

#include "ontrac/ttqp.hpp"

namespace ontrac {

struct TrainingConfig {
    int iterations = 5;               // q
    double initial_speed = 15.0;      // m/s, Phi^0 = length / initial_speed
    double initial_omega_fraction = 0.5;
    double omega_floor = 1e-3;        // seconds
    int parallelism = 1;              // e-step worker hint
    double rel_improvement_exit = 1e-6;
    QpOptions qp;
};

struct TrainingReport {
    /// Post-m-step total log-likelihood per iteration (the monotone sequence).
    std::vector<double> log_likelihood;
    /// Same trajectories and inferred times, evaluated under the pre-m-step
    /// model. log_likelihood[i] >= estep_log_likelihood[i] always.
    std::vector<double> estep_log_likelihood;
    std::vector<double> iteration_seconds;
    std::size_t segments_with_data = 0;
    std::size_t segments_defaulted = 0;
    std::size_t trajectories_used = 0;
    std::size_t trajectories_skipped = 0;

    std::string to_csv() const;
};

/// Result of inferring one trajectory in the batch e-step. Trajectories whose
/// inference fails (e.g. missing endpoint timestamps) are skipped, not fatal.
struct EStepResult {
    bool ok = false;
    std::string error;
    InferredTimes times;
};

/// Data-parallel e-step: one QP per trajectory against an immutable model
/// snapshot. The serial variant is the reference the OpenMP variant must
/// match bit for bit (results land in per-trajectory slots; aggregation order
/// is fixed by the caller).
std::vector<EStepResult> infer_all_serial(const TravelTimeModel& model, std::span<const Trajectory> trajs,
                                          const RoadNetwork& net, const QpOptions& opts);
std::vector<EStepResult> infer_all(const TravelTimeModel& model, std::span<const Trajectory> trajs,
                                   const RoadNetwork& net, const QpOptions& opts, int workers);

TravelTimeModel initial_model(const RoadNetwork& net, const TrainingConfig& config, double sigma_star, double delta);

/// Alternates QP inference over all training trajectories with per-segment
/// mean/std re-estimation. The reported log-likelihood sequence is
/// non-decreasing (up to solver tolerance and the omega floor).
std::pair<TravelTimeModel, TrainingReport> temporal_training(const RoadNetwork& net,
                                                             std::span<const Trajectory> train,
                                                             const TrainingConfig& config, double sigma_star,
                                                             double delta);

}  // namespace ontrac

#endif
