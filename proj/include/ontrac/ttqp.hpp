#ifndef ONTRAC_TTQP_HPP
#define ONTRAC_TTQP_HPP

#include <span>
#include <vector>

#include "ontrac/trajmodel.hpp"

namespace ontrac {

/// Per-segment Gaussian travel-time model plus the trajectory-level smoothness
/// and GPS-error parameters. Immutable during inference and compression.
struct TravelTimeModel {
    std::vector<double> phi;    // mean travel time per segment, seconds
    std::vector<double> omega;  // travel-time std per segment, seconds
    double delta = 1.0;         // speed-smoothness std between adjacent segments, s/m
    double sigma_star = 5.0;    // GPS spatial error, meters
    double omega_floor = 1e-3;  // seconds

    void validate(std::size_t n_segments) const;
};

/// Run of segments between two consecutive observed timestamps. The total
/// traversal time of the run is observed as `observed_gap` with temporal
/// error std `sigma`.
struct GpsBlock {
    std::vector<SegmentId> segments;
    double observed_gap = 0.0;  // seconds
    double sigma = 0.0;         // seconds
};

/// Temporal error of a GPS gap: sigma_star * elapsed / path_length.
double gps_temporal_error(double sigma_star, double elapsed, double path_length);

struct QPInstance {
    std::size_t n = 0;
    std::vector<double> Q;  // dense, row-major, symmetric
    std::vector<double> c;
    struct Var {
        std::size_t block = 0;
        std::size_t index_in_block = 0;
        SegmentId segment = kNoSegment;
    };
    std::vector<Var> variable_map;

    double& q(std::size_t i, std::size_t j) { return Q[i * n + j]; }
    double q(std::size_t i, std::size_t j) const { return Q[i * n + j]; }
    double objective(std::span<const double> x) const;
};

/// Assembles min (1/2) x'Qx + c'x over x >= 0 so that the objective equals
/// -log P(x) up to a constant, where P multiplies, per the generative model:
///   - one travel-time Gaussian N(phi_i, omega_i^2) per traversed segment,
///   - one smoothness Gaussian on per-meter rates of every adjacent segment
///     pair (block boundaries included) with std delta,
///   - one Gaussian per block tying the block's time sum to observed_gap
///     with std sigma_j.
QPInstance build_qp(const TravelTimeModel& model, std::span<const GpsBlock> blocks,
                    std::span<const double> lengths);

/// Full log-density of a travel-time assignment under the same three model
/// components (normalization terms included). Used for the EM likelihood
/// trace; the QP objective equals its negation up to the x-independent terms.
double travel_time_log_density(const TravelTimeModel& model, std::span<const GpsBlock> blocks,
                               std::span<const double> lengths, std::span<const double> x);

struct InferredTimes {
    std::vector<double> t_prime;   // per inferred position, seconds, >= 0
    std::vector<double> absolute;  // recovered exit timestamps, running sums from the anchor
    std::size_t first_position = 0;  // index into Trajectory::points of t_prime[0]
    double anchor_time = 0.0;
    double objective = 0.0;  // attained QP objective
};

/// Raised when the solver hits max_iter before meeting tol; carries the best
/// iterate so callers can inspect how close it got.
class QpConvergenceError : public std::runtime_error {
public:
    QpConvergenceError(std::vector<double> best, double residual, std::size_t iterations);
    const std::vector<double>& best() const { return best_; }
    double residual() const { return residual_; }

private:
    std::vector<double> best_;
    double residual_;
};

struct QpOptions {
    double tol = 1e-8;          // KKT residual target
    std::size_t max_iter = 50000;  // coordinate-descent sweeps
};

/// Projected cyclic coordinate descent: each step minimizes the objective
/// exactly along one coordinate and clips at zero, so the objective never
/// increases. Verifies positive definiteness (Cholesky) up front. Returns the
/// first x whose KKT residual is below tol: for every i, either x_i > 0 and
/// |(Qx+c)_i| <= tol, or x_i = 0 and (Qx+c)_i >= -tol.
std::vector<double> solve_qp(const QPInstance& qp, const QpOptions& opts = {});

/// Splits a trajectory into GPS blocks anchored at its start time when set,
/// else at its first observed update. Positions covered by the blocks are
/// exactly those after the anchor; the last update must be observed.
struct BlockPartition {
    std::vector<GpsBlock> blocks;
    std::size_t first_position = 0;  // first inferred position
    double anchor_time = 0.0;
};
BlockPartition make_blocks(const Trajectory& traj, const RoadNetwork& net, double sigma_star);

/// Maximum-likelihood travel times for every position after the anchor, with
/// absolute timestamps recovered as running sums.
InferredTimes infer_travel_times(const TravelTimeModel& model, const Trajectory& traj, const RoadNetwork& net,
                                 const QpOptions& opts = {});

/// Smoothness estimate: population std of the change in per-meter rate
/// between consecutive GPS spans under constant-speed interpolation.
double estimate_delta(std::span<const Trajectory> train, const RoadNetwork& net, double floor = 1e-3);

std::string serialize_tt_model(const TravelTimeModel& model, const RoadNetwork& net);
TravelTimeModel parse_tt_model(std::string_view source, const RoadNetwork& net);

}  // namespace ontrac

#endif
