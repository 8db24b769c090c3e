#ifndef ONTRAC_SYNTH_HPP
#define ONTRAC_SYNTH_HPP

#include <cstdint>
#include <span>

#include "ontrac/trajmodel.hpp"

namespace ontrac {

/// Grid of rows x cols blocks: one segment per street, traversable in both
/// directions; two segments are adjacent iff they share an intersection.
/// Segments are named s_X_Y by the doubled coordinates of their midpoint, so
/// the 2x2 grid reproduces the 12-segment running-example network.
RoadNetwork make_grid_network(std::size_t rows, std::size_t cols, double segment_length);

enum class SynthMode { RandomWalk, ShortestPath };

struct SynthConfig {
    SynthMode mode = SynthMode::RandomWalk;
    std::size_t n_trajectories = 100;
    std::size_t walk_length = 20;   // updates per trajectory (random-walk mode)
    double speed_mean = 15.0;       // m/s
    double speed_std = 10.0;        // m/s; draws are truncated below at 1 m/s
    double alpha = 1.0;             // destination-popularity exponential rate
    std::size_t legs = 1;           // shortest-path trips per trajectory, chained
    double gps_interval = 0.0;      // seconds between retained timestamps; 0 keeps all
    std::uint64_t seed = 1;
};

/// Exact per-segment times for every generated trajectory, kept for
/// oracle-based testing alongside the sparsified stream.
struct GroundTruthTrajectory {
    std::string object;
    double start_time = 0.0;
    std::vector<SegmentId> segments;
    std::vector<double> exit_times;  // absolute, one per segment
};

struct SynthResult {
    TrajectoryStream stream;
    std::vector<GroundTruthTrajectory> truth;
};

/// Uniform random walks over the successor lists; dead ends teleport
/// uniformly. Trajectory i starts at a staggered offset so the emitted stream
/// interleaves objects.
SynthResult gen_random_walk(const RoadNetwork& net, const SynthConfig& config);

/// Length-weighted shortest paths from a uniform start to a destination drawn
/// with probability proportional to alpha * exp(-alpha * rank), rank being
/// the destination's position in a seeded random permutation of segments.
/// With legs > 1 each trajectory chains that many trips end to end. The
/// ranking is derived from the seed, so train/test folds that must share the
/// popularity structure should be split out of a single generated stream.
SynthResult gen_shortest_path(const RoadNetwork& net, const SynthConfig& config);

SynthResult generate(const RoadNetwork& net, const SynthConfig& config);

std::string serialize_ground_truth(std::span<const GroundTruthTrajectory> truth, const RoadNetwork& net);

}  // namespace ontrac

#endif
