#ifndef ONTRAC_TTCOMP_HPP
#define ONTRAC_TTCOMP_HPP

#include <span>
#include <vector>

#include "ontrac/spatial.hpp"
#include "ontrac/ttqp.hpp"

namespace ontrac {

/// Kept temporal anchor: cumulative distance from the trajectory start and
/// the fused clock at that point. `position` is the update index the anchor
/// belongs to; it is implied by d but kept explicit so partial decompression
/// does not have to reconstruct the prefix to align anchors.
struct TemporalAnchor {
    std::uint32_t position = 0;
    double d = 0.0;       // meters
    double t_star = 0.0;  // seconds
};

struct CompressedTemporal {
    std::string object;
    std::vector<TemporalAnchor> kept;
};

/// Running state of the per-trajectory compression walk.
struct FusionState {
    double t_hat = 0.0;   // accumulated model mean since the last observation
    double w_hat = 0.0;   // accumulated model variance
    double d = 0.0;       // cumulative distance
    double t_star = 0.0;  // fused clock
    double tau = 0.0;     // model-predicted clock
};

/// Precision-weighted fusion of the model prediction (t_hat, w_hat) with an
/// observed gap (t_bar, sigma_sq).
double fuse(double t_hat, double w_hat, double t_bar, double sigma_sq);

/// Online temporal compression: the first observed update is always stored as
/// the anchor; a later observed update is stored only when the model clock has
/// drifted from the fused clock by more than lambda. Missing updates are never
/// stored.
CompressedTemporal temporal_compress(const TravelTimeModel& model, const Trajectory& traj, const RoadNetwork& net,
                                     double lambda);

/// Online form of temporal_compress; produces exactly the batch kept set.
class TemporalCompressor {
public:
    TemporalCompressor(const TravelTimeModel& model, const RoadNetwork& net, double lambda);
    /// Returns the anchor to store when the update is kept.
    std::optional<TemporalAnchor> feed(SegmentId segment, std::optional<double> timestamp);
    const FusionState& state() const { return state_; }

private:
    const TravelTimeModel* model_;
    const RoadNetwork* net_;
    double lambda_;
    FusionState state_;
    double last_obs_time_ = 0.0;
    double last_obs_d_ = 0.0;
    bool anchored_ = false;
    std::uint32_t position_ = 0;
};

/// Recovered exit timestamps for every position of the decompressed spatial
/// sequence. Between consecutive anchors, times are distributed proportionally
/// to the model means and rescaled so the anchors are hit exactly; beyond the
/// last anchor (and before the first) raw model means apply. start_time is
/// only used when the anchor list is empty.
std::vector<double> temporal_recover(const TravelTimeModel& model, const CompressedTemporal& comp,
                                     std::span<const SegmentId> spatial, const RoadNetwork& net, double start_time);

/// Recovery core over window-relative positions; partial decompression calls
/// it on a sub-window with the same per-position model means so both paths
/// produce identical doubles.
std::vector<double> recover_exit_times(std::span<const double> phi_per_position,
                                       std::span<const std::size_t> anchor_positions,
                                       std::span<const double> anchor_times, double start_time);

/// Full compressed form of one trajectory: both components plus what is
/// needed to invert them.
struct CompressedTrajectory {
    std::string object;
    CompressedSpatial spatial;
    CompressedTemporal temporal;
    std::uint32_t original_length = 0;
    double start_time = 0.0;  // recovered entry time of position 0
    bool has_start_time = false;
};

CompressedTrajectory compress_trajectory(const SpatialModel& spatial_model, const TravelTimeModel& tt_model,
                                         const Trajectory& traj, const RoadNetwork& net, double lambda);

/// Text form, per object: S records (kept spatial), T records (kept temporal)
/// and one L record carrying the original length.
std::string serialize_compressed(std::span<const CompressedTrajectory> trajs, const RoadNetwork& net);
std::vector<CompressedTrajectory> parse_compressed(std::string_view source, const RoadNetwork& net);

}  // namespace ontrac

#endif
