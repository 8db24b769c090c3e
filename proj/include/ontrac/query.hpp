#ifndef ONTRAC_QUERY_HPP
#define ONTRAC_QUERY_HPP

#include <span>

#include "ontrac/ttcomp.hpp"

namespace ontrac {

struct DecompressedTrajectory {
    std::vector<SegmentId> segments;
    std::vector<double> exit_times;
    double entry_time = 0.0;  // recovered entry time of position 0
};

/// Full reconstruction: spatial replay plus temporal recovery over the whole
/// trajectory.
DecompressedTrajectory full_decompress(const CompressedTrajectory& comp, const SpatialModel& spatial_model,
                                       const TravelTimeModel& tt_model, const RoadNetwork& net);

/// Recovered exit timeline of an uncompressed trajectory: observed timestamps
/// are kept exactly, missing ones are filled proportionally to the model
/// means between observations.
DecompressedTrajectory recovered_timeline(const Trajectory& traj, const TravelTimeModel& tt_model,
                                          const RoadNetwork& net);

/// Contiguous window of the full decompression around a query time.
struct PartialWindow {
    std::size_t first_position = 0;
    std::vector<SegmentId> segments;
    std::vector<double> exit_times;
    std::size_t entries_consulted = 0;  // compressed records examined
};

/// Reconstructs only the stretch of the trajectory needed to answer a query
/// at time t. The replay context is extended backwards through kept entries
/// until the trie admits a single reconstruction; reaching position 0 always
/// succeeds. Output equals the same window of full_decompress exactly.
/// Requires anchors with positions (store/compressor output); anchors parsed
/// from the text format fall back to full reconstruction.
PartialWindow partial_decompress(const CompressedTrajectory& comp, const SpatialModel& spatial_model,
                                 const TravelTimeModel& tt_model, const RoadNetwork& net, double t);

struct WhereResult {
    SegmentId segment = kNoSegment;
    double recovered_time = 0.0;       // recovered entry time of the segment
    std::size_t context_length = 0;    // compressed entries consulted
};

class OutOfRangeError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class NotFoundError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Segment under which t falls in a recovered timeline: the segment whose
/// recovered exit is the first one >= t (a segment owns (entry, exit]; the
/// trajectory start maps to the first segment). t outside
/// [entry_time, last exit] raises OutOfRangeError.
std::size_t locate(std::span<const double> exit_times, double entry_time, double t);

WhereResult where_query(const CompressedTrajectory& comp, const SpatialModel& spatial_model,
                        const TravelTimeModel& tt_model, const RoadNetwork& net, double t);

/// Same answer computed through full reconstruction; the benchmark baseline.
WhereResult where_query_full(const CompressedTrajectory& comp, const SpatialModel& spatial_model,
                             const TravelTimeModel& tt_model, const RoadNetwork& net, double t);

}  // namespace ontrac

#endif
