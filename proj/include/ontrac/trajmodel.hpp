#ifndef ONTRAC_TRAJMODEL_HPP
#define ONTRAC_TRAJMODEL_HPP

#include <optional>
#include <string>
#include <vector>

#include "ontrac/roadnet.hpp"

namespace ontrac {

/// One stream record: object o passed segment s, finishing it at the given
/// time (exit-time semantics). Timestamps are seconds since the stream epoch;
/// a missing timestamp means the GPS did not report while on this segment.
struct Update {
    std::string object;
    SegmentId segment = kNoSegment;
    std::optional<double> timestamp;
};

struct TrajectoryPoint {
    SegmentId segment = kNoSegment;
    std::optional<double> timestamp;
};

struct Trajectory {
    std::string object;
    std::vector<TrajectoryPoint> points;
    /// Entry time of the first segment, when known (the running example fixes
    /// it; parsed streams normally leave it unset).
    std::optional<double> start_time;

    std::size_t size() const { return points.size(); }
};

struct TrajectoryStream {
    std::vector<Update> updates;

    std::size_t size() const { return updates.size(); }
    bool empty() const { return updates.empty(); }
};

/// Parses the stream format, one update per line:
///   object_id,segment_name,timestamp_seconds
/// An empty third field marks a missing timestamp. `object_id,END,` closes a
/// trajectory; further updates for a closed object are rejected. Segment
/// names resolve against the network; unknown names fail validation.
TrajectoryStream parse_stream(std::string_view source, const RoadNetwork& net);
TrajectoryStream parse_stream_file(const std::string& path, const RoadNetwork& net);

std::string serialize_stream(const TrajectoryStream& stream, const RoadNetwork& net);

/// One trajectory per object id, points in arrival order. Trajectory order
/// follows first appearance in the stream.
std::vector<Trajectory> group_by_object(const TrajectoryStream& stream);

/// Deterministic shuffle under seed, then split whole trajectories.
/// floor(train_fraction * n), clamped so both sides are non-empty.
std::pair<std::vector<Trajectory>, std::vector<Trajectory>> split_train_test(const std::vector<Trajectory>& trajectories,
                                                                             double train_fraction,
                                                                             std::uint64_t seed);

}  // namespace ontrac

#endif
