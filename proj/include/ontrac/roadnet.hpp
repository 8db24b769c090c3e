#ifndef ONTRAC_ROADNET_HPP
#define ONTRAC_ROADNET_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ontrac/util.hpp"

namespace ontrac {

using SegmentId = std::int32_t;
constexpr SegmentId kNoSegment = -1;

struct SegmentRecord {
    SegmentId id = kNoSegment;
    double length = 0.0;  // meters, > 0
    std::string name;     // opaque external label, e.g. "s_2_3"
};

/// Directed graph whose vertices are road segments. (s_i, s_j) is an edge iff
/// an object can move from s_i straight onto s_j. Immutable after load; safe
/// for concurrent reads.
class RoadNetwork {
public:
    std::size_t size() const { return segments_.size(); }
    bool empty() const { return segments_.empty(); }

    const SegmentRecord& segment(SegmentId id) const { return segments_[static_cast<std::size_t>(id)]; }
    const std::vector<SegmentRecord>& segments() const { return segments_; }
    double length(SegmentId id) const { return segments_[static_cast<std::size_t>(id)].length; }
    const std::string& name(SegmentId id) const { return segments_[static_cast<std::size_t>(id)].name; }

    const std::vector<SegmentId>& successors(SegmentId id) const { return adjacency_[static_cast<std::size_t>(id)]; }
    const std::vector<SegmentId>& predecessors(SegmentId id) const { return reverse_[static_cast<std::size_t>(id)]; }
    std::size_t out_degree(SegmentId id) const { return adjacency_[static_cast<std::size_t>(id)].size(); }

    /// kNoSegment when unknown.
    SegmentId find(std::string_view name) const;
    bool valid(SegmentId id) const { return id >= 0 && static_cast<std::size_t>(id) < segments_.size(); }

    /// Builder interface used by the loader and the grid generator. Names must
    /// be unique and free of ',' ';' and whitespace.
    SegmentId add_segment(std::string name, double length);
    void add_edge(SegmentId from, SegmentId to);
    /// Validates lengths and edge targets and builds the reverse adjacency.
    void finalize();

private:
    std::vector<SegmentRecord> segments_;
    std::vector<std::vector<SegmentId>> adjacency_;
    std::vector<std::vector<SegmentId>> reverse_;
    std::unordered_map<std::string, SegmentId> by_name_;
};

/// Parses the edge-list network format:
///   segment_name,length_meters,succ_name_1;succ_name_2;...
/// Empty successor list allowed; '#' starts a comment line.
RoadNetwork load_network(std::string_view source);
RoadNetwork load_network_file(const std::string& path);
std::string serialize_network(const RoadNetwork& net);

struct StationaryDistribution {
    std::vector<double> pi;   // per-segment probability, sums to 1
    double damping = 0.85;
    std::size_t iterations = 0;
    double residual = 0.0;    // L1 change at termination
};

/// Power iteration for the random-walk stationary distribution with uniform
/// teleportation. Dangling segments spread their mass uniformly. Terminates
/// when the L1 change drops below tol.
StationaryDistribution pagerank(const RoadNetwork& net, double damping = 0.85, double tol = 1e-10,
                                std::size_t max_iter = 100000);

/// Random-walk update entropy bound: 1 - sum_i pi[i]/deg_o(i). Dangling
/// segments count with effective out-degree |V| (the teleport fan-out).
/// Clamped to [0, 1) against rounding.
double network_entropy(const RoadNetwork& net, const StationaryDistribution& pi);

}  // namespace ontrac

#endif
