#ifndef ONTRAC_SPATIAL_HPP
#define ONTRAC_SPATIAL_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "ontrac/trajmodel.hpp"

namespace ontrac {

/// Trie node keyed by context segments, most recent first: the node reached
/// from the root via (a, b) describes histories "... b, a". `count` holds the
/// frequencies of the segment that followed such a history in training.
struct TrieNode {
    std::map<SegmentId, std::unique_ptr<TrieNode>> children;
    std::map<SegmentId, std::uint64_t> count;
    SegmentId pred = kNoSegment;

    TrieNode* child(SegmentId s) const {
        auto it = children.find(s);
        return it == children.end() ? nullptr : it->second.get();
    }
    void add_observation(SegmentId next);
};

/// k-order Markov next-segment predictor. Immutable once trained; concurrent
/// prediction and compression over a shared model is safe.
struct SpatialModel {
    int order = 2;
    std::unique_ptr<TrieNode> root = std::make_unique<TrieNode>();
    std::uint64_t trained_update_count = 0;
};

struct CompressedSpatial {
    std::string object;
    /// (position in the original trajectory, segment); position 0 always kept,
    /// positions strictly increasing.
    std::vector<std::pair<std::uint32_t, SegmentId>> kept;
};

SpatialModel spatial_training(const RoadNetwork& net, std::span<const Trajectory> train, int order);

/// Longest-matching-suffix prediction; kNoSegment when no suffix of length
/// >= 1 is present in the trie.
SegmentId predict_next(const SpatialModel& model, std::span<const SegmentId> context);

CompressedSpatial spatial_compress(const SpatialModel& model, const Trajectory& traj);

/// Online form of spatial_compress: feed updates one at a time; returns true
/// when the update must be kept. Produces exactly the batch compressor's kept
/// set.
class SpatialCompressor {
public:
    explicit SpatialCompressor(const SpatialModel& model) : model_(&model) {}
    bool feed(SegmentId segment);
    std::uint32_t position() const { return position_; }

private:
    const SpatialModel* model_;
    std::vector<SegmentId> context_;
    std::uint32_t position_ = 0;
};

/// Inverse of spatial_compress: kept entries are copied, suppressed positions
/// replay the model's prediction over the reconstructed prefix.
std::vector<SegmentId> spatial_decompress(const SpatialModel& model, const CompressedSpatial& comp,
                                          std::size_t original_length);

/// Fraction of position >= 1 updates the model fails to predict; the plug-in
/// estimate of the spatial update block entropy over a test set.
double empirical_block_entropy(const SpatialModel& model, std::span<const Trajectory> test);

/// Batch compression kernel; `workers` > 1 runs the per-trajectory loop under
/// OpenMP. compress_all_serial is the reference implementation the parallel
/// path is tested against.
std::vector<CompressedSpatial> compress_all_serial(const SpatialModel& model, std::span<const Trajectory> trajs);
std::vector<CompressedSpatial> compress_all(const SpatialModel& model, std::span<const Trajectory> trajs, int workers);

/// Flat text serialization (order header, then one line per node in sorted
/// DFS order); byte-stable for identical inputs.
std::string serialize_spatial(const SpatialModel& model, const RoadNetwork& net);
SpatialModel parse_spatial(std::string_view source, const RoadNetwork& net);

}  // namespace ontrac

#endif
