#ifndef ONTRAC_STORE_HPP
#define ONTRAC_STORE_HPP

#include <optional>
#include <string>
#include <unordered_map>

#include "ontrac/query.hpp"

namespace ontrac {

enum class IngestMode { Full, Compressed };
enum class QueryStrategy { FullReconstruct, Partial };

/// Append-only trajectory store: a length-prefixed binary log plus an
/// in-memory per-object index rebuilt on open. A truncated final record is
/// detected and skipped on reload. Single writer, shared readers.
class Store {
public:
    /// Opens (or creates) the store directory. When models are supplied their
    /// fingerprints are recorded in the manifest; reopening with different
    /// fingerprints fails.
    Store(std::string dir, IngestMode mode, double lambda, std::uint64_t spatial_hash, std::uint64_t tt_hash,
          std::uint64_t network_hash);
    ~Store();
    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    /// Appends the kept records of one closed trajectory.
    void append(const CompressedTrajectory& traj);

    /// Incremental (online) appends; a trajectory becomes queryable once its
    /// end record is written.
    void append_spatial(const std::string& object, std::uint32_t position, SegmentId segment);
    void append_temporal(const std::string& object, const TemporalAnchor& anchor);
    void append_full_update(const std::string& object, std::uint32_t position, SegmentId segment, double cum_d,
                            std::optional<double> timestamp);
    void append_end(const std::string& object, std::uint32_t length, std::optional<double> start_time);
    void flush();

    std::vector<std::string> objects() const;
    const CompressedTrajectory* lookup(const std::string& object) const;
    std::uint64_t bytes_on_disk() const;
    std::uint64_t records_written() const { return records_written_; }
    IngestMode mode() const { return mode_; }
    double lambda() const { return lambda_; }

    static void wipe(const std::string& dir);

private:
    void load_manifest_or_create();
    void reload_log();
    void write_record(char kind, const std::string& payload);
    CompressedTrajectory& open_slot(const std::string& object);

    std::string dir_;
    IngestMode mode_;
    double lambda_;
    std::uint64_t spatial_hash_, tt_hash_, network_hash_;
    int fd_ = -1;
    std::uint64_t records_written_ = 0;
    std::unordered_map<std::string, CompressedTrajectory> index_;
    std::unordered_map<std::string, CompressedTrajectory> open_;
};

struct BenchReport {
    std::string mode;
    double inserts_per_sec = 0.0;
    double queries_per_sec = 0.0;
    std::uint64_t bytes_on_disk = 0;
    std::uint64_t updates_written = 0;
    double seconds = 0.0;

    std::string to_csv_row() const;
    static std::string csv_header();
};

/// Replays the stream in arrival order into a fresh store under `dir`.
/// Compressed mode feeds each update through the spatial and temporal
/// compressors and writes only kept records; full mode writes every update.
/// Timing excludes a warm-up pass and reports the median of `runs` runs.
BenchReport ingest(const std::string& dir, const TrajectoryStream& stream, const RoadNetwork& net,
                   const SpatialModel& spatial_model, const TravelTimeModel& tt_model, double lambda,
                   IngestMode mode, int runs = 3);

/// Answers where-probes against a populated store. Probes for unknown objects
/// are counted, not fatal. An optional oracle (expected segment per probe,
/// kNoSegment to skip) is checked during the warm-up pass; the reported rate
/// is the median of `runs` timed passes.
struct Probe {
    std::string object;
    double t = 0.0;
};
struct QueryBenchResult {
    BenchReport report;
    std::size_t answered = 0;
    std::size_t unknown_objects = 0;
    std::size_t out_of_range = 0;
    std::size_t mismatches = 0;
};
QueryBenchResult query_bench(const Store& store, std::span<const Probe> probes, const RoadNetwork& net,
                             const SpatialModel& spatial_model, const TravelTimeModel& tt_model,
                             QueryStrategy strategy, std::span<const SegmentId> oracle = {}, int runs = 3);

}  // namespace ontrac

#endif
