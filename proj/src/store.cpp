#include "ontrac/store.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <filesystem>

#include "json.hpp"

namespace ontrac {

namespace {

constexpr int kFormatVersion = 1;

// Record kinds in the binary log. S/T carry kept compressed records, U a raw
// full-mode update, E closes a trajectory.
constexpr char kSpatial = 'S';
constexpr char kTemporal = 'T';
constexpr char kFullUpdate = 'U';
constexpr char kEnd = 'E';

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}
void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
    const unsigned char* p;
    const unsigned char* end;
    bool ok = true;

    std::uint16_t u16() {
        if (end - p < 2) { ok = false; return 0; }
        std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
        p += 2;
        return v;
    }
    std::uint32_t u32() {
        if (end - p < 4) { ok = false; return 0; }
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        p += 4;
        return v;
    }
    double f64() {
        if (end - p < 8) { ok = false; return 0.0; }
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        p += 8;
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str(std::size_t n) {
        if (static_cast<std::size_t>(end - p) < n) { ok = false; return {}; }
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        return s;
    }
};

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

Store::Store(std::string dir, IngestMode mode, double lambda, std::uint64_t spatial_hash, std::uint64_t tt_hash,
             std::uint64_t network_hash)
    : dir_(std::move(dir)),
      mode_(mode),
      lambda_(lambda),
      spatial_hash_(spatial_hash),
      tt_hash_(tt_hash),
      network_hash_(network_hash) {
    std::filesystem::create_directories(dir_);
    load_manifest_or_create();
    const std::string log = dir_ + "/log.bin";
    reload_log();
    fd_ = ::open(log.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd_ < 0) throw std::runtime_error("cannot open " + log);
}

Store::~Store() {
    if (fd_ >= 0) ::close(fd_);
}

void Store::load_manifest_or_create() {
    const std::string path = dir_ + "/manifest.json";
    if (std::filesystem::exists(path)) {
        auto m = nlohmann::json::parse(read_file(path));
        if (m.value("format_version", 0) != kFormatVersion)
            throw ValidationError("store format version mismatch at " + dir_);
        const std::string want_mode = mode_ == IngestMode::Full ? "FULL" : "COMPRESSED";
        if (m.value("mode", "") != want_mode || m.value("lambda", -1.0) != lambda_ ||
            m.value("spatial_model", "") != hex64(spatial_hash_) || m.value("tt_model", "") != hex64(tt_hash_) ||
            m.value("network", "") != hex64(network_hash_))
            throw ValidationError("store manifest at " + dir_ + " does not match the supplied models");
        return;
    }
    nlohmann::json m{{"format_version", kFormatVersion},
                     {"mode", mode_ == IngestMode::Full ? "FULL" : "COMPRESSED"},
                     {"lambda", lambda_},
                     {"spatial_model", hex64(spatial_hash_)},
                     {"tt_model", hex64(tt_hash_)},
                     {"network", hex64(network_hash_)}};
    write_file(path, m.dump(2) + "\n");
}

CompressedTrajectory& Store::open_slot(const std::string& object) {
    auto& traj = open_[object];
    if (traj.object.empty()) {
        traj.object = object;
        traj.spatial.object = object;
        traj.temporal.object = object;
    }
    return traj;
}

void Store::reload_log() {
    index_.clear();
    open_.clear();
    records_written_ = 0;
    const std::string path = dir_ + "/log.bin";
    if (!std::filesystem::exists(path)) return;
    const std::string data = read_file(path);
    std::size_t off = 0;
    while (off + 5 <= data.size()) {
        std::uint32_t len = 0;
        for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[off + i])) << (8 * i);
        const char kind = data[off + 4];
        if (off + 5 + len > data.size()) break;  // truncated final record: skip
        Reader r{reinterpret_cast<const unsigned char*>(data.data()) + off + 5,
                 reinterpret_cast<const unsigned char*>(data.data()) + off + 5 + len};
        off += 5 + len;

        const std::string object = r.str(r.u16());
        if (!r.ok) break;
        auto& traj = open_slot(object);
        switch (kind) {
            case kSpatial: {
                std::uint32_t pos = r.u32();
                std::uint32_t seg = r.u32();
                if (r.ok) traj.spatial.kept.emplace_back(pos, static_cast<SegmentId>(seg));
                break;
            }
            case kTemporal: {
                TemporalAnchor a;
                a.position = r.u32();
                a.d = r.f64();
                a.t_star = r.f64();
                if (r.ok) traj.temporal.kept.push_back(a);
                break;
            }
            case kFullUpdate: {
                std::uint32_t pos = r.u32();
                std::uint32_t seg = r.u32();
                double d = r.f64();
                std::uint8_t has_time = static_cast<std::uint8_t>(r.str(1)[0]);
                double t = r.f64();
                if (!r.ok) break;
                traj.spatial.kept.emplace_back(pos, static_cast<SegmentId>(seg));
                if (has_time) traj.temporal.kept.push_back({pos, d, t});
                break;
            }
            case kEnd: {
                std::uint32_t len32 = r.u32();
                std::uint8_t has_start = static_cast<std::uint8_t>(r.str(1)[0]);
                double start = r.f64();
                if (!r.ok) break;
                traj.original_length = len32;
                traj.has_start_time = has_start != 0;
                traj.start_time = start;
                index_[object] = std::move(traj);
                open_.erase(object);
                break;
            }
            default:
                throw ValidationError("unknown record kind in store log");
        }
        if (!r.ok) break;
        ++records_written_;
    }
}

void Store::write_record(char kind, const std::string& payload) {
    std::string rec;
    rec.reserve(payload.size() + 5);
    put_u32(rec, static_cast<std::uint32_t>(payload.size()));
    rec.push_back(kind);
    rec += payload;
    ssize_t n = ::write(fd_, rec.data(), rec.size());
    if (n != static_cast<ssize_t>(rec.size()))
        throw std::runtime_error("store write failed (partial state on disk at " + dir_ + ")");
    ++records_written_;
}

void Store::append_spatial(const std::string& object, std::uint32_t position, SegmentId segment) {
    std::string payload;
    put_u16(payload, static_cast<std::uint16_t>(object.size()));
    payload += object;
    put_u32(payload, position);
    put_u32(payload, static_cast<std::uint32_t>(segment));
    write_record(kSpatial, payload);
    open_slot(object).spatial.kept.emplace_back(position, segment);
}

void Store::append_temporal(const std::string& object, const TemporalAnchor& anchor) {
    std::string payload;
    put_u16(payload, static_cast<std::uint16_t>(object.size()));
    payload += object;
    put_u32(payload, anchor.position);
    put_f64(payload, anchor.d);
    put_f64(payload, anchor.t_star);
    write_record(kTemporal, payload);
    open_slot(object).temporal.kept.push_back(anchor);
}

void Store::append_full_update(const std::string& object, std::uint32_t position, SegmentId segment, double cum_d,
                               std::optional<double> timestamp) {
    std::string payload;
    put_u16(payload, static_cast<std::uint16_t>(object.size()));
    payload += object;
    put_u32(payload, position);
    put_u32(payload, static_cast<std::uint32_t>(segment));
    put_f64(payload, cum_d);
    payload.push_back(timestamp ? '\1' : '\0');
    put_f64(payload, timestamp.value_or(0.0));
    write_record(kFullUpdate, payload);
    auto& traj = open_slot(object);
    traj.spatial.kept.emplace_back(position, segment);
    if (timestamp) traj.temporal.kept.push_back({position, cum_d, *timestamp});
}

void Store::append_end(const std::string& object, std::uint32_t length, std::optional<double> start_time) {
    std::string payload;
    put_u16(payload, static_cast<std::uint16_t>(object.size()));
    payload += object;
    put_u32(payload, length);
    payload.push_back(start_time ? '\1' : '\0');
    put_f64(payload, start_time.value_or(0.0));
    write_record(kEnd, payload);
    auto& traj = open_slot(object);
    traj.original_length = length;
    traj.has_start_time = start_time.has_value();
    traj.start_time = start_time.value_or(0.0);
    index_[object] = std::move(traj);
    open_.erase(object);
}

void Store::append(const CompressedTrajectory& traj) {
    for (const auto& [pos, seg] : traj.spatial.kept) append_spatial(traj.object, pos, seg);
    for (const auto& a : traj.temporal.kept) append_temporal(traj.object, a);
    append_end(traj.object, traj.original_length,
               traj.has_start_time ? std::optional<double>(traj.start_time) : std::nullopt);
}

void Store::flush() {
    if (fd_ >= 0) ::fsync(fd_);
}

std::vector<std::string> Store::objects() const {
    std::vector<std::string> out;
    out.reserve(index_.size());
    for (const auto& [name, _] : index_) out.push_back(name);
    std::sort(out.begin(), out.end());
    return out;
}

const CompressedTrajectory* Store::lookup(const std::string& object) const {
    auto it = index_.find(object);
    return it == index_.end() ? nullptr : &it->second;
}

std::uint64_t Store::bytes_on_disk() const {
    struct stat st{};
    if (::fstat(fd_, &st) != 0) return 0;
    return static_cast<std::uint64_t>(st.st_size);
}

void Store::wipe(const std::string& dir) {
    std::filesystem::remove(dir + "/log.bin");
    std::filesystem::remove(dir + "/manifest.json");
}

std::string BenchReport::csv_header() {
    return "mode,inserts_per_sec,queries_per_sec,bytes_on_disk,updates_written,seconds";
}

std::string BenchReport::to_csv_row() const {
    std::string out = mode;
    out += ',';
    out += format_double(inserts_per_sec);
    out += ',';
    out += format_double(queries_per_sec);
    out += ',';
    out += std::to_string(bytes_on_disk);
    out += ',';
    out += std::to_string(updates_written);
    out += ',';
    out += format_double(seconds);
    return out;
}

namespace {

// Per-object state of the online ingest pipeline.
struct ObjectState {
    SpatialCompressor spatial;
    TemporalCompressor temporal;
    std::uint32_t length = 0;
    double cum_d = 0.0;
    ObjectState(const SpatialModel& sm, const TravelTimeModel& tm, const RoadNetwork& net, double lambda)
        : spatial(sm), temporal(tm, net, lambda) {}
};

struct IngestPass {
    std::uint64_t updates_written = 0;
    double seconds = 0.0;
};

IngestPass run_ingest_once(Store& store, const TrajectoryStream& stream, const RoadNetwork& net,
                           const SpatialModel& spatial_model, const TravelTimeModel& tt_model, double lambda,
                           IngestMode mode) {
    IngestPass pass;
    std::unordered_map<std::string, ObjectState> states;
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& u : stream.updates) {
        auto it = states.find(u.object);
        if (it == states.end())
            it = states.emplace(u.object, ObjectState(spatial_model, tt_model, net, lambda)).first;
        auto& st = it->second;
        const std::uint32_t pos = st.length++;
        st.cum_d += net.length(u.segment);
        if (mode == IngestMode::Full) {
            store.append_full_update(u.object, pos, u.segment, st.cum_d, u.timestamp);
            ++pass.updates_written;
            continue;
        }
        if (st.spatial.feed(u.segment)) {
            store.append_spatial(u.object, pos, u.segment);
            ++pass.updates_written;
        }
        if (auto anchor = st.temporal.feed(u.segment, u.timestamp)) {
            store.append_temporal(u.object, *anchor);
            ++pass.updates_written;
        }
    }
    // Stream end closes every open trajectory.
    for (auto& [object, st] : states) store.append_end(object, st.length, std::nullopt);
    store.flush();
    pass.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return pass;
}

}  // namespace

BenchReport ingest(const std::string& dir, const TrajectoryStream& stream, const RoadNetwork& net,
                   const SpatialModel& spatial_model, const TravelTimeModel& tt_model, double lambda,
                   IngestMode mode, int runs) {
    if (runs < 1) throw ValidationError("runs must be >= 1");
    const std::uint64_t sh = fnv1a64(serialize_spatial(spatial_model, net));
    const std::uint64_t th = fnv1a64(serialize_tt_model(tt_model, net));
    const std::uint64_t nh = fnv1a64(serialize_network(net));

    // Warm-up pass, excluded from timing.
    {
        Store::wipe(dir);
        Store store(dir, mode, lambda, sh, th, nh);
        run_ingest_once(store, stream, net, spatial_model, tt_model, lambda, mode);
    }
    std::vector<double> seconds;
    IngestPass last;
    std::uint64_t bytes = 0;
    for (int r = 0; r < runs; ++r) {
        Store::wipe(dir);
        Store store(dir, mode, lambda, sh, th, nh);
        last = run_ingest_once(store, stream, net, spatial_model, tt_model, lambda, mode);
        seconds.push_back(last.seconds);
        bytes = store.bytes_on_disk();
    }
    std::sort(seconds.begin(), seconds.end());
    const double median = seconds[seconds.size() / 2];

    BenchReport report;
    report.mode = mode == IngestMode::Full ? "FULL" : "COMPRESSED";
    report.seconds = median;
    report.inserts_per_sec = static_cast<double>(stream.updates.size()) / median;
    report.bytes_on_disk = bytes;
    report.updates_written = last.updates_written;
    return report;
}

QueryBenchResult query_bench(const Store& store, std::span<const Probe> probes, const RoadNetwork& net,
                             const SpatialModel& spatial_model, const TravelTimeModel& tt_model,
                             QueryStrategy strategy, std::span<const SegmentId> oracle, int runs) {
    if (runs < 1) throw ValidationError("runs must be >= 1");
    QueryBenchResult out;
    out.report.mode = strategy == QueryStrategy::Partial ? "PARTIAL" : "FULL_RECONSTRUCT";

    auto answer = [&](std::size_t i) {
        return strategy == QueryStrategy::Partial
                   ? where_query(*store.lookup(probes[i].object), spatial_model, tt_model, net, probes[i].t)
                   : where_query_full(*store.lookup(probes[i].object), spatial_model, tt_model, net, probes[i].t);
    };

    // Warm-up pass does the counting and oracle verification.
    std::vector<std::size_t> answerable;
    for (std::size_t i = 0; i < probes.size(); ++i) {
        if (!store.lookup(probes[i].object)) {
            ++out.unknown_objects;
            continue;
        }
        try {
            WhereResult res = answer(i);
            ++out.answered;
            answerable.push_back(i);
            if (!oracle.empty() && oracle[i] != kNoSegment && res.segment != oracle[i]) ++out.mismatches;
        } catch (const OutOfRangeError&) {
            ++out.out_of_range;
        }
    }

    std::vector<double> seconds;
    for (int r = 0; r < runs; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t i : answerable) answer(i);
        seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(seconds.begin(), seconds.end());
    const double median = seconds[seconds.size() / 2];
    out.report.seconds = median;
    out.report.queries_per_sec = out.answered > 0 && median > 0.0 ? static_cast<double>(out.answered) / median : 0.0;
    out.report.bytes_on_disk = store.bytes_on_disk();
    out.report.updates_written = store.records_written();
    return out;
}

}  // namespace ontrac
