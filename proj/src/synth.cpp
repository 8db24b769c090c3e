#include "ontrac/synth.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>

namespace ontrac {

namespace {

// Hand-rolled draws so generated datasets are reproducible independent of the
// standard library's distribution implementations.
struct Rng {
    std::uint64_t state;
    explicit Rng(std::uint64_t seed) : state(seed ? seed : 0x9e3779b97f4a7c15ULL) {}
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next() % n); }
    double normal(double mean, double std) {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return mean + std * std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
    /// Truncated below at 1 m/s by rejection.
    double speed(double mean, double std) {
        if (std == 0.0) return mean;
        for (int tries = 0; tries < 1000; ++tries) {
            double v = normal(mean, std);
            if (v >= 1.0) return v;
        }
        return 1.0;
    }
};

void check_config(const SynthConfig& config) {
    if (!(config.speed_mean > 0.0)) throw ValidationError("speed_mean must be positive");
    if (config.speed_std < 0.0) throw ValidationError("speed_std must be nonnegative");
    if (!(config.alpha > 0.0)) throw ValidationError("alpha must be positive");
    if (config.gps_interval < 0.0) throw ValidationError("gps_interval must be nonnegative");
    if (config.n_trajectories == 0) throw ValidationError("n_trajectories must be positive");
}

/// Emits the ground-truth trajectories as a stream: timestamps are retained at
/// the configured interval (first and last update always), and updates are
/// merged across objects in true time order.
SynthResult assemble(std::vector<GroundTruthTrajectory> truth, const SynthConfig& config) {
    SynthResult out;
    struct Pending {
        double true_time;
        std::size_t traj;
        std::size_t pos;
    };
    std::vector<Pending> order;
    for (std::size_t i = 0; i < truth.size(); ++i)
        for (std::size_t p = 0; p < truth[i].segments.size(); ++p)
            order.push_back({truth[i].exit_times[p], i, p});
    std::stable_sort(order.begin(), order.end(),
                     [](const Pending& a, const Pending& b) { return a.true_time < b.true_time; });

    std::vector<double> last_kept(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) last_kept[i] = truth[i].start_time;
    for (const auto& item : order) {
        const auto& gt = truth[item.traj];
        Update u;
        u.object = gt.object;
        u.segment = gt.segments[item.pos];
        const bool first = item.pos == 0;
        const bool last = item.pos + 1 == gt.segments.size();
        const double t = gt.exit_times[item.pos];
        if (first || last || config.gps_interval == 0.0 || t - last_kept[item.traj] >= config.gps_interval) {
            u.timestamp = t;
            last_kept[item.traj] = t;
        }
        out.stream.updates.push_back(std::move(u));
    }
    out.truth = std::move(truth);
    return out;
}

}  // namespace

RoadNetwork make_grid_network(std::size_t rows, std::size_t cols, double segment_length) {
    if (rows < 1 || cols < 1) throw ValidationError("grid needs at least one row and column");
    if (!(segment_length > 0.0)) throw ValidationError("segment_length must be positive");

    RoadNetwork net;
    // Intersection (ix, iy) with ix in [0, cols], iy in [0, rows]; the name
    // encodes the street midpoint in doubled coordinates.
    auto node_key = [cols](std::size_t ix, std::size_t iy) { return iy * (cols + 1) + ix; };
    std::vector<std::vector<SegmentId>> at_node((rows + 1) * (cols + 1));

    for (std::size_t iy = 0; iy <= rows; ++iy) {
        for (std::size_t ix = 0; ix < cols; ++ix) {
            std::string name = "s_" + std::to_string(2 * ix + 1) + "_" + std::to_string(2 * iy);
            SegmentId id = net.add_segment(std::move(name), segment_length);
            at_node[node_key(ix, iy)].push_back(id);
            at_node[node_key(ix + 1, iy)].push_back(id);
        }
    }
    for (std::size_t iy = 0; iy < rows; ++iy) {
        for (std::size_t ix = 0; ix <= cols; ++ix) {
            std::string name = "s_" + std::to_string(2 * ix) + "_" + std::to_string(2 * iy + 1);
            SegmentId id = net.add_segment(std::move(name), segment_length);
            at_node[node_key(ix, iy)].push_back(id);
            at_node[node_key(ix, iy + 1)].push_back(id);
        }
    }
    // Two streets are adjacent iff they meet at an intersection.
    std::vector<std::vector<SegmentId>> succ(net.size());
    for (const auto& here : at_node)
        for (SegmentId a : here)
            for (SegmentId b : here)
                if (a != b) succ[static_cast<std::size_t>(a)].push_back(b);
    for (std::size_t a = 0; a < succ.size(); ++a) {
        std::sort(succ[a].begin(), succ[a].end());
        succ[a].erase(std::unique(succ[a].begin(), succ[a].end()), succ[a].end());
        for (SegmentId b : succ[a]) net.add_edge(static_cast<SegmentId>(a), b);
    }
    net.finalize();
    return net;
}

SynthResult gen_random_walk(const RoadNetwork& net, const SynthConfig& config) {
    check_config(config);
    if (net.empty()) throw ValidationError("empty network");
    if (config.walk_length == 0) throw ValidationError("walk_length must be positive");

    std::vector<GroundTruthTrajectory> truth(config.n_trajectories);
    for (std::size_t i = 0; i < config.n_trajectories; ++i) {
        Rng rng(derive_seed(config.seed, i));
        auto& gt = truth[i];
        gt.object = "w" + std::to_string(i);
        gt.start_time = rng.uniform() * 3600.0;
        SegmentId here = static_cast<SegmentId>(rng.index(net.size()));
        double clock = gt.start_time;
        for (std::size_t step = 0; step < config.walk_length; ++step) {
            if (step > 0) {
                const auto& succ = net.successors(here);
                here = succ.empty() ? static_cast<SegmentId>(rng.index(net.size()))
                                    : succ[rng.index(succ.size())];
            }
            clock += net.length(here) / rng.speed(config.speed_mean, config.speed_std);
            gt.segments.push_back(here);
            gt.exit_times.push_back(clock);
        }
    }
    return assemble(std::move(truth), config);
}

SynthResult gen_shortest_path(const RoadNetwork& net, const SynthConfig& config) {
    check_config(config);
    if (net.size() < 2) throw ValidationError("network too small for shortest paths");

    // Destination popularity: rank segments by a seeded permutation, then draw
    // with mass proportional to exp(-alpha * rank).
    std::vector<SegmentId> ranked(net.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) ranked[i] = static_cast<SegmentId>(i);
    Rng perm_rng(derive_seed(config.seed, 0xD357));
    for (std::size_t i = ranked.size(); i > 1; --i)
        std::swap(ranked[i - 1], ranked[perm_rng.index(i)]);
    std::vector<double> cumulative(ranked.size());
    double acc = 0.0;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        acc += std::exp(-config.alpha * static_cast<double>(r));
        cumulative[r] = acc;
    }

    // Dijkstra over segments, path cost = sum of segment lengths; returns the
    // path from `start` to `dest` inclusive, empty when unreachable.
    auto shortest = [&net](SegmentId start, SegmentId dest) {
        std::vector<double> dist(net.size(), std::numeric_limits<double>::infinity());
        std::vector<SegmentId> prev(net.size(), kNoSegment);
        using Item = std::pair<double, SegmentId>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
        dist[static_cast<std::size_t>(start)] = net.length(start);
        heap.push({dist[static_cast<std::size_t>(start)], start});
        while (!heap.empty()) {
            auto [d, s] = heap.top();
            heap.pop();
            if (d > dist[static_cast<std::size_t>(s)]) continue;
            if (s == dest) break;
            for (SegmentId nxt : net.successors(s)) {
                const double nd = d + net.length(nxt);
                if (nd < dist[static_cast<std::size_t>(nxt)]) {
                    dist[static_cast<std::size_t>(nxt)] = nd;
                    prev[static_cast<std::size_t>(nxt)] = s;
                    heap.push({nd, nxt});
                }
            }
        }
        std::vector<SegmentId> path;
        if (std::isinf(dist[static_cast<std::size_t>(dest)])) return path;
        for (SegmentId s = dest; s != kNoSegment; s = prev[static_cast<std::size_t>(s)]) path.push_back(s);
        std::reverse(path.begin(), path.end());
        return path;
    };

    const std::size_t legs = std::max<std::size_t>(1, config.legs);
    std::vector<GroundTruthTrajectory> truth(config.n_trajectories);
    for (std::size_t i = 0; i < config.n_trajectories; ++i) {
        Rng rng(derive_seed(config.seed, 0x5000000ULL + i));
        auto& gt = truth[i];
        gt.object = "p" + std::to_string(i);
        gt.start_time = rng.uniform() * 3600.0;

        std::vector<SegmentId> path;
        SegmentId here = kNoSegment;
        for (std::size_t leg = 0; leg < legs; ++leg) {
            std::vector<SegmentId> leg_path;
            for (int tries = 0; tries < 100 && leg_path.empty(); ++tries) {
                const double u = rng.uniform() * acc;
                const std::size_t rank = static_cast<std::size_t>(
                    std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
                const SegmentId dest = ranked[std::min(rank, ranked.size() - 1)];
                const SegmentId start = here != kNoSegment ? here : static_cast<SegmentId>(rng.index(net.size()));
                if (start == dest) continue;
                leg_path = shortest(start, dest);
            }
            if (leg_path.empty()) throw ValidationError("could not find a path between sampled endpoints");
            // Chained legs share their junction segment; emit it once.
            path.insert(path.end(), leg_path.begin() + (path.empty() ? 0 : 1), leg_path.end());
            here = path.back();
        }

        double clock = gt.start_time;
        for (SegmentId s : path) {
            clock += net.length(s) / rng.speed(config.speed_mean, config.speed_std);
            gt.segments.push_back(s);
            gt.exit_times.push_back(clock);
        }
    }
    return assemble(std::move(truth), config);
}

SynthResult generate(const RoadNetwork& net, const SynthConfig& config) {
    return config.mode == SynthMode::RandomWalk ? gen_random_walk(net, config) : gen_shortest_path(net, config);
}

std::string serialize_ground_truth(std::span<const GroundTruthTrajectory> truth, const RoadNetwork& net) {
    std::string out;
    for (const auto& gt : truth) {
        out += gt.object;
        out += ",B,";
        out += format_double(gt.start_time);
        out += ",\n";
        for (std::size_t p = 0; p < gt.segments.size(); ++p) {
            out += gt.object;
            out += ",U,";
            out += net.name(gt.segments[p]);
            out += ',';
            out += format_double(gt.exit_times[p]);
            out += '\n';
        }
    }
    return out;
}

}  // namespace ontrac
