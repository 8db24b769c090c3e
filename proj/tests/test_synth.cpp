#include <cmath>
#include <map>

#include "doctest.h"
#include "helpers.hpp"
#include "ontrac/spatial.hpp"
#include "ontrac/synth.hpp"

using namespace ontrac;

TEST_CASE("grid network shapes") {
    SUBCASE("2x2 grid is the running-example topology") {
        RoadNetwork net = make_grid_network(2, 2, 2.0);
        CHECK(net.size() == 12);
        for (const auto& seg : net.segments()) CHECK(seg.length == 2.0);
        CHECK(net.find("s_2_3") != kNoSegment);
        CHECK(net.find("s_0_1") != kNoSegment);
    }
    SUBCASE("1x1 grid has four segments") {
        RoadNetwork net = make_grid_network(1, 1, 10.0);
        CHECK(net.size() == 4);
        // Each side of the block meets the two perpendicular sides.
        for (const auto& seg : net.segments()) CHECK(net.out_degree(seg.id) == 2);
    }
    SUBCASE("street count matches an independent recount") {
        for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{10, 10}, {3, 7}, {1, 5}}) {
            RoadNetwork net = make_grid_network(rows, cols, 100.0);
            // Count streets directly: cols per horizontal line, rows per
            // vertical line.
            std::size_t expected = cols * (rows + 1) + rows * (cols + 1);
            CHECK(net.size() == expected);
        }
    }
}

TEST_CASE("random walks") {
    RoadNetwork net = make_grid_network(2, 2, 2.0);

    SUBCASE("deterministic under the seed") {
        SynthConfig cfg;
        cfg.n_trajectories = 25;
        cfg.walk_length = 12;
        cfg.seed = 7;
        auto a = gen_random_walk(net, cfg);
        auto b = gen_random_walk(net, cfg);
        CHECK(serialize_stream(a.stream, net) == serialize_stream(b.stream, net));
        cfg.seed = 8;
        auto c = gen_random_walk(net, cfg);
        CHECK(serialize_stream(a.stream, net) != serialize_stream(c.stream, net));
    }
    SUBCASE("walk_length 1 gives single-update trajectories") {
        SynthConfig cfg;
        cfg.n_trajectories = 10;
        cfg.walk_length = 1;
        auto data = gen_random_walk(net, cfg);
        for (const auto& t : group_by_object(data.stream)) CHECK(t.size() == 1);
    }
    SUBCASE("ground truth matches the emitted stream") {
        SynthConfig cfg;
        cfg.n_trajectories = 20;
        cfg.walk_length = 10;
        cfg.gps_interval = 25.0;
        cfg.seed = 3;
        auto data = gen_random_walk(net, cfg);
        auto trajs = group_by_object(data.stream);
        REQUIRE(trajs.size() == data.truth.size());
        std::map<std::string, const GroundTruthTrajectory*> by_name;
        for (const auto& gt : data.truth) by_name[gt.object] = &gt;
        for (const auto& t : trajs) {
            const auto* gt = by_name.at(t.object);
            REQUIRE(t.size() == gt->segments.size());
            CHECK(t.points.front().timestamp.has_value());
            CHECK(t.points.back().timestamp.has_value());
            for (std::size_t p = 0; p < t.size(); ++p) {
                CHECK(t.points[p].segment == gt->segments[p]);
                if (t.points[p].timestamp) CHECK(*t.points[p].timestamp == gt->exit_times[p]);
            }
        }
    }
    SUBCASE("successor choice is uniform") {
        SynthConfig cfg;
        cfg.n_trajectories = 100;
        cfg.walk_length = 1000;
        cfg.seed = 13;
        auto data = gen_random_walk(net, cfg);
        std::map<SegmentId, std::map<SegmentId, std::size_t>> freq;
        std::map<SegmentId, std::size_t> total;
        for (const auto& gt : data.truth)
            for (std::size_t p = 1; p < gt.segments.size(); ++p) {
                ++freq[gt.segments[p - 1]][gt.segments[p]];
                ++total[gt.segments[p - 1]];
            }
        for (const auto& seg : net.segments()) {
            const auto& succ = net.successors(seg.id);
            const double p = 1.0 / static_cast<double>(succ.size());
            const double n = static_cast<double>(total[seg.id]);
            REQUIRE(n > 1000);
            const double stderr3 = 3.0 * std::sqrt(n * p * (1.0 - p));
            for (SegmentId s : succ)
                CHECK(std::abs(static_cast<double>(freq[seg.id][s]) - n * p) <= stderr3);
        }
    }
    SUBCASE("dense interval observes every update") {
        SynthConfig cfg;
        cfg.n_trajectories = 5;
        cfg.walk_length = 8;
        cfg.gps_interval = 0.0;
        auto data = gen_random_walk(net, cfg);
        for (const auto& u : data.stream.updates) CHECK(u.timestamp.has_value());
    }
}

TEST_CASE("shortest-path generation") {
    RoadNetwork net = make_grid_network(4, 4, 100.0);

    SUBCASE("alpha 1 concentrates on the top destination") {
        SynthConfig cfg;
        cfg.mode = SynthMode::ShortestPath;
        cfg.n_trajectories = 1000;
        cfg.alpha = 1.0;
        cfg.seed = 19;
        auto data = gen_shortest_path(net, cfg);
        std::map<SegmentId, std::size_t> dests;
        for (const auto& gt : data.truth) ++dests[gt.segments.back()];
        std::size_t top = 0;
        for (const auto& [_, c] : dests) top = std::max(top, c);
        CHECK(static_cast<double>(top) >= 0.60 * 1000);
    }
    SUBCASE("tiny alpha spreads destinations nearly uniformly") {
        SynthConfig cfg;
        cfg.mode = SynthMode::ShortestPath;
        cfg.n_trajectories = 4000;
        cfg.alpha = 1e-4;
        cfg.seed = 23;
        auto data = gen_shortest_path(net, cfg);
        std::map<SegmentId, std::size_t> dests;
        for (const auto& gt : data.truth) ++dests[gt.segments.back()];
        const double n = 4000.0;
        const double p = 1.0 / static_cast<double>(net.size());
        const double stderr3 = 3.0 * std::sqrt(n * p * (1.0 - p));
        std::size_t outliers = 0;
        for (const auto& seg : net.segments()) {
            const double c = static_cast<double>(dests[seg.id]);
            if (std::abs(c - n * p) > stderr3) ++outliers;
        }
        // A couple of 3-sigma cells out of 40 is expected noise.
        CHECK(outliers <= 2);
    }
    SUBCASE("paths are connected and shortest-length sane") {
        SynthConfig cfg;
        cfg.mode = SynthMode::ShortestPath;
        cfg.n_trajectories = 50;
        cfg.seed = 29;
        auto data = gen_shortest_path(net, cfg);
        for (const auto& gt : data.truth) {
            for (std::size_t p = 1; p < gt.segments.size(); ++p) {
                const auto& succ = net.successors(gt.segments[p - 1]);
                CHECK(std::find(succ.begin(), succ.end(), gt.segments[p]) != succ.end());
            }
        }
    }
    SUBCASE("zero speed_std makes every segment time exact") {
        SynthConfig cfg;
        cfg.mode = SynthMode::ShortestPath;
        cfg.n_trajectories = 10;
        cfg.speed_std = 0.0;
        cfg.seed = 37;
        auto data = gen_shortest_path(net, cfg);
        for (const auto& gt : data.truth) {
            double prev = gt.start_time;
            for (std::size_t p = 0; p < gt.segments.size(); ++p) {
                CHECK(gt.exit_times[p] - prev == doctest::Approx(100.0 / 15.0).epsilon(1e-12));
                prev = gt.exit_times[p];
            }
        }
    }
}

TEST_CASE("walks on an out-degree-1 network compress perfectly") {
    RoadNetwork net;
    const std::size_t n = 8;
    for (std::size_t i = 0; i < n; ++i) net.add_segment("c" + std::to_string(i), 50.0);
    for (std::size_t i = 0; i < n; ++i) net.add_edge(static_cast<SegmentId>(i), static_cast<SegmentId>((i + 1) % n));
    net.finalize();

    SynthConfig cfg;
    cfg.n_trajectories = 40;
    cfg.walk_length = 20;
    cfg.seed = 41;
    auto data = gen_random_walk(net, cfg);
    auto trajs = group_by_object(data.stream);
    std::vector<Trajectory> train(trajs.begin(), trajs.begin() + 20);
    std::vector<Trajectory> test(trajs.begin() + 20, trajs.end());
    SpatialModel model = spatial_training(net, train, 2);
    CHECK(empirical_block_entropy(model, test) == 0.0);
}
