#include <map>

#include "doctest.h"
#include "helpers.hpp"
#include "ontrac/spatial.hpp"

using namespace ontrac;

namespace {

std::vector<Trajectory> running_example_trajectories(const RoadNetwork& net) {
    auto stream = parse_stream(testing::running_example_stream_text(), net);
    return group_by_object(stream);
}

// Brute-force next-segment frequency counter over explicit (context, next)
// windows, independent of the trie.
std::map<std::vector<SegmentId>, std::map<SegmentId, int>> window_counts(const std::vector<Trajectory>& trajs,
                                                                         int k) {
    std::map<std::vector<SegmentId>, std::map<SegmentId, int>> counts;
    for (const auto& t : trajs) {
        for (std::size_t s = 1; s < t.points.size(); ++s) {
            for (std::size_t len = 1; len <= static_cast<std::size_t>(k) && len <= s; ++len) {
                std::vector<SegmentId> ctx;
                for (std::size_t i = s - len; i < s; ++i) ctx.push_back(t.points[i].segment);
                ++counts[ctx][t.points[s].segment];
            }
        }
    }
    return counts;
}

SegmentId brute_force_predict(const std::map<std::vector<SegmentId>, std::map<SegmentId, int>>& counts,
                              std::vector<SegmentId> context, int k) {
    if (context.size() > static_cast<std::size_t>(k))
        context.erase(context.begin(), context.end() - k);
    while (!context.empty()) {
        auto it = counts.find(context);
        if (it != counts.end()) {
            SegmentId best = kNoSegment;
            int best_count = 0;
            for (const auto& [seg, c] : it->second)
                if (c > best_count || (c == best_count && seg < best)) {
                    best = seg;
                    best_count = c;
                }
            return best;
        }
        context.erase(context.begin());  // fall back to a shorter suffix
    }
    return kNoSegment;
}

}  // namespace

TEST_CASE("spatial training reproduces the running-example trie") {
    RoadNetwork net = testing::running_example_network();
    auto trajs = running_example_trajectories(net);
    std::vector<Trajectory> train(trajs.begin(), trajs.begin() + 3);  // o_1, o_2, o_3
    SpatialModel model = spatial_training(net, train, 2);

    const SegmentId s21 = net.find("s_2_1"), s23 = net.find("s_2_3"), s34 = net.find("s_3_4");
    const SegmentId s14 = net.find("s_1_4"), s32 = net.find("s_3_2");

    // Depth-1 contexts.
    CHECK(predict_next(model, std::vector{s21}) == s23);
    CHECK(predict_next(model, std::vector{s14}) == s23);
    CHECK(predict_next(model, std::vector{s32}) == s23);
    // Depth-2 contexts disambiguate what follows s_2_3.
    CHECK(predict_next(model, std::vector{s21, s23}) == s34);
    CHECK(predict_next(model, std::vector{s14, s23}) == s32);
    CHECK(predict_next(model, std::vector{s32, s23}) == s14);

    SUBCASE("pred equals the argmax of the count table everywhere") {
        // Walk the trie and re-derive pred from counts.
        std::vector<const TrieNode*> stack{model.root.get()};
        while (!stack.empty()) {
            const TrieNode* nd = stack.back();
            stack.pop_back();
            if (!nd->count.empty()) {
                SegmentId best = kNoSegment;
                std::uint64_t best_count = 0;
                for (const auto& [seg, c] : nd->count)
                    if (c > best_count || (c == best_count && (best == kNoSegment || seg < best))) {
                        best = seg;
                        best_count = c;
                    }
                CHECK(nd->pred == best);
            } else {
                CHECK(nd->pred == kNoSegment);
            }
            for (const auto& [_, child] : nd->children) stack.push_back(child.get());
        }
    }
}

TEST_CASE("prediction details") {
    RoadNetwork net;
    SegmentId a = net.add_segment("a", 1.0);
    SegmentId b = net.add_segment("b", 1.0);
    net.add_edge(a, b);
    net.add_edge(b, b);
    net.finalize();

    SUBCASE("training on <a,b,b>") {
        Trajectory t;
        t.object = "x";
        t.points = {{a, 1.0}, {b, 2.0}, {b, 3.0}};
        auto counts_oracle = window_counts({t}, 2);
        SpatialModel model = spatial_training(net, std::vector{t}, 2);
        CHECK(predict_next(model, std::vector{a}) == b);
        CHECK(predict_next(model, std::vector{b}) == b);
        CHECK(predict_next(model, std::vector{a, b}) == brute_force_predict(counts_oracle, {a, b}, 2));
    }
    SUBCASE("empty trie predicts nothing") {
        Trajectory t;
        t.object = "x";
        t.points = {{a, 1.0}};
        SpatialModel model = spatial_training(net, std::vector{t}, 2);
        CHECK(predict_next(model, std::vector{a}) == kNoSegment);
        CHECK(model.root->children.empty());
    }
    SUBCASE("context longer than k matches its last-k suffix") {
        Trajectory t;
        t.object = "x";
        t.points = {{a, 1.0}, {b, 2.0}, {b, 3.0}, {b, 4.0}};
        SpatialModel model = spatial_training(net, std::vector{t}, 2);
        CHECK(predict_next(model, std::vector{a, b, b}) == predict_next(model, std::vector{b, b}));
        CHECK(predict_next(model, std::vector{a, a, a, b, b}) == predict_next(model, std::vector{b, b}));
    }
}

TEST_CASE("spatial compression of the running example") {
    RoadNetwork net = testing::running_example_network();
    auto trajs = running_example_trajectories(net);
    std::vector<Trajectory> train(trajs.begin(), trajs.begin() + 3);
    SpatialModel model = spatial_training(net, train, 2);

    auto comp = spatial_compress(model, trajs[3]);  // o_4
    REQUIRE(comp.kept.size() == 2);
    CHECK(comp.kept[0].first == 0);
    CHECK(comp.kept[0].second == net.find("s_1_2"));
    CHECK(comp.kept[1].first == 1);
    CHECK(comp.kept[1].second == net.find("s_2_1"));
    CHECK(static_cast<double>(trajs[3].size()) / static_cast<double>(comp.kept.size()) == 2.0);

    SUBCASE("decompression recovers o_4") {
        auto seq = spatial_decompress(model, comp, 4);
        REQUIRE(seq.size() == 4);
        CHECK(seq[0] == net.find("s_1_2"));
        CHECK(seq[1] == net.find("s_2_1"));
        CHECK(seq[2] == net.find("s_2_3"));
        CHECK(seq[3] == net.find("s_3_4"));
    }
    SUBCASE("block entropy of o_4 is 1/3") {
        std::vector<Trajectory> test{trajs[3]};
        CHECK(empirical_block_entropy(model, test) == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("empty model keeps everything; entropy 1") {
        SpatialModel empty;
        auto all = spatial_compress(empty, trajs[3]);
        CHECK(all.kept.size() == trajs[3].size());
        std::vector<Trajectory> test{trajs[3]};
        CHECK(empirical_block_entropy(empty, test) == 1.0);
        CHECK(spatial_decompress(empty, all, 4) == spatial_decompress(model, comp, 4));
    }
}

TEST_CASE("spatial properties on random walks") {
    RoadNetwork net = make_grid_network(4, 4, 50.0);
    SynthConfig cfg;
    cfg.mode = SynthMode::RandomWalk;
    cfg.n_trajectories = 300;
    cfg.walk_length = 15;
    cfg.seed = 99;
    auto data = generate(net, cfg);
    auto trajs = group_by_object(data.stream);
    std::vector<Trajectory> train(trajs.begin(), trajs.begin() + 200);
    std::vector<Trajectory> test(trajs.begin() + 200, trajs.end());
    SpatialModel model = spatial_training(net, train, 2);

    SUBCASE("lossless roundtrip") {
        for (const auto& t : trajs) {
            auto comp = spatial_compress(model, t);
            auto seq = spatial_decompress(model, comp, t.size());
            REQUIRE(seq.size() == t.size());
            for (std::size_t i = 0; i < seq.size(); ++i) CHECK(seq[i] == t.points[i].segment);
        }
    }
    SUBCASE("compression ratio recount and entropy identity") {
        std::size_t updates = 0, kept = 0, hits = 0, total_pred = 0;
        for (const auto& t : test) {
            auto comp = spatial_compress(model, t);
            updates += t.size();
            kept += comp.kept.size();
            total_pred += t.size() - 1;
            hits += (t.size() - comp.kept.size());  // suppressed = correctly predicted
        }
        CHECK(updates >= kept);
        double entropy = empirical_block_entropy(model, test);
        CHECK(1.0 - entropy ==
              doctest::Approx(static_cast<double>(hits) / static_cast<double>(total_pred)).epsilon(1e-12));
    }
    SUBCASE("an order-3 trie restricted to depth 2 matches the order-2 trie") {
        SpatialModel m2 = spatial_training(net, train, 2);
        SpatialModel m3 = spatial_training(net, train, 3);
        // Compare counts level by level down to depth 2.
        struct Frame {
            const TrieNode* a;
            const TrieNode* b;
            int depth;
        };
        std::vector<Frame> stack{{m2.root.get(), m3.root.get(), 0}};
        while (!stack.empty()) {
            auto [a, b, depth] = stack.back();
            stack.pop_back();
            CHECK(a->count == b->count);
            CHECK(a->pred == b->pred);
            if (depth == 2) continue;
            REQUIRE(a->children.size() == b->children.size());
            for (const auto& [seg, child] : a->children) {
                const TrieNode* other = b->child(seg);
                REQUIRE(other != nullptr);
                stack.push_back({child.get(), other, depth + 1});
            }
        }
    }
    SUBCASE("prediction agrees with the brute-force counter") {
        auto counts_oracle = window_counts(train, 2);
        for (const auto& t : test) {
            std::vector<SegmentId> ctx;
            for (std::size_t i = 0; i + 1 < t.points.size(); ++i) {
                ctx.push_back(t.points[i].segment);
                CHECK(predict_next(model, ctx) == brute_force_predict(counts_oracle, ctx, 2));
            }
        }
    }
}

TEST_CASE("spatial model serialization is byte-stable and lossless") {
    RoadNetwork net = testing::running_example_network();
    auto trajs = running_example_trajectories(net);
    std::vector<Trajectory> train(trajs.begin(), trajs.begin() + 3);
    SpatialModel model = spatial_training(net, train, 2);

    std::string text1 = serialize_spatial(model, net);
    std::string text2 = serialize_spatial(spatial_training(net, train, 2), net);
    CHECK(text1 == text2);

    SpatialModel back = parse_spatial(text1, net);
    CHECK(back.order == model.order);
    CHECK(back.trained_update_count == model.trained_update_count);
    CHECK(serialize_spatial(back, net) == text1);

    auto comp = spatial_compress(back, trajs[3]);
    CHECK(comp.kept.size() == 2);
}

TEST_CASE("spatial training error cases") {
    RoadNetwork net = testing::running_example_network();
    auto trajs = running_example_trajectories(net);
    SUBCASE("unknown segment") {
        Trajectory bad = trajs[0];
        bad.points[1].segment = 999;
        std::vector<Trajectory> train{bad};
        CHECK_THROWS_AS(spatial_training(net, train, 2), ValidationError);
    }
    SUBCASE("length-1 test set has no predictable positions") {
        std::vector<Trajectory> train(trajs.begin(), trajs.begin() + 3);
        SpatialModel model = spatial_training(net, train, 2);
        Trajectory single;
        single.object = "s";
        single.points = {{net.find("s_2_1"), 1.0}};
        std::vector<Trajectory> test{single};
        CHECK_THROWS_AS(empirical_block_entropy(model, test), ValidationError);
    }
}
