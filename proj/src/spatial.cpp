#include "ontrac/spatial.hpp"

#include <algorithm>
#include <charconv>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ontrac {

void TrieNode::add_observation(SegmentId next) {
    std::uint64_t c = ++count[next];
    // pred tracks the argmax of count with ties broken by smallest id.
    if (pred == kNoSegment || c > count[pred] || (c == count[pred] && next < pred)) pred = next;
}

SpatialModel spatial_training(const RoadNetwork& net, std::span<const Trajectory> train, int order) {
    if (order < 1) throw ValidationError("spatial order must be >= 1");
    if (train.empty()) throw ValidationError("spatial training needs at least one trajectory");

    SpatialModel model;
    model.order = order;
    for (const auto& traj : train) {
        for (const auto& p : traj.points)
            if (!net.valid(p.segment))
                throw ValidationError("trajectory '" + traj.object + "' references an unknown segment");
        const auto& pts = traj.points;
        model.trained_update_count += pts.size();
        // Window ending at position s; every suffix of the preceding context
        // (most recent segment first) records pts[s] as its next segment.
        for (std::size_t s = 1; s < pts.size(); ++s) {
            std::size_t lo = s >= static_cast<std::size_t>(order) ? s - static_cast<std::size_t>(order) : 0;
            TrieNode* nd = model.root.get();
            for (std::size_t back = s; back > lo; --back) {
                SegmentId ctx = pts[back - 1].segment;
                auto& slot = nd->children[ctx];
                if (!slot) slot = std::make_unique<TrieNode>();
                nd = slot.get();
                nd->add_observation(pts[s].segment);
            }
        }
    }
    return model;
}

SegmentId predict_next(const SpatialModel& model, std::span<const SegmentId> context) {
    const TrieNode* nd = model.root.get();
    const TrieNode* deepest = nullptr;
    std::size_t depth = 0;
    for (std::size_t back = context.size(); back > 0 && depth < static_cast<std::size_t>(model.order); --back) {
        const TrieNode* next = nd->child(context[back - 1]);
        if (!next) break;
        nd = next;
        deepest = next;
        ++depth;
    }
    return deepest ? deepest->pred : kNoSegment;
}

bool SpatialCompressor::feed(SegmentId segment) {
    bool keep;
    if (position_ == 0) {
        keep = true;
    } else {
        keep = predict_next(*model_, context_) != segment;
    }
    context_.push_back(segment);
    if (context_.size() > static_cast<std::size_t>(model_->order))
        context_.erase(context_.begin());
    ++position_;
    return keep;
}

CompressedSpatial spatial_compress(const SpatialModel& model, const Trajectory& traj) {
    if (traj.points.empty()) throw ValidationError("cannot compress an empty trajectory");
    CompressedSpatial comp;
    comp.object = traj.object;
    SpatialCompressor state(model);
    for (const auto& p : traj.points) {
        const std::uint32_t pos = state.position();
        if (state.feed(p.segment)) comp.kept.emplace_back(pos, p.segment);
    }
    return comp;
}

std::vector<SegmentId> spatial_decompress(const SpatialModel& model, const CompressedSpatial& comp,
                                          std::size_t original_length) {
    if (comp.kept.empty() || comp.kept.front().first != 0)
        throw ValidationError("compressed spatial trajectory must keep position 0");
    if (original_length < comp.kept.size())
        throw ValidationError("original length shorter than the kept list");

    std::vector<SegmentId> out;
    out.reserve(original_length);
    std::size_t next_kept = 0;
    for (std::size_t pos = 0; pos < original_length; ++pos) {
        if (next_kept < comp.kept.size() && comp.kept[next_kept].first == pos) {
            out.push_back(comp.kept[next_kept].second);
            ++next_kept;
            continue;
        }
        SegmentId pred = predict_next(model, out);
        if (pred == kNoSegment)
            throw ValidationError("corrupt compressed trajectory for '" + comp.object +
                                  "': no prediction at a suppressed position");
        out.push_back(pred);
    }
    if (next_kept != comp.kept.size())
        throw ValidationError("kept position beyond the original length");
    return out;
}

double empirical_block_entropy(const SpatialModel& model, std::span<const Trajectory> test) {
    if (test.empty()) throw ValidationError("empty test set");
    std::uint64_t total = 0;
    std::uint64_t missed = 0;
    std::vector<SegmentId> seq;
    for (const auto& traj : test) {
        seq.clear();
        for (const auto& p : traj.points) seq.push_back(p.segment);
        for (std::size_t s = 1; s < seq.size(); ++s) {
            ++total;
            if (predict_next(model, std::span(seq.data(), s)) != seq[s]) ++missed;
        }
    }
    if (total == 0) throw ValidationError("no predictable positions in the test set");
    return static_cast<double>(missed) / static_cast<double>(total);
}

std::vector<CompressedSpatial> compress_all_serial(const SpatialModel& model, std::span<const Trajectory> trajs) {
    std::vector<CompressedSpatial> out(trajs.size());
    for (std::size_t i = 0; i < trajs.size(); ++i) out[i] = spatial_compress(model, trajs[i]);
    return out;
}

std::vector<CompressedSpatial> compress_all(const SpatialModel& model, std::span<const Trajectory> trajs, int workers) {
    if (workers <= 1) return compress_all_serial(model, trajs);
    std::vector<CompressedSpatial> out(trajs.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16) num_threads(workers)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(trajs.size()); ++i)
        out[static_cast<std::size_t>(i)] = spatial_compress(model, trajs[static_cast<std::size_t>(i)]);
    return out;
}

namespace {

void serialize_node(const TrieNode* nd, std::vector<SegmentId>& path, const RoadNetwork& net, std::string& out) {
    if (!path.empty()) {
        for (std::size_t i = 0; i < path.size(); ++i) {
            if (i) out += ';';
            out += net.name(path[i]);
        }
        out += '|';
        bool first = true;
        for (const auto& [seg, c] : nd->count) {
            if (!first) out += ';';
            first = false;
            out += net.name(seg);
            out += ':';
            out += std::to_string(c);
        }
        out += '|';
        out += nd->pred == kNoSegment ? "-" : net.name(nd->pred);
        out += '\n';
    }
    for (const auto& [seg, child] : nd->children) {
        path.push_back(seg);
        serialize_node(child.get(), path, net, out);
        path.pop_back();
    }
}

}  // namespace

std::string serialize_spatial(const SpatialModel& model, const RoadNetwork& net) {
    std::string out = "order=" + std::to_string(model.order) +
                      ",trained=" + std::to_string(model.trained_update_count) + "\n";
    std::vector<SegmentId> path;
    serialize_node(model.root.get(), path, net, out);
    return out;
}

SpatialModel parse_spatial(std::string_view source, const RoadNetwork& net) {
    SpatialModel model;
    std::size_t line_no = 0;
    std::size_t start = 0;
    bool header_seen = false;
    while (start <= source.size()) {
        std::size_t end = source.find('\n', start);
        if (end == std::string_view::npos) end = source.size();
        std::string_view line = trim(source.substr(start, end - start));
        bool at_eof = end == source.size();
        start = end + 1;
        ++line_no;
        if (line.empty()) {
            if (at_eof) break;
            continue;
        }
        if (!header_seen) {
            auto fields = split(line, ',');
            if (fields.size() != 2 || !fields[0].starts_with("order=") || !fields[1].starts_with("trained="))
                throw ParseError("bad spatial model header", line_no);
            auto parse_u64 = [&](std::string_view f) {
                std::uint64_t v = 0;
                auto res = std::from_chars(f.data(), f.data() + f.size(), v);
                if (res.ec != std::errc()) throw ParseError("bad header number", line_no);
                return v;
            };
            model.order = static_cast<int>(parse_u64(fields[0].substr(6)));
            model.trained_update_count = parse_u64(fields[1].substr(8));
            header_seen = true;
            if (at_eof) break;
            continue;
        }
        auto parts = split(line, '|');
        if (parts.size() != 3) throw ParseError("expected path|counts|pred", line_no);
        TrieNode* nd = model.root.get();
        for (auto seg_name : split(parts[0], ';')) {
            SegmentId id = net.find(trim(seg_name));
            if (id == kNoSegment) throw ValidationError("unknown segment in spatial model: " + std::string(seg_name));
            auto& slot = nd->children[id];
            if (!slot) slot = std::make_unique<TrieNode>();
            nd = slot.get();
        }
        if (!trim(parts[1]).empty()) {
            for (auto pair : split(parts[1], ';')) {
                auto kv = split(pair, ':');
                if (kv.size() != 2) throw ParseError("bad count entry", line_no);
                SegmentId id = net.find(trim(kv[0]));
                if (id == kNoSegment) throw ValidationError("unknown segment in count table");
                std::uint64_t c = 0;
                auto f = trim(kv[1]);
                auto res = std::from_chars(f.data(), f.data() + f.size(), c);
                if (res.ec != std::errc()) throw ParseError("bad count", line_no);
                nd->count[id] = c;
            }
        }
        auto pred_name = trim(parts[2]);
        nd->pred = pred_name == "-" ? kNoSegment : net.find(pred_name);
        if (pred_name != "-" && nd->pred == kNoSegment)
            throw ValidationError("unknown pred segment in spatial model");
        if (at_eof) break;
    }
    if (!header_seen) throw ValidationError("spatial model file missing header");
    return model;
}

}  // namespace ontrac
