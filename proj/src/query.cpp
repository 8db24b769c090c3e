#include "ontrac/query.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ontrac {

namespace {

double entry_of_position0(const CompressedTrajectory& comp, const TravelTimeModel& model,
                          std::span<const SegmentId> segments, std::span<const double> exits) {
    if (comp.has_start_time) return comp.start_time;
    return exits[0] - model.phi[static_cast<std::size_t>(segments[0])];
}

}  // namespace

DecompressedTrajectory full_decompress(const CompressedTrajectory& comp, const SpatialModel& spatial_model,
                                       const TravelTimeModel& tt_model, const RoadNetwork& net) {
    DecompressedTrajectory out;
    out.segments = spatial_decompress(spatial_model, comp.spatial, comp.original_length);
    out.exit_times = temporal_recover(tt_model, comp.temporal, out.segments, net, comp.start_time);
    out.entry_time = entry_of_position0(comp, tt_model, out.segments, out.exit_times);
    return out;
}

DecompressedTrajectory recovered_timeline(const Trajectory& traj, const TravelTimeModel& tt_model,
                                          const RoadNetwork& net) {
    tt_model.validate(net.size());
    DecompressedTrajectory out;
    out.segments.reserve(traj.points.size());
    std::vector<double> phi;
    phi.reserve(traj.points.size());
    std::vector<std::size_t> anchor_pos;
    std::vector<double> anchor_t;
    for (std::size_t p = 0; p < traj.points.size(); ++p) {
        const auto& pt = traj.points[p];
        if (!net.valid(pt.segment)) throw ValidationError("unknown segment in trajectory");
        out.segments.push_back(pt.segment);
        phi.push_back(tt_model.phi[static_cast<std::size_t>(pt.segment)]);
        if (pt.timestamp) {
            anchor_pos.push_back(p);
            anchor_t.push_back(*pt.timestamp);
        }
    }
    out.exit_times = recover_exit_times(phi, anchor_pos, anchor_t, traj.start_time.value_or(0.0));
    if (traj.start_time)
        out.entry_time = *traj.start_time;
    else if (!out.exit_times.empty())
        out.entry_time = out.exit_times[0] - phi[0];
    return out;
}

std::size_t locate(std::span<const double> exit_times, double entry_time, double t) {
    if (exit_times.empty()) throw OutOfRangeError("empty trajectory");
    if (t < entry_time) throw OutOfRangeError("query time precedes the trajectory start");
    auto it = std::lower_bound(exit_times.begin(), exit_times.end(), t);
    if (it == exit_times.end()) throw OutOfRangeError("query time is past the trajectory end");
    return static_cast<std::size_t>(it - exit_times.begin());
}

namespace {

// Up to two distinct candidate predictions; two means ambiguous.
struct PredSet {
    int count = 0;
    SegmentId first = kNoSegment;

    void add(SegmentId s) {
        if (count == 0) {
            first = s;
            count = 1;
        } else if (s != first) {
            count = 2;
        }
    }
};

// Walks the trie by the known recent context. When the walk consumes the whole
// known context without reaching depth k and older segments exist but are
// unknown, every deeper node is a possible true match, so its pred is a
// possible prediction. Collection stops at the second distinct value.
void collect_subtree_preds(const TrieNode* nd, int remaining, PredSet& preds) {
    preds.add(nd->pred);
    if (preds.count >= 2 || remaining == 0) return;
    for (const auto& [seg, child] : nd->children) {
        collect_subtree_preds(child.get(), remaining - 1, preds);
        if (preds.count >= 2) return;
    }
}

PredSet possible_preds(const SpatialModel& model, std::span<const SegmentId> known, bool prefix_unknown) {
    const TrieNode* nd = model.root.get();
    std::size_t depth = 0;
    const std::size_t max_depth = static_cast<std::size_t>(model.order);
    while (depth < max_depth && depth < known.size()) {
        const TrieNode* next = nd->child(known[known.size() - 1 - depth]);
        if (!next) break;
        nd = next;
        ++depth;
    }
    PredSet preds;
    const bool walk_exhausted_known = depth == known.size() && depth < max_depth;
    if (!walk_exhausted_known || !prefix_unknown) {
        preds.add(nd == model.root.get() ? kNoSegment : nd->pred);
        return preds;
    }
    collect_subtree_preds(nd, static_cast<int>(max_depth - depth), preds);
    return preds;
}

struct Replay {
    bool unique = true;
    std::size_t window_start = 0;
    std::vector<SegmentId> segments;  // positions [window_start, end]
};

// Reconstructs positions [window_start, end] from the kept spatial entries.
// `unique` reports whether every suppressed position had a single possible
// prediction given that segments before window_start are unknown. `final_vals`
// memoizes positions already proven unique under an earlier (shorter) window:
// extra context can never change them, so they are copied, not re-derived.
Replay replay_window(const CompressedTrajectory& comp, const SpatialModel& model, std::size_t kept_from,
                     std::size_t end, std::vector<SegmentId>& final_vals) {
    const auto& kept = comp.spatial.kept;
    const std::size_t window_start = kept[kept_from].first;
    const bool prefix_unknown = window_start > 0;

    Replay r;
    r.window_start = window_start;
    r.segments.reserve(end - window_start + 1);
    std::size_t next_kept = kept_from;
    for (std::size_t pos = window_start; pos <= end; ++pos) {
        while (next_kept < kept.size() && kept[next_kept].first < pos) ++next_kept;
        if (next_kept < kept.size() && kept[next_kept].first == pos) {
            r.segments.push_back(kept[next_kept].second);
            ++next_kept;
            continue;
        }
        if (final_vals[pos] != kNoSegment) {
            r.segments.push_back(final_vals[pos]);
            continue;
        }
        PredSet options = possible_preds(model, r.segments, prefix_unknown);
        if (options.count != 1) {
            r.unique = false;
            return r;
        }
        if (options.first == kNoSegment)
            throw ValidationError("corrupt compressed trajectory for '" + comp.object +
                                  "': no prediction at a suppressed position");
        final_vals[pos] = options.first;
        r.segments.push_back(options.first);
    }
    return r;
}

}  // namespace

PartialWindow partial_decompress(const CompressedTrajectory& comp, const SpatialModel& spatial_model,
                                 const TravelTimeModel& tt_model, const RoadNetwork& net, double t) {
    tt_model.validate(net.size());
    const auto& anchors = comp.temporal.kept;
    const std::size_t length = comp.original_length;
    bool anchors_usable = !anchors.empty();
    for (const auto& a : anchors)
        if (a.position == std::numeric_limits<std::uint32_t>::max() || a.position >= length) anchors_usable = false;

    if (!anchors_usable) {
        // Text-parsed anchors carry no positions; reconstruct fully.
        DecompressedTrajectory full = full_decompress(comp, spatial_model, tt_model, net);
        PartialWindow w;
        w.first_position = 0;
        w.segments = std::move(full.segments);
        w.exit_times = std::move(full.exit_times);
        w.entries_consulted = comp.spatial.kept.size() + anchors.size();
        return w;
    }

    // Zone around t: before the first anchor, between two anchors, or past
    // the last anchor.
    std::size_t zone_lo_pos = 0;   // position of the anchor opening the zone
    std::size_t zone_hi_pos = 0;   // position closing it (MID only)
    double zone_lo_time = 0.0;
    double zone_hi_time = 0.0;
    enum class Zone { Before, Mid, Tail } zone;
    std::size_t anchors_used = 1;
    if (t <= anchors.front().t_star) {
        zone = Zone::Before;
        zone_lo_pos = anchors.front().position;
        zone_lo_time = anchors.front().t_star;
    } else if (t > anchors.back().t_star) {
        zone = Zone::Tail;
        zone_lo_pos = anchors.back().position;
        zone_lo_time = anchors.back().t_star;
    } else {
        std::size_t a = 0;
        while (a + 1 < anchors.size() && anchors[a + 1].t_star < t) ++a;
        zone = Zone::Mid;
        zone_lo_pos = anchors[a].position;
        zone_lo_time = anchors[a].t_star;
        zone_hi_pos = anchors[a + 1].position;
        zone_hi_time = anchors[a + 1].t_star;
        anchors_used = 2;
    }

    const auto& kept = comp.spatial.kept;
    const std::size_t k = static_cast<std::size_t>(spatial_model.order);
    std::size_t kept_from = 0;
    if (zone != Zone::Before) {
        const std::size_t target = zone_lo_pos + 1 > k ? zone_lo_pos + 1 - k : 0;
        while (kept_from + 1 < kept.size() && kept[kept_from + 1].first <= target) ++kept_from;
    }
    const std::size_t replay_end = zone == Zone::Mid ? zone_hi_pos : zone_lo_pos;

    Replay replay;
    std::vector<SegmentId> final_vals(length, kNoSegment);
    std::size_t back_step = 1;  // geometric, so the restarts stay linear overall
    auto attempt_to = [&](std::size_t end) {
        while (true) {
            replay = replay_window(comp, spatial_model, kept_from, end, final_vals);
            if (replay.unique) return;
            if (kept_from == 0)
                throw ValidationError("ambiguity at trajectory start despite full context");  // cannot happen
            kept_from = kept_from >= back_step ? kept_from - back_step : 0;
            back_step *= 2;
        }
    };
    attempt_to(replay_end);

    PartialWindow w;
    auto count_entries = [&](std::size_t last_pos) {
        std::size_t kept_consulted = 0;
        for (std::size_t i = kept_from; i < kept.size() && kept[i].first <= last_pos; ++i) ++kept_consulted;
        w.entries_consulted = kept_consulted + anchors_used;
    };

    if (zone == Zone::Tail) {
        // Extend one position at a time on raw model means until the clock
        // reaches t; the uniqueness machinery runs inline so there are no
        // batch restarts.
        w.first_position = zone_lo_pos;
        w.segments.push_back(replay.segments[zone_lo_pos - replay.window_start]);
        w.exit_times.push_back(zone_lo_time);
        double t_acc = zone_lo_time;
        std::size_t next_kept = kept_from;
        std::size_t pos = zone_lo_pos + 1;
        while (pos < length && t_acc < t) {
            while (next_kept < kept.size() && kept[next_kept].first < pos) ++next_kept;
            SegmentId val;
            if (next_kept < kept.size() && kept[next_kept].first == pos) {
                val = kept[next_kept].second;
            } else if (final_vals[pos] != kNoSegment) {
                val = final_vals[pos];
            } else {
                PredSet options =
                    possible_preds(spatial_model, replay.segments, replay.window_start > 0);
                if (options.count != 1) {
                    if (kept_from == 0)
                        throw ValidationError("ambiguity at trajectory start despite full context");
                    kept_from = kept_from >= back_step ? kept_from - back_step : 0;
                    back_step *= 2;
                    attempt_to(pos - 1);
                    continue;  // retry this position with the longer context
                }
                if (options.first == kNoSegment)
                    throw ValidationError("corrupt compressed trajectory for '" + comp.object +
                                          "': no prediction at a suppressed position");
                final_vals[pos] = options.first;
                val = options.first;
            }
            replay.segments.push_back(val);
            t_acc += tt_model.phi[static_cast<std::size_t>(val)];
            w.segments.push_back(val);
            w.exit_times.push_back(t_acc);
            ++pos;
        }
        if (t_acc < t) throw OutOfRangeError("query time is past the trajectory end");
        count_entries(pos - 1);
        return w;
    }

    const std::size_t window_start = replay.window_start;
    std::vector<double> phi(replay.segments.size());
    for (std::size_t i = 0; i < replay.segments.size(); ++i)
        phi[i] = tt_model.phi[static_cast<std::size_t>(replay.segments[i])];

    auto slice = [&](std::size_t from_pos, std::size_t to_pos, std::span<const double> rec) {
        w.first_position = from_pos;
        w.segments.assign(replay.segments.begin() + static_cast<std::ptrdiff_t>(from_pos - window_start),
                          replay.segments.begin() + static_cast<std::ptrdiff_t>(to_pos - window_start) + 1);
        w.exit_times.assign(rec.begin() + static_cast<std::ptrdiff_t>(from_pos - window_start),
                            rec.begin() + static_cast<std::ptrdiff_t>(to_pos - window_start) + 1);
    };

    if (zone == Zone::Before) {
        std::size_t rel[] = {zone_lo_pos - window_start};
        double times[] = {zone_lo_time};
        auto rec = recover_exit_times(phi, rel, times, 0.0);
        slice(window_start, zone_lo_pos, rec);
        double entry0 = comp.has_start_time
                            ? comp.start_time
                            : rec[0] - tt_model.phi[static_cast<std::size_t>(replay.segments[0])];
        if (t < entry0) throw OutOfRangeError("query time precedes the trajectory start");
    } else {
        std::size_t rel[] = {zone_lo_pos - window_start, zone_hi_pos - window_start};
        double times[] = {zone_lo_time, zone_hi_time};
        auto rec = recover_exit_times(phi, rel, times, 0.0);
        slice(zone_lo_pos, zone_hi_pos, rec);
    }
    count_entries(replay_end);
    return w;
}

WhereResult where_query(const CompressedTrajectory& comp, const SpatialModel& spatial_model,
                        const TravelTimeModel& tt_model, const RoadNetwork& net, double t) {
    PartialWindow w = partial_decompress(comp, spatial_model, tt_model, net, t);
    double entry;
    if (w.first_position == 0) {
        entry = comp.has_start_time ? comp.start_time
                                    : w.exit_times[0] - tt_model.phi[static_cast<std::size_t>(w.segments[0])];
    } else {
        entry = w.exit_times[0];  // zone opens at an anchor whose time precedes t
    }
    std::size_t idx = locate(w.exit_times, entry, t);
    WhereResult res;
    res.segment = w.segments[idx];
    res.recovered_time = idx == 0 ? entry : w.exit_times[idx - 1];
    res.context_length = w.entries_consulted;
    return res;
}

WhereResult where_query_full(const CompressedTrajectory& comp, const SpatialModel& spatial_model,
                             const TravelTimeModel& tt_model, const RoadNetwork& net, double t) {
    DecompressedTrajectory full = full_decompress(comp, spatial_model, tt_model, net);
    std::size_t idx = locate(full.exit_times, full.entry_time, t);
    WhereResult res;
    res.segment = full.segments[idx];
    res.recovered_time = idx == 0 ? full.entry_time : full.exit_times[idx - 1];
    res.context_length = comp.spatial.kept.size() + comp.temporal.kept.size();
    return res;
}

}  // namespace ontrac
