#include "ontrac/ttcomp.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace ontrac {

double fuse(double t_hat, double w_hat, double t_bar, double sigma_sq) {
    if (w_hat < 0.0) throw ValidationError("negative model variance");
    if (!(sigma_sq > 0.0)) {
        if (w_hat == 0.0) throw ValidationError("fuse with both variances zero");
        throw ValidationError("observation variance must be positive");
    }
    return (t_hat * sigma_sq + t_bar * w_hat) / (w_hat + sigma_sq);
}

TemporalCompressor::TemporalCompressor(const TravelTimeModel& model, const RoadNetwork& net, double lambda)
    : model_(&model), net_(&net), lambda_(lambda) {
    if (!(lambda > 0.0)) throw ValidationError("lambda must be positive");
}

std::optional<TemporalAnchor> TemporalCompressor::feed(SegmentId segment, std::optional<double> timestamp) {
    if (!net_->valid(segment)) throw ValidationError("unknown segment fed to the temporal compressor");
    const auto seg = static_cast<std::size_t>(segment);
    state_.t_hat += model_->phi[seg];
    state_.w_hat += model_->omega[seg] * model_->omega[seg];
    state_.d += net_->length(segment);
    const std::uint32_t pos = position_++;
    if (!timestamp) return std::nullopt;

    std::optional<TemporalAnchor> kept;
    if (!anchored_) {
        state_.t_star = *timestamp;
        state_.tau = *timestamp;
        kept = TemporalAnchor{pos, state_.d, state_.t_star};
        anchored_ = true;
    } else {
        const double gap = *timestamp - last_obs_time_;
        if (!(gap > 0.0)) throw ValidationError("non-increasing observed timestamps");
        const double sigma = gps_temporal_error(model_->sigma_star, gap, state_.d - last_obs_d_);
        state_.t_star += fuse(state_.t_hat, state_.w_hat, gap, sigma * sigma);
        state_.tau += state_.t_hat;
        if (std::abs(state_.tau - state_.t_star) > lambda_) {
            kept = TemporalAnchor{pos, state_.d, state_.t_star};
            state_.tau = state_.t_star;
        }
    }
    last_obs_time_ = *timestamp;
    last_obs_d_ = state_.d;
    state_.t_hat = 0.0;
    state_.w_hat = 0.0;
    return kept;
}

CompressedTemporal temporal_compress(const TravelTimeModel& model, const Trajectory& traj, const RoadNetwork& net,
                                     double lambda) {
    if (traj.points.empty()) throw ValidationError("empty trajectory");
    if (!traj.points.front().timestamp)
        throw ValidationError("trajectory '" + traj.object + "' must start with an observed timestamp");
    model.validate(net.size());

    CompressedTemporal comp;
    comp.object = traj.object;
    TemporalCompressor state(model, net, lambda);
    for (const auto& p : traj.points) {
        if (auto kept = state.feed(p.segment, p.timestamp)) comp.kept.push_back(*kept);
    }
    return comp;
}

std::vector<double> recover_exit_times(std::span<const double> phi_per_position,
                                       std::span<const std::size_t> anchor_positions,
                                       std::span<const double> anchor_times, double start_time) {
    const std::size_t m = phi_per_position.size();
    std::vector<double> rec(m);
    if (anchor_positions.empty()) {
        double t = start_time;
        for (std::size_t p = 0; p < m; ++p) {
            t += phi_per_position[p];
            rec[p] = t;
        }
        return rec;
    }

    // Before the first anchor: raw model means, backwards.
    {
        double t = anchor_times[0];
        for (std::size_t p = anchor_positions[0] + 1; p-- > 0;) {
            rec[p] = t;
            t -= phi_per_position[p];
        }
    }
    // Between anchors: proportional to the model means, rescaled to land on
    // the next anchor exactly.
    for (std::size_t a = 0; a + 1 < anchor_positions.size(); ++a) {
        const std::size_t lo = anchor_positions[a];
        const std::size_t hi = anchor_positions[a + 1];
        double total = 0.0;
        for (std::size_t p = lo + 1; p <= hi; ++p) total += phi_per_position[p];
        const double span = anchor_times[a + 1] - anchor_times[a];
        double mass = 0.0;
        for (std::size_t p = lo + 1; p <= hi; ++p) {
            mass += phi_per_position[p];
            rec[p] = anchor_times[a] + span * (mass / total);
        }
        rec[hi] = anchor_times[a + 1];
    }
    // Tail: raw model means.
    {
        double t = anchor_times.back();
        for (std::size_t p = anchor_positions.back() + 1; p < m; ++p) {
            t += phi_per_position[p];
            rec[p] = t;
        }
    }
    return rec;
}

std::vector<double> temporal_recover(const TravelTimeModel& model, const CompressedTemporal& comp,
                                     std::span<const SegmentId> spatial, const RoadNetwork& net,
                                     double start_time) {
    model.validate(net.size());
    const std::size_t m = spatial.size();
    std::vector<double> exit_d(m);
    std::vector<double> phi(m);
    double acc = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
        if (!net.valid(spatial[p])) throw ValidationError("unknown segment in spatial sequence");
        acc += net.length(spatial[p]);
        exit_d[p] = acc;
        phi[p] = model.phi[static_cast<std::size_t>(spatial[p])];
    }

    // Align each anchor to a position by cumulative distance.
    std::vector<std::size_t> anchor_pos(comp.kept.size());
    std::vector<double> anchor_t(comp.kept.size());
    std::size_t cursor = 0;
    for (std::size_t a = 0; a < comp.kept.size(); ++a) {
        while (cursor < m && exit_d[cursor] < comp.kept[a].d - 1e-6) ++cursor;
        if (cursor >= m || std::abs(exit_d[cursor] - comp.kept[a].d) > 1e-6)
            throw ValidationError("compressed temporal trajectory for '" + comp.object +
                                  "' does not align with the spatial sequence");
        anchor_pos[a] = cursor;
        anchor_t[a] = comp.kept[a].t_star;
    }

    return recover_exit_times(phi, anchor_pos, anchor_t, start_time);
}

CompressedTrajectory compress_trajectory(const SpatialModel& spatial_model, const TravelTimeModel& tt_model,
                                         const Trajectory& traj, const RoadNetwork& net, double lambda) {
    CompressedTrajectory out;
    out.object = traj.object;
    out.spatial = spatial_compress(spatial_model, traj);
    out.temporal = temporal_compress(tt_model, traj, net, lambda);
    out.original_length = static_cast<std::uint32_t>(traj.points.size());
    if (traj.start_time) {
        out.start_time = *traj.start_time;
        out.has_start_time = true;
    }
    return out;
}

std::string serialize_compressed(std::span<const CompressedTrajectory> trajs, const RoadNetwork& net) {
    std::string out;
    for (const auto& ct : trajs) {
        for (const auto& [pos, seg] : ct.spatial.kept) {
            out += ct.object;
            out += ",S,";
            out += std::to_string(pos);
            out += ',';
            out += net.name(seg);
            out += '\n';
        }
        for (const auto& anchor : ct.temporal.kept) {
            out += ct.object;
            out += ",T,";
            out += format_double(anchor.d);
            out += ',';
            out += format_double(anchor.t_star);
            out += '\n';
        }
        out += ct.object;
        out += ",L,";
        out += std::to_string(ct.original_length);
        out += ',';
        if (ct.has_start_time) out += format_double(ct.start_time);
        out += '\n';
    }
    return out;
}

std::vector<CompressedTrajectory> parse_compressed(std::string_view source, const RoadNetwork& net) {
    std::vector<CompressedTrajectory> out;
    std::unordered_map<std::string, std::size_t> index;
    std::size_t line_no = 0;
    std::size_t start = 0;
    auto parse_d = [&](std::string_view f) {
        double v = 0.0;
        auto res = std::from_chars(f.data(), f.data() + f.size(), v);
        if (res.ec != std::errc() || res.ptr != f.data() + f.size())
            throw ParseError("bad number '" + std::string(f) + "'", line_no);
        return v;
    };
    while (start <= source.size()) {
        std::size_t end = source.find('\n', start);
        if (end == std::string_view::npos) end = source.size();
        std::string_view line = trim(source.substr(start, end - start));
        bool at_eof = end == source.size();
        start = end + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') {
            if (at_eof) break;
            continue;
        }
        auto fields = split(line, ',');
        if (fields.size() != 4) throw ParseError("expected 4 comma-separated fields", line_no);
        std::string object(trim(fields[0]));
        auto [it, inserted] = index.emplace(object, out.size());
        if (inserted) {
            out.emplace_back();
            out.back().object = object;
            out.back().spatial.object = object;
            out.back().temporal.object = object;
        }
        auto& ct = out[it->second];
        std::string_view kind = trim(fields[1]);
        if (kind == "S") {
            auto pos_field = trim(fields[2]);
            std::uint32_t pos = 0;
            auto res = std::from_chars(pos_field.data(), pos_field.data() + pos_field.size(), pos);
            if (res.ec != std::errc()) throw ParseError("bad position", line_no);
            SegmentId seg = net.find(trim(fields[3]));
            if (seg == kNoSegment)
                throw ValidationError("unknown segment '" + std::string(trim(fields[3])) + "' in compressed file");
            if (!ct.spatial.kept.empty() && pos <= ct.spatial.kept.back().first)
                throw ValidationError("kept spatial positions must be strictly increasing");
            ct.spatial.kept.emplace_back(pos, seg);
        } else if (kind == "T") {
            TemporalAnchor a;
            a.position = std::numeric_limits<std::uint32_t>::max();  // aligned later by distance
            a.d = parse_d(trim(fields[2]));
            a.t_star = parse_d(trim(fields[3]));
            if (!ct.temporal.kept.empty() &&
                (a.d <= ct.temporal.kept.back().d || a.t_star <= ct.temporal.kept.back().t_star))
                throw ValidationError("kept temporal anchors must be strictly increasing");
            ct.temporal.kept.push_back(a);
        } else if (kind == "L") {
            std::uint32_t len = 0;
            auto len_field = trim(fields[2]);
            auto res = std::from_chars(len_field.data(), len_field.data() + len_field.size(), len);
            if (res.ec != std::errc()) throw ParseError("bad length", line_no);
            ct.original_length = len;
            auto st = trim(fields[3]);
            if (!st.empty()) {
                ct.start_time = parse_d(st);
                ct.has_start_time = true;
            }
        } else {
            throw ParseError("unknown record kind '" + std::string(kind) + "'", line_no);
        }
        if (at_eof) break;
    }
    for (const auto& ct : out) {
        if (ct.original_length == 0) throw ValidationError("object '" + ct.object + "' has no L record");
        if (ct.spatial.kept.empty() || ct.spatial.kept.front().first != 0)
            throw ValidationError("object '" + ct.object + "' does not keep position 0");
    }
    return out;
}

}  // namespace ontrac
