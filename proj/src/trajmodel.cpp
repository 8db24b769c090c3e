#include "ontrac/trajmodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <unordered_map>
#include <unordered_set>

namespace ontrac {

namespace {

double parse_time(std::string_view field, std::size_t line_no) {
    double v = 0.0;
    auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size())
        throw ParseError("bad timestamp '" + std::string(field) + "'", line_no);
    if (!std::isfinite(v) || v < 0.0) throw ParseError("timestamp must be finite and >= 0", line_no);
    return v;
}

}  // namespace

TrajectoryStream parse_stream(std::string_view source, const RoadNetwork& net) {
    TrajectoryStream stream;
    std::unordered_map<std::string, double> last_time;
    std::unordered_set<std::string> closed;

    std::size_t line_no = 0;
    std::size_t start = 0;
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
        if (fields.size() != 3) throw ParseError("expected 3 comma-separated fields", line_no);
        std::string object(trim(fields[0]));
        std::string_view seg_name = trim(fields[1]);
        std::string_view time_field = trim(fields[2]);
        if (object.empty()) throw ParseError("empty object id", line_no);

        if (seg_name == "END") {
            if (!time_field.empty()) throw ParseError("END marker carries no timestamp", line_no);
            closed.insert(object);
            if (at_eof) break;
            continue;
        }
        if (closed.count(object))
            throw ValidationError("object '" + object + "' has updates after its END marker");

        Update u;
        u.object = std::move(object);
        u.segment = net.find(seg_name);
        if (u.segment == kNoSegment)
            throw ValidationError("unknown segment '" + std::string(seg_name) + "' for object '" + u.object + "'");
        if (!time_field.empty()) {
            double t = parse_time(time_field, line_no);
            auto it = last_time.find(u.object);
            if (it != last_time.end() && t <= it->second)
                throw ValidationError("non-monotone timestamp for object '" + u.object + "'");
            last_time[u.object] = t;
            u.timestamp = t;
        }
        stream.updates.push_back(std::move(u));
        if (at_eof) break;
    }
    return stream;
}

TrajectoryStream parse_stream_file(const std::string& path, const RoadNetwork& net) {
    return parse_stream(read_file(path), net);
}

std::string serialize_stream(const TrajectoryStream& stream, const RoadNetwork& net) {
    std::string out;
    for (const auto& u : stream.updates) {
        out += u.object;
        out += ',';
        out += net.name(u.segment);
        out += ',';
        if (u.timestamp) out += format_double(*u.timestamp);
        out += '\n';
    }
    return out;
}

std::vector<Trajectory> group_by_object(const TrajectoryStream& stream) {
    std::vector<Trajectory> out;
    std::unordered_map<std::string, std::size_t> index;
    for (const auto& u : stream.updates) {
        auto [it, inserted] = index.emplace(u.object, out.size());
        if (inserted) {
            out.emplace_back();
            out.back().object = u.object;
        }
        out[it->second].points.push_back({u.segment, u.timestamp});
    }
    return out;
}

std::pair<std::vector<Trajectory>, std::vector<Trajectory>> split_train_test(const std::vector<Trajectory>& trajectories,
                                                                             double train_fraction,
                                                                             std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ValidationError("train_fraction must be in (0,1)");
    if (trajectories.size() < 2) throw ValidationError("need at least 2 trajectories to split");

    // Fisher-Yates with an explicit generator so the split does not depend on
    // the standard library's shuffle implementation.
    std::vector<std::size_t> order(trajectories.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed ? seed : 1);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(trajectories.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, trajectories.size() - 1);

    std::pair<std::vector<Trajectory>, std::vector<Trajectory>> result;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_train ? result.first : result.second).push_back(trajectories[order[i]]);
    return result;
}

}  // namespace ontrac
