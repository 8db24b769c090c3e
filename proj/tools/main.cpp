#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ontrac/query.hpp"
#include "ontrac/store.hpp"
#include "ontrac/synth.hpp"
#include "ontrac/ttlearn.hpp"

using namespace ontrac;

namespace {

constexpr const char* kVersion = "0.3.0";

int default_workers() {
    if (const char* env = std::getenv("ONTRAC_WORKERS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    return 1;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Every file-producing run leaves a manifest next to its first output with
/// enough context to reproduce it.
struct ManifestWriter {
    std::string subcommand;
    std::vector<std::string> args;
    nlohmann::json inputs = nlohmann::json::object();
    std::uint64_t seed = 0;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    void add_input(const std::string& label, const std::string& path) {
        inputs[label] = {{"path", path}, {"fnv1a64", hex64(fnv1a64(read_file(path)))}};
    }
    void write(const std::string& beside_output) const {
        nlohmann::json m{{"tool", "ontrac"},
                         {"version", kVersion},
                         {"subcommand", subcommand},
                         {"args", args},
                         {"seed", seed},
                         {"inputs", inputs},
                         {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
        write_file(beside_output + ".manifest.json", m.dump(2) + "\n");
    }
};

struct LoadedModels {
    RoadNetwork net;
    SpatialModel spatial;
    TravelTimeModel tt;
};

void emit(const std::string& format, const std::string& csv, const nlohmann::json& json_value) {
    if (format == "json")
        std::cout << json_value.dump(2) << "\n";
    else
        std::cout << csv;
}

std::vector<Probe> load_probes(const std::string& path) {
    std::vector<Probe> probes;
    std::size_t line_no = 0;
    std::string content = read_file(path);
    std::size_t start = 0;
    while (start <= content.size()) {
        std::size_t end = content.find('\n', start);
        if (end == std::string::npos) end = content.size();
        std::string_view line = trim(std::string_view(content).substr(start, end - start));
        bool at_eof = end == content.size();
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.front() != '#') {
            auto fields = split(line, ',');
            if (fields.size() != 2) throw ParseError("expected object,t", line_no);
            probes.push_back({std::string(trim(fields[0])), std::atof(std::string(trim(fields[1])).c_str())});
        }
        if (at_eof) break;
    }
    return probes;
}

int cmd_entropy(const std::string& network_path, double damping, double tol, const std::string& format) {
    RoadNetwork net = load_network_file(network_path);
    auto pr = pagerank(net, damping, tol);
    double h = network_entropy(net, pr);
    double pi_min = 1.0, pi_max = 0.0;
    for (double p : pr.pi) {
        pi_min = std::min(pi_min, p);
        pi_max = std::max(pi_max, p);
    }
    std::string csv = "segments,damping,iterations,residual,pi_min,pi_max,h\n" + std::to_string(net.size()) + "," +
                      format_double(damping) + "," + std::to_string(pr.iterations) + "," +
                      format_double(pr.residual) + "," + format_double(pi_min) + "," + format_double(pi_max) + "," +
                      format_double(h) + "\n";
    emit(format, csv,
         {{"segments", net.size()},
          {"damping", damping},
          {"iterations", pr.iterations},
          {"residual", pr.residual},
          {"pi_min", pi_min},
          {"pi_max", pi_max},
          {"h", h}});
    return 0;
}

int cmd_synth(const SynthConfig& cfg, std::size_t rows, std::size_t cols, double segment_length,
              const std::string& out, const std::string& truth_out, const std::string& net_out,
              ManifestWriter& manifest) {
    RoadNetwork net = make_grid_network(rows, cols, segment_length);
    auto result = generate(net, cfg);
    write_file(out, serialize_stream(result.stream, net));
    if (!truth_out.empty()) write_file(truth_out, serialize_ground_truth(result.truth, net));
    if (!net_out.empty()) write_file(net_out, serialize_network(net));
    manifest.write(out);
    std::cerr << "wrote " << result.stream.size() << " updates over " << result.truth.size() << " trajectories\n";
    return 0;
}

int cmd_train_spatial(const std::string& network_path, const std::string& stream_path, int order,
                      const std::string& out, ManifestWriter& manifest) {
    RoadNetwork net = load_network_file(network_path);
    auto trajs = group_by_object(parse_stream_file(stream_path, net));
    SpatialModel model = spatial_training(net, trajs, order);
    write_file(out, serialize_spatial(model, net));
    manifest.write(out);
    std::cerr << "trained order-" << order << " model on " << trajs.size() << " trajectories ("
              << model.trained_update_count << " updates)\n";
    return 0;
}

int cmd_train_temporal(const std::string& network_path, const std::string& stream_path, TrainingConfig cfg,
                       double sigma_star, double delta, bool delta_given, const std::string& out,
                       const std::string& report_out, const std::string& format, ManifestWriter& manifest) {
    RoadNetwork net = load_network_file(network_path);
    auto trajs = group_by_object(parse_stream_file(stream_path, net));
    if (!delta_given) delta = estimate_delta(trajs, net);
    auto [model, report] = temporal_training(net, trajs, cfg, sigma_star, delta);
    write_file(out, serialize_tt_model(model, net));
    manifest.write(out);
    std::string csv = report.to_csv();
    if (!report_out.empty())
        write_file(report_out, csv);
    else
        emit(format, csv,
             {{"log_likelihood", report.log_likelihood},
              {"estep_log_likelihood", report.estep_log_likelihood},
              {"iteration_seconds", report.iteration_seconds},
              {"segments_with_data", report.segments_with_data},
              {"segments_defaulted", report.segments_defaulted},
              {"trajectories_used", report.trajectories_used},
              {"trajectories_skipped", report.trajectories_skipped}});
    std::cerr << "delta=" << format_double(delta) << " used=" << report.trajectories_used
              << " skipped=" << report.trajectories_skipped << "\n";
    return 0;
}

LoadedModels load_models(const std::string& network_path, const std::string& spatial_path,
                         const std::string& tt_path) {
    LoadedModels m;
    m.net = load_network_file(network_path);
    if (!spatial_path.empty()) m.spatial = parse_spatial(read_file(spatial_path), m.net);
    if (!tt_path.empty()) m.tt = parse_tt_model(read_file(tt_path), m.net);
    return m;
}

int cmd_compress(const LoadedModels& m, const std::string& stream_path, double lambda, const std::string& out,
                 ManifestWriter& manifest) {
    auto trajs = group_by_object(parse_stream_file(stream_path, m.net));
    std::vector<CompressedTrajectory> comp;
    comp.reserve(trajs.size());
    std::size_t updates = 0, kept = 0;
    for (const auto& t : trajs) {
        comp.push_back(compress_trajectory(m.spatial, m.tt, t, m.net, lambda));
        updates += t.size();
        kept += comp.back().spatial.kept.size() + comp.back().temporal.kept.size();
    }
    write_file(out, serialize_compressed(comp, m.net));
    manifest.write(out);
    std::cerr << "compressed " << updates << " updates to " << kept << " records (ratio "
              << format_double(static_cast<double>(updates) / static_cast<double>(kept)) << ")\n";
    return 0;
}

int cmd_decompress(const LoadedModels& m, const std::string& comp_path, const std::string& out,
                   ManifestWriter& manifest) {
    auto comp = parse_compressed(read_file(comp_path), m.net);
    std::string text;
    for (const auto& ct : comp) {
        auto full = full_decompress(ct, m.spatial, m.tt, m.net);
        for (std::size_t p = 0; p < full.segments.size(); ++p) {
            text += ct.object;
            text += ',';
            text += m.net.name(full.segments[p]);
            text += ',';
            text += format_double(full.exit_times[p]);
            text += '\n';
        }
    }
    write_file(out, text);
    manifest.write(out);
    std::cerr << "decompressed " << comp.size() << " trajectories\n";
    return 0;
}

int cmd_infer(const LoadedModels& m, const std::string& stream_path, const std::string& out) {
    auto trajs = group_by_object(parse_stream_file(stream_path, m.net));
    std::string csv = "object,position,segment,t_prime,exit_time\n";
    for (const auto& t : trajs) {
        auto inferred = infer_travel_times(m.tt, t, m.net);
        for (std::size_t v = 0; v < inferred.t_prime.size(); ++v) {
            const std::size_t pos = inferred.first_position + v;
            csv += t.object;
            csv += ',';
            csv += std::to_string(pos);
            csv += ',';
            csv += m.net.name(t.points[pos].segment);
            csv += ',';
            csv += format_double(inferred.t_prime[v]);
            csv += ',';
            csv += format_double(inferred.absolute[v]);
            csv += '\n';
        }
    }
    if (out.empty())
        std::cout << csv;
    else
        write_file(out, csv);
    return 0;
}

int cmd_where(const LoadedModels& m, const std::string& store_dir, const std::string& object, double t,
              const std::string& probes_path, const std::string& strategy, const std::string& format) {
    const std::uint64_t sh = fnv1a64(serialize_spatial(m.spatial, m.net));
    const std::uint64_t th = fnv1a64(serialize_tt_model(m.tt, m.net));
    const std::uint64_t nh = fnv1a64(serialize_network(m.net));
    nlohmann::json manifest = nlohmann::json::parse(read_file(store_dir + "/manifest.json"));
    const IngestMode mode = manifest.value("mode", "COMPRESSED") == "FULL" ? IngestMode::Full : IngestMode::Compressed;
    Store store(store_dir, mode, manifest.value("lambda", 0.0), sh, th, nh);

    std::vector<Probe> probes;
    if (!probes_path.empty())
        probes = load_probes(probes_path);
    else
        probes.push_back({object, t});

    std::string csv = "object,t,segment,recovered_entry,context_entries\n";
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& probe : probes) {
        const auto* comp = store.lookup(probe.object);
        if (!comp) throw NotFoundError("object '" + probe.object + "' not in store");
        WhereResult res = strategy == "full" ? where_query_full(*comp, m.spatial, m.tt, m.net, probe.t)
                                             : where_query(*comp, m.spatial, m.tt, m.net, probe.t);
        csv += probe.object + "," + format_double(probe.t) + "," + m.net.name(res.segment) + "," +
               format_double(res.recovered_time) + "," + std::to_string(res.context_length) + "\n";
        rows.push_back({{"object", probe.object},
                        {"t", probe.t},
                        {"segment", m.net.name(res.segment)},
                        {"recovered_entry", res.recovered_time},
                        {"context_entries", res.context_length}});
    }
    emit(format, csv, rows);
    return 0;
}

int cmd_bench_ingest(const LoadedModels& m, const std::string& stream_path, const std::string& store_dir,
                     double lambda, const std::string& mode, int runs, const std::string& format) {
    auto stream = parse_stream_file(stream_path, m.net);
    IngestMode im = mode == "full" ? IngestMode::Full : IngestMode::Compressed;
    BenchReport report = ingest(store_dir, stream, m.net, m.spatial, m.tt, lambda, im, runs);
    emit(format, BenchReport::csv_header() + "\n" + report.to_csv_row() + "\n",
         {{"mode", report.mode},
          {"inserts_per_sec", report.inserts_per_sec},
          {"bytes_on_disk", report.bytes_on_disk},
          {"updates_written", report.updates_written},
          {"seconds", report.seconds}});
    return 0;
}

int cmd_bench_query(const LoadedModels& m, const std::string& store_dir, double lambda, const std::string& mode,
                    const std::string& probes_path, const std::string& strategy, const std::string& format) {
    const std::uint64_t sh = fnv1a64(serialize_spatial(m.spatial, m.net));
    const std::uint64_t th = fnv1a64(serialize_tt_model(m.tt, m.net));
    const std::uint64_t nh = fnv1a64(serialize_network(m.net));
    Store store(store_dir, mode == "full" ? IngestMode::Full : IngestMode::Compressed, lambda, sh, th, nh);
    auto probes = load_probes(probes_path);
    auto result = query_bench(store, probes, m.net, m.spatial, m.tt,
                              strategy == "full" ? QueryStrategy::FullReconstruct : QueryStrategy::Partial);
    std::string csv = BenchReport::csv_header() + ",answered,unknown,out_of_range\n" + result.report.to_csv_row() +
                      "," + std::to_string(result.answered) + "," + std::to_string(result.unknown_objects) + "," +
                      std::to_string(result.out_of_range) + "\n";
    emit(format, csv,
         {{"mode", result.report.mode},
          {"queries_per_sec", result.report.queries_per_sec},
          {"answered", result.answered},
          {"unknown", result.unknown_objects},
          {"out_of_range", result.out_of_range}});
    return 0;
}

int cmd_repro(bool quick, const std::string& out_dir, std::uint64_t seed, int workers) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    auto path = [&](const char* name) { return out_dir + "/" + name; };

    const std::size_t grid = quick ? 6 : 10;
    const std::size_t n_train = quick ? 300 : 1200;
    const std::size_t n_test = quick ? 80 : 300;
    RoadNetwork net = make_grid_network(grid, grid, 150.0);
    write_file(path("grid.net"), serialize_network(net));

    SynthConfig cfg;
    cfg.mode = SynthMode::ShortestPath;
    cfg.n_trajectories = n_train + n_test;
    cfg.alpha = 0.5;
    cfg.speed_std = 3.0;
    cfg.gps_interval = 30.0;
    cfg.seed = seed;
    auto data = generate(net, cfg);
    auto [train_trajs, test_trajs] =
        split_train_test(group_by_object(data.stream),
                         static_cast<double>(n_train) / static_cast<double>(n_train + n_test), seed);

    // Re-emit the folds as streams so the CLI pipeline can be replayed by hand.
    auto fold_stream = [&](const std::vector<Trajectory>& fold) {
        TrajectoryStream s;
        for (const auto& t : fold)
            for (const auto& p : t.points) s.updates.push_back({t.object, p.segment, p.timestamp});
        return s;
    };
    TrajectoryStream train_stream = fold_stream(train_trajs);
    TrajectoryStream test_stream = fold_stream(test_trajs);
    write_file(path("train.stream"), serialize_stream(train_stream, net));
    write_file(path("test.stream"), serialize_stream(test_stream, net));

    SpatialModel sm = spatial_training(net, train_trajs, 2);
    write_file(path("model.sp"), serialize_spatial(sm, net));
    TrainingConfig tcfg;
    tcfg.iterations = 5;
    tcfg.parallelism = workers;
    double delta = estimate_delta(train_trajs, net);
    auto [tt, report] = temporal_training(net, train_trajs, tcfg, 5.0, delta);
    write_file(path("model.tt"), serialize_tt_model(tt, net));
    write_file(path("training_report.csv"), report.to_csv());

    {
        auto pr = pagerank(net, 0.85, 1e-10);
        std::string csv = "network,h\n";
        csv += "grid," + format_double(network_entropy(net, pr)) + "\n";
        write_file(path("entropy.csv"), csv);
    }

    {
        std::string csv = "lambda,updates,spatial_kept,temporal_kept,spatial_ratio,temporal_ratio\n";
        for (double lambda : {30.0, 60.0, 240.0}) {
            std::size_t updates = 0, s_kept = 0, t_kept = 0, observed = 0;
            std::vector<CompressedTrajectory> comp;
            for (const auto& t : test_trajs) {
                comp.push_back(compress_trajectory(sm, tt, t, net, lambda));
                updates += t.size();
                for (const auto& p : t.points) observed += p.timestamp ? 1 : 0;
                s_kept += comp.back().spatial.kept.size();
                t_kept += comp.back().temporal.kept.size();
            }
            if (lambda == 60.0) write_file(path("compressed_60.tc"), serialize_compressed(comp, net));
            csv += format_double(lambda) + "," + std::to_string(updates) + "," + std::to_string(s_kept) + "," +
                   std::to_string(t_kept) + "," +
                   format_double(static_cast<double>(updates) / static_cast<double>(s_kept)) + "," +
                   format_double(static_cast<double>(observed) / static_cast<double>(t_kept)) + "\n";
        }
        write_file(path("compression.csv"), csv);
    }

    {
        auto full = ingest(path("store_full"), test_stream, net, sm, tt, 60.0, IngestMode::Full, quick ? 1 : 3);
        auto compressed =
            ingest(path("store_comp"), test_stream, net, sm, tt, 60.0, IngestMode::Compressed, quick ? 1 : 3);
        std::string csv = BenchReport::csv_header() + "\n" + full.to_csv_row() + "\n" + compressed.to_csv_row() + "\n";
        write_file(path("bench_ingest.csv"), csv);

        const std::uint64_t sh = fnv1a64(serialize_spatial(sm, net));
        const std::uint64_t th = fnv1a64(serialize_tt_model(tt, net));
        const std::uint64_t nh = fnv1a64(serialize_network(net));
        Store store(path("store_comp"), IngestMode::Compressed, 60.0, sh, th, nh);
        std::vector<Probe> probes;
        std::string probe_csv;
        for (const auto& t : test_trajs) {
            const auto* comp = store.lookup(t.object);
            if (!comp || comp->temporal.kept.empty()) continue;
            const double probe_t = comp->temporal.kept.front().t_star + 1.0;
            probes.push_back({t.object, probe_t});
            probe_csv += t.object + "," + format_double(probe_t) + "\n";
        }
        write_file(path("probes.csv"), probe_csv);
        auto fast = query_bench(store, probes, net, sm, tt, QueryStrategy::Partial);
        auto slow = query_bench(store, probes, net, sm, tt, QueryStrategy::FullReconstruct);
        std::string qcsv = BenchReport::csv_header() + "\n" + fast.report.to_csv_row() + "\n" +
                           slow.report.to_csv_row() + "\n";
        write_file(path("bench_query.csv"), qcsv);

        std::string wcsv = "object,t,segment\n";
        for (std::size_t i = 0; i < std::min<std::size_t>(probes.size(), 20); ++i) {
            const auto* comp = store.lookup(probes[i].object);
            auto res = where_query(*comp, sm, tt, net, probes[i].t);
            wcsv += probes[i].object + "," + format_double(probes[i].t) + "," + net.name(res.segment) + "\n";
        }
        write_file(path("where_sample.csv"), wcsv);
    }
    std::cerr << "repro artifacts in " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ONTRAC: online map-matched trajectory compression"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string format = "csv";
    app.add_option("--format", format, "Report format")->check(CLI::IsMember({"csv", "json"}));

    auto* entropy_cmd = app.add_subcommand("entropy", "Random-walk update entropy of a network");
    std::string network_path, stream_path, out_path, truth_path, net_out, spatial_path, tt_path, comp_path;
    std::string store_dir, object_id, probes_path, strategy = "partial", mode = "compressed", report_path;
    double damping = 0.85, tol = 1e-10;
    entropy_cmd->add_option("--network", network_path)->required();
    entropy_cmd->add_option("--damping", damping);
    entropy_cmd->add_option("--tol", tol);

    auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic grid trajectories");
    SynthConfig synth_cfg;
    std::string synth_mode = "walk";
    std::size_t rows = 10, cols = 10;
    double segment_length = 150.0;
    synth_cmd->add_option("--mode", synth_mode)->check(CLI::IsMember({"walk", "sp"}));
    synth_cmd->add_option("--rows", rows);
    synth_cmd->add_option("--cols", cols);
    synth_cmd->add_option("--segment-length", segment_length);
    synth_cmd->add_option("--n", synth_cfg.n_trajectories);
    synth_cmd->add_option("--walk-length", synth_cfg.walk_length);
    synth_cmd->add_option("--speed-mean", synth_cfg.speed_mean);
    synth_cmd->add_option("--speed-std", synth_cfg.speed_std);
    synth_cmd->add_option("--alpha", synth_cfg.alpha);
    synth_cmd->add_option("--gps-interval", synth_cfg.gps_interval);
    synth_cmd->add_option("--seed", synth_cfg.seed);
    synth_cmd->add_option("--out", out_path)->required();
    synth_cmd->add_option("--truth", truth_path);
    synth_cmd->add_option("--net-out", net_out);

    auto* ts_cmd = app.add_subcommand("train-spatial", "Train the next-segment predictor");
    int order = 2;
    ts_cmd->add_option("--network", network_path)->required();
    ts_cmd->add_option("--stream", stream_path)->required();
    ts_cmd->add_option("--order", order);
    ts_cmd->add_option("--out", out_path)->required();

    auto* tt_cmd = app.add_subcommand("train-temporal", "Fit per-segment travel-time distributions");
    TrainingConfig tcfg;
    double sigma_star = 5.0, delta = 0.0;
    tcfg.parallelism = default_workers();
    tt_cmd->add_option("--network", network_path)->required();
    tt_cmd->add_option("--stream", stream_path)->required();
    tt_cmd->add_option("--iters", tcfg.iterations);
    tt_cmd->add_option("--sigma-star", sigma_star);
    auto* delta_opt = tt_cmd->add_option("--delta", delta, "Smoothness std; estimated from data when omitted");
    tt_cmd->add_option("--initial-speed", tcfg.initial_speed);
    tt_cmd->add_option("--omega-floor", tcfg.omega_floor);
    tt_cmd->add_option("--workers", tcfg.parallelism);
    tt_cmd->add_option("--out", out_path)->required();
    tt_cmd->add_option("--report", report_path);

    auto* comp_cmd = app.add_subcommand("compress", "Compress a stream against trained models");
    double lambda = 60.0;
    comp_cmd->add_option("--spatial-model", spatial_path)->required();
    comp_cmd->add_option("--tt-model", tt_path)->required();
    comp_cmd->add_option("--network", network_path)->required();
    comp_cmd->add_option("--stream", stream_path)->required();
    comp_cmd->add_option("--lambda", lambda);
    comp_cmd->add_option("--out", out_path)->required();

    auto* decomp_cmd = app.add_subcommand("decompress", "Reconstruct a compressed file");
    decomp_cmd->add_option("--spatial-model", spatial_path)->required();
    decomp_cmd->add_option("--tt-model", tt_path)->required();
    decomp_cmd->add_option("--network", network_path)->required();
    decomp_cmd->add_option("--comp", comp_path)->required();
    decomp_cmd->add_option("--out", out_path)->required();

    auto* infer_cmd = app.add_subcommand("infer", "Maximum-likelihood travel times for a stream");
    infer_cmd->add_option("--tt-model", tt_path)->required();
    infer_cmd->add_option("--network", network_path)->required();
    infer_cmd->add_option("--stream", stream_path)->required();
    infer_cmd->add_option("--out", out_path);

    auto* where_cmd = app.add_subcommand("where", "Locate an object at a time");
    double query_time = 0.0;
    where_cmd->add_option("--store", store_dir)->required();
    where_cmd->add_option("--spatial-model", spatial_path)->required();
    where_cmd->add_option("--tt-model", tt_path)->required();
    where_cmd->add_option("--network", network_path)->required();
    where_cmd->add_option("--object", object_id);
    where_cmd->add_option("--time", query_time);
    where_cmd->add_option("--probes", probes_path);
    where_cmd->add_option("--strategy", strategy)->check(CLI::IsMember({"partial", "full"}));

    auto* bench_cmd = app.add_subcommand("bench", "Throughput benchmarks");
    bench_cmd->require_subcommand(1);
    auto* bi_cmd = bench_cmd->add_subcommand("ingest", "Insert a stream into a fresh store");
    int runs = 3;
    bi_cmd->add_option("--network", network_path)->required();
    bi_cmd->add_option("--stream", stream_path)->required();
    bi_cmd->add_option("--spatial-model", spatial_path)->required();
    bi_cmd->add_option("--tt-model", tt_path)->required();
    bi_cmd->add_option("--store", store_dir)->required();
    bi_cmd->add_option("--lambda", lambda);
    bi_cmd->add_option("--mode", mode)->check(CLI::IsMember({"full", "compressed"}));
    bi_cmd->add_option("--runs", runs);
    auto* bq_cmd = bench_cmd->add_subcommand("query", "Answer where-probes from a store");
    bq_cmd->add_option("--network", network_path)->required();
    bq_cmd->add_option("--spatial-model", spatial_path)->required();
    bq_cmd->add_option("--tt-model", tt_path)->required();
    bq_cmd->add_option("--store", store_dir)->required();
    bq_cmd->add_option("--lambda", lambda);
    bq_cmd->add_option("--mode", mode)->check(CLI::IsMember({"full", "compressed"}));
    bq_cmd->add_option("--probes", probes_path)->required();
    bq_cmd->add_option("--strategy", strategy)->check(CLI::IsMember({"partial", "full"}));

    auto* repro_cmd = app.add_subcommand("repro", "Desk-scale end-to-end pipeline");
    bool quick = false;
    std::string out_dir = "repro_out";
    std::uint64_t repro_seed = 7;
    repro_cmd->add_flag("--quick", quick);
    repro_cmd->add_option("--out-dir", out_dir);
    repro_cmd->add_option("--seed", repro_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    ManifestWriter manifest;
    for (int i = 1; i < argc; ++i) manifest.args.emplace_back(argv[i]);
    manifest.seed = synth_cfg.seed;

    try {
        if (*entropy_cmd) return cmd_entropy(network_path, damping, tol, format);
        if (*synth_cmd) {
            manifest.subcommand = "synth";
            synth_cfg.mode = synth_mode == "walk" ? SynthMode::RandomWalk : SynthMode::ShortestPath;
            return cmd_synth(synth_cfg, rows, cols, segment_length, out_path, truth_path, net_out, manifest);
        }
        if (*ts_cmd) {
            manifest.subcommand = "train-spatial";
            manifest.add_input("network", network_path);
            manifest.add_input("stream", stream_path);
            return cmd_train_spatial(network_path, stream_path, order, out_path, manifest);
        }
        if (*tt_cmd) {
            manifest.subcommand = "train-temporal";
            manifest.add_input("network", network_path);
            manifest.add_input("stream", stream_path);
            return cmd_train_temporal(network_path, stream_path, tcfg, sigma_star, delta, delta_opt->count() > 0,
                                      out_path, report_path, format, manifest);
        }
        if (*comp_cmd) {
            manifest.subcommand = "compress";
            manifest.add_input("network", network_path);
            manifest.add_input("stream", stream_path);
            manifest.add_input("spatial_model", spatial_path);
            manifest.add_input("tt_model", tt_path);
            return cmd_compress(load_models(network_path, spatial_path, tt_path), stream_path, lambda, out_path,
                                manifest);
        }
        if (*decomp_cmd) {
            manifest.subcommand = "decompress";
            manifest.add_input("network", network_path);
            manifest.add_input("comp", comp_path);
            return cmd_decompress(load_models(network_path, spatial_path, tt_path), comp_path, out_path, manifest);
        }
        if (*infer_cmd)
            return cmd_infer(load_models(network_path, "", tt_path), stream_path, out_path);
        if (*where_cmd)
            return cmd_where(load_models(network_path, spatial_path, tt_path), store_dir, object_id, query_time,
                             probes_path, strategy, format);
        if (*bi_cmd)
            return cmd_bench_ingest(load_models(network_path, spatial_path, tt_path), stream_path, store_dir, lambda,
                                    mode, runs, format);
        if (*bq_cmd)
            return cmd_bench_query(load_models(network_path, spatial_path, tt_path), store_dir, lambda, mode,
                                   probes_path, strategy, format);
        if (*repro_cmd) return cmd_repro(quick, out_dir, repro_seed, default_workers());
    } catch (const ParseError& e) {
        std::cerr << "ontrac " << app.get_subcommands().front()->get_name() << ": parse error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "ontrac " << app.get_subcommands().front()->get_name() << ": error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
