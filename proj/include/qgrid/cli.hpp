#ifndef QGRID_CLI_HPP
#define QGRID_CLI_HPP

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qgrid/agents.hpp"
#include "qgrid/bench.hpp"
#include "qgrid/errors.hpp"
#include "qgrid/ivstore.hpp"
#include "qgrid/keyframe.hpp"
#include "qgrid/keystore.hpp"
#include "qgrid/net.hpp"
#include "qgrid/pubsub.hpp"
#include "qgrid/scenario.hpp"
#include "qgrid/stats.hpp"

namespace qgrid::cli {

namespace detail {

inline std::atomic<bool> g_interrupted{false};

inline void handle_sigint(int) { g_interrupted = true; }

// Writes through a temporary and renames on commit, so a failed command
// never leaves a partial output file behind.
class AtomicFile {
public:
    explicit AtomicFile(std::filesystem::path target)
        : target_(std::move(target)), tmp_(target_.string() + ".partial"),
          stream_(tmp_, std::ios::binary | std::ios::trunc) {
        if (!stream_) throw IoError("cannot write " + tmp_.string());
    }

    ~AtomicFile() {
        if (!committed_) {
            stream_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_, ec);
        }
    }

    std::ofstream& stream() { return stream_; }

    void commit() {
        stream_.close();
        if (!stream_ && stream_.bad()) throw IoError("write failed on " + tmp_.string());
        std::filesystem::rename(tmp_, target_);
        committed_ = true;
    }

private:
    std::filesystem::path target_;
    std::filesystem::path tmp_;
    std::ofstream stream_;
    bool committed_ = false;
};

inline std::vector<int> parse_int_list(const std::string& csv, const std::string& field) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ConfigError(field, "bad integer '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError(field, "empty list");
    return out;
}

inline std::pair<std::string, std::uint16_t> parse_host_port(const std::string& addr) {
    auto colon = addr.rfind(':');
    if (colon == std::string::npos) return {addr, kDefaultBrokerPort};
    std::string host = addr.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(addr.substr(colon + 1));
    } catch (const std::exception&) {
        throw ConfigError("broker", "bad port in address " + addr);
    }
    if (port <= 0 || port > 65535) throw ConfigError("broker", "port out of range in " + addr);
    return {host, static_cast<std::uint16_t>(port)};
}

inline Bytes read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) throw IoError("cannot open " + path.string());
    Bytes data(std::istreambuf_iterator<char>(in), {});
    if (in.bad()) throw IoError("read failed on " + path.string());
    return data;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Command implementations
// ---------------------------------------------------------------------------

inline void cmd_keys_inspect(const std::string& file, std::ostream& out) {
    Bytes data = detail::read_file_bytes(file);
    for (const auto& f : inspect_frames(data)) {
        nlohmann::json j{
            {"id", f.frame.key_id},
            {"key_hex", to_hex(f.frame.key_data)},
            {"status", f.frame.key_status ? 1 : 0},
            {"crc_ok", f.crc_ok},
        };
        out << j.dump() << '\n';
    }
}

inline void cmd_keys_status(const std::string& file, const std::string& journal,
                            std::ostream& out) {
    KeyStore store;
    FrameExtractor extractor;
    auto frames = extractor.push(detail::read_file_bytes(file));
    store.ingest(frames);
    if (!journal.empty()) {
        std::ifstream jin(journal);
        if (!jin.is_open()) throw IoError("cannot open journal " + journal);
        store.apply_journal(jin);
    }
    auto c = store.counters();
    nlohmann::json j{{"added", c.added},
                     {"available", c.available},
                     {"used", c.used},
                     {"rejected", c.rejected},
                     {"crc_rejected_frames", extractor.crc_rejected()}};
    out << j.dump() << '\n';
}

inline void cmd_iv_status(const std::string& file, std::ostream& out) {
    IvStore store;
    store.chunk(detail::read_file_bytes(file));
    auto c = store.counters();
    nlohmann::json j{{"added", c.added}, {"available", c.available}, {"used", c.used}};
    out << j.dump() << '\n';
}

inline void cmd_keys_feed(const KeySourceConfig& cfg, const std::string& out_a,
                          const std::string& out_b, std::ostream& out) {
    auto summary = run_key_source(cfg, out_a, out_b);
    out << nlohmann::json{{"frames_emitted", summary.frames_emitted}}.dump() << '\n';
}

inline void cmd_stats_export(const std::string& in_file, const std::string& format,
                             const std::string& out_file, std::ostream& out) {
    std::ifstream in(in_file);
    if (!in.is_open()) throw IoError("cannot open " + in_file);
    auto series = read_stats_jsonl(in);
    if (series.empty()) throw IoError("no snapshots in " + in_file);
    detail::AtomicFile target(out_file);
    if (format == "csv")
        write_stats_csv(target.stream(), series);
    else if (format == "jsonl")
        write_stats_jsonl(target.stream(), series);
    else
        throw ConfigError("stats.format", "must be csv or jsonl");
    target.commit();
    out << "wrote " << series.size() << " snapshots to " << out_file << '\n';
}

inline void cmd_scenario_run(const std::string& scenario_file, std::uint64_t seed_override,
                             bool seed_given, const std::string& out_dir, std::ostream& out) {
    ScenarioConfig cfg = load_scenario(scenario_file);
    if (seed_given) {
        cfg.seed = seed_override;
        cfg.key_source.seed = seed_override;
    }
    // Run into a scratch directory and move files over only on success.
    std::filesystem::path final_dir(out_dir);
    std::filesystem::path tmp_dir = final_dir;
    tmp_dir += ".partial";
    std::filesystem::remove_all(tmp_dir);
    RunArtifacts artifacts;
    try {
        artifacts = run_scenario(cfg, tmp_dir);
        std::filesystem::create_directories(final_dir);
        for (const auto& entry : std::filesystem::directory_iterator(tmp_dir)) {
            std::filesystem::rename(entry.path(), final_dir / entry.path().filename());
        }
        std::filesystem::remove_all(tmp_dir);
    } catch (...) {
        std::error_code ec;
        std::filesystem::remove_all(tmp_dir, ec);
        throw;
    }
    nlohmann::json j{{"frames_emitted", artifacts.frames_emitted},
                     {"out_dir", final_dir.string()}};
    for (const auto& [node, summary] : artifacts.summaries) {
        j["agents"][node] = {{"publishes", summary.publishes},
                             {"verify_ok", summary.verify_ok},
                             {"verify_fail", summary.verify_fail},
                             {"publish_no_key", summary.publish_no_key},
                             {"publish_iv_exhausted", summary.publish_iv_exhausted}};
    }
    out << j.dump() << '\n';
}

inline void cmd_bench_run(BenchConfig cfg, bool rsa_extended, const std::string& out_file,
                          const std::string& series_file, std::ostream& out) {
    cfg.validate();
    if (rsa_extended) {
        for (int bits : {5120, 6144, 7168, 8192})
            cfg.rsa_key_bits.push_back(bits);
    }
    auto results = bench_gmac(cfg);
    auto rsa = bench_rsa_signature(cfg);
    results.insert(results.end(), rsa.begin(), rsa.end());
    if (!out_file.empty()) {
        detail::AtomicFile target(out_file);
        write_bench_csv(target.stream(), results);
        target.commit();
    }
    if (!series_file.empty()) {
        detail::AtomicFile target(series_file);
        write_bench_series_csv(target.stream(), results);
        target.commit();
    }
    std::ostringstream table;
    write_bench_csv(table, results);
    out << table.str();
}

inline void cmd_broker(std::uint16_t port, double duration_s, std::ostream& out) {
    ThreadScheduler sched;
    Broker broker(sched);
    SocketServer server(port, sched, [&broker](std::shared_ptr<Transport> t) {
        broker.attach(std::move(t));
    });
    out << "broker listening on 127.0.0.1:" << server.port() << '\n' << std::flush;
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::milliseconds(static_cast<std::int64_t>(duration_s * 1000));
    while (!detail::g_interrupted &&
           (duration_s <= 0 || std::chrono::steady_clock::now() < deadline)) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    server.stop();
    broker.stop();
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    sched.stop();
}

struct AgentCliOptions {
    std::string role = "PV";
    std::string broker_addr = "127.0.0.1:1883";
    std::string key_file;
    std::string entropy_file;
    std::int64_t delta_ms = 2000;
    double duration_s = 0; // 0 = run until interrupted
    std::uint8_t qos = 1;
    std::int64_t fast_period_ms = 1000;
    std::int64_t slow_period_ms = 5000;
    std::int64_t stats_period_ms = 5000;
    std::uint64_t pool_threshold = 30;
};

inline void cmd_agent(const AgentCliOptions& opts, std::ostream& out) {
    auto role = agent_role_from_name(opts.role);
    if (!role) throw ConfigError("agent.role", "must be INTEL or PV");
    AgentConfig cfg = default_agent_config(*role);
    cfg.fast_period_ms = opts.fast_period_ms;
    cfg.slow_period_ms = opts.slow_period_ms;
    cfg.stats_period_ms = opts.stats_period_ms;
    cfg.qos = opts.qos;
    cfg.freshness.delta_ms = opts.delta_ms;
    cfg.pool.threshold = opts.pool_threshold;
    if (opts.key_file.empty()) throw ConfigError("agent.keys", "a key file is required");

    auto [host, port] = detail::parse_host_port(opts.broker_addr);
    ThreadScheduler sched;
    SystemClock clock;
    auto transport = SocketTransport::connect(host, port, sched);
    std::unique_ptr<RandomSource> entropy;
    if (opts.entropy_file.empty())
        entropy = std::make_unique<OsRandomSource>();
    else
        entropy = std::make_unique<FileRandomSource>(opts.entropy_file);

    Agent agent(cfg, sched, clock, transport, opts.key_file, std::move(entropy));
    std::promise<bool> connected;
    agent.start([&connected](bool ok) { connected.set_value(ok); });
    auto fut = connected.get_future();
    if (fut.wait_for(std::chrono::seconds(5)) != std::future_status::ready || !fut.get()) {
        agent.stop();
        sched.stop();
        throw BrokerUnavailableError("no session with " + opts.broker_addr);
    }
    out << "agent " << cfg.node_id << " connected to " << opts.broker_addr << '\n' << std::flush;

    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::milliseconds(static_cast<std::int64_t>(opts.duration_s * 1000));
    while (!detail::g_interrupted &&
           (opts.duration_s <= 0 || std::chrono::steady_clock::now() < deadline)) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    // Snapshot before tearing down.
    std::promise<StatsSnapshot> final_snap;
    sched.post([&] { final_snap.set_value(agent.snapshot()); });
    StatsSnapshot snap = final_snap.get_future().get();
    std::promise<void> stopped;
    sched.post([&] {
        agent.stop();
        stopped.set_value();
    });
    stopped.get_future().wait();
    sched.stop();
    out << stats_to_json(snap).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Dispatcher
// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    CLI::App app{"QKD-keyed authentication for publish/subscribe SCADA messaging"};
    app.require_subcommand(1);

    // keys
    auto* keys = app.add_subcommand("keys", "Key file operations");
    keys->require_subcommand(1);

    std::string inspect_file;
    auto* keys_inspect = keys->add_subcommand("inspect", "Print frames as JSON lines");
    keys_inspect->add_option("file", inspect_file, "Key file")->required();
    keys_inspect->callback([&] { cmd_keys_inspect(inspect_file, out); });

    std::string status_file, status_journal;
    auto* keys_status = keys->add_subcommand("status", "Print key-table counters as JSON");
    keys_status->add_option("--file,-f", status_file, "Key file")
        ->envname("QGRID_KEYFILE")
        ->required();
    keys_status->add_option("--journal", status_journal, "Optional used-key journal");
    keys_status->callback([&] { cmd_keys_status(status_file, status_journal, out); });

    KeySourceConfig feed_cfg;
    std::string feed_a, feed_b, feed_model = "CONSTANT";
    auto* keys_feed = keys->add_subcommand("feed", "Write a simulated key feed to two files");
    keys_feed->add_option("--out-a", feed_a, "First sink")->required();
    keys_feed->add_option("--out-b", feed_b, "Second sink")->required();
    keys_feed->add_option("--rate", feed_cfg.mean_keys_per_sec, "Mean keys per second")
        ->capture_default_str();
    keys_feed->add_option("--duration-s", feed_cfg.duration_s, "Feed duration")
        ->capture_default_str();
    keys_feed->add_option("--seed", feed_cfg.seed, "Generator seed")->envname("QGRID_SEED");
    keys_feed->add_option("--model", feed_model, "CONSTANT, GAUSSIAN, or DROPOUT")
        ->capture_default_str();
    keys_feed->add_option("--jitter-sd-ms", feed_cfg.jitter_sd_ms, "GAUSSIAN stddev");
    keys_feed->add_option("--dropout-start-s", feed_cfg.dropout_start_s, "DROPOUT window start");
    keys_feed->add_option("--dropout-duration-s", feed_cfg.dropout_duration_s,
                          "DROPOUT window length");
    keys_feed->add_option("--warmup", feed_cfg.warmup_keys, "Frames written immediately");
    keys_feed->callback([&] {
        auto model = jitter_model_from_name(feed_model);
        if (!model) throw ConfigError("keys.feed.model", "unknown model " + feed_model);
        feed_cfg.model = *model;
        cmd_keys_feed(feed_cfg, feed_a, feed_b, out);
    });

    // iv
    auto* iv = app.add_subcommand("iv", "Initialization-vector pool operations");
    iv->require_subcommand(1);
    std::string iv_file;
    auto* iv_status = iv->add_subcommand("status", "Print IV pool counters as JSON");
    iv_status->add_option("--file,-f", iv_file, "Entropy file")->required();
    iv_status->callback([&] { cmd_iv_status(iv_file, out); });

    // broker
    std::uint16_t broker_port = kDefaultBrokerPort;
    double broker_duration = 0;
    auto* broker = app.add_subcommand("broker", "Run the message broker");
    broker->add_option("--port", broker_port, "Listen port")->capture_default_str();
    broker->add_option("--duration-s", broker_duration, "Stop after this long (0 = run forever)");
    broker->callback([&] { cmd_broker(broker_port, broker_duration, out); });

    // agent
    AgentCliOptions agent_opts;
    auto* agent = app.add_subcommand("agent", "Run one live agent against a broker");
    agent->add_option("--role", agent_opts.role, "INTEL or PV")->required();
    agent->add_option("--broker", agent_opts.broker_addr, "Broker address host:port")
        ->envname("QGRID_BROKER_ADDR")
        ->capture_default_str();
    agent->add_option("--keys", agent_opts.key_file, "Key feed file")
        ->envname("QGRID_KEYFILE")
        ->required();
    agent->add_option("--entropy", agent_opts.entropy_file, "Captured entropy file");
    agent->add_option("--delta-ms", agent_opts.delta_ms, "Freshness window")
        ->envname("QGRID_DELTA_MS")
        ->capture_default_str();
    agent->add_option("--duration-s", agent_opts.duration_s, "Stop after this long (0 = forever)");
    agent->add_option("--qos", agent_opts.qos, "Publish QoS")->capture_default_str();
    agent->add_option("--fast-ms", agent_opts.fast_period_ms, "Fast publish period")
        ->capture_default_str();
    agent->add_option("--slow-ms", agent_opts.slow_period_ms, "Slow publish period")
        ->capture_default_str();
    agent->add_option("--stats-ms", agent_opts.stats_period_ms, "Stats period")
        ->capture_default_str();
    agent->add_option("--pool-threshold", agent_opts.pool_threshold, "Reserve pool size")
        ->capture_default_str();
    agent->callback([&] { cmd_agent(agent_opts, out); });

    // scenario
    auto* scenario = app.add_subcommand("scenario", "Deterministic simulation runs");
    scenario->require_subcommand(1);
    std::string scenario_file, scenario_out = "scenario_out";
    std::uint64_t scenario_seed = 0;
    auto* scenario_run = scenario->add_subcommand("run", "Run a scenario file");
    scenario_run->add_option("file", scenario_file, "Scenario JSON")->required();
    auto* seed_opt =
        scenario_run->add_option("--seed", scenario_seed, "Seed override")->envname("QGRID_SEED");
    scenario_run->add_option("--out", scenario_out, "Output directory")->capture_default_str();
    scenario_run->callback([&] {
        cmd_scenario_run(scenario_file, scenario_seed, seed_opt->count() > 0, scenario_out, out);
    });

    // stats
    auto* stats = app.add_subcommand("stats", "Snapshot series tools");
    stats->require_subcommand(1);
    std::string stats_in, stats_format = "csv", stats_out_file;
    auto* stats_export = stats->add_subcommand("export", "Convert a JSONL snapshot series");
    stats_export->add_option("--in", stats_in, "Input JSONL file")->required();
    stats_export->add_option("--format", stats_format, "csv or jsonl")->capture_default_str();
    stats_export->add_option("--out", stats_out_file, "Output file")->required();
    stats_export->callback([&] { cmd_stats_export(stats_in, stats_format, stats_out_file, out); });

    // bench
    auto* bench = app.add_subcommand("bench", "Execution-time measurements");
    bench->require_subcommand(1);
    BenchConfig bench_cfg;
    std::string bench_gmac_list = "128,192,256", bench_rsa_list = "1024,2048,3072,4096";
    std::string bench_out, bench_series;
    bool rsa_extended = false;
    auto* bench_run = bench->add_subcommand("run", "Run the GMAC vs RSA comparison");
    bench_run->add_option("--message-len", bench_cfg.message_len_bytes, "Message bytes")
        ->capture_default_str();
    bench_run->add_option("--samples", bench_cfg.samples, "Samples per point")
        ->capture_default_str();
    bench_run->add_option("--gmac", bench_gmac_list, "GMAC key sizes (bits, comma-separated)")
        ->capture_default_str();
    bench_run->add_option("--rsa", bench_rsa_list, "RSA key sizes (bits, comma-separated)")
        ->capture_default_str();
    bench_run->add_flag("--rsa-extended", rsa_extended, "Extend RSA sizes up to 8192");
    bench_run->add_option("--out", bench_out, "Results CSV path");
    bench_run->add_option("--series-out", bench_series, "Chart-series CSV path");
    bench_run->add_option("--seed", bench_cfg.seed, "Input generator seed")->envname("QGRID_SEED");
    bench_run->callback([&] {
        bench_cfg.gmac_key_bits = detail::parse_int_list(bench_gmac_list, "bench.gmac");
        bench_cfg.rsa_key_bits = detail::parse_int_list(bench_rsa_list, "bench.rsa");
        cmd_bench_run(bench_cfg, rsa_extended, bench_out, bench_series, out);
    });

    try {
        app.parse(argc, const_cast<char**>(argv));
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    } catch (const Error& e) {
        err << "error: " << e.code() << ": " << e.what() << '\n';
        return 1;
    } catch (const std::invalid_argument& e) {
        err << "error: usage-error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: internal: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

} // namespace qgrid::cli

#endif
