#ifndef QGRID_SCENARIO_HPP
#define QGRID_SCENARIO_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "qgrid/agents.hpp"
#include "qgrid/authcodec.hpp"
#include "qgrid/clock.hpp"
#include "qgrid/errors.hpp"
#include "qgrid/pubsub.hpp"
#include "qgrid/stats.hpp"

#include <json.hpp>

namespace qgrid {

// Scenario file: JSON with sections {broker, key_source, agents[], duration_s, seed}.
struct ScenarioConfig {
    std::uint64_t seed = 1;
    double duration_s = 60.0;
    std::int64_t broker_latency_ms = 1;
    KeySourceConfig key_source;
    std::vector<AgentConfig> agents;

    void validate() const {
        if (duration_s <= 0) throw ConfigError("duration_s", "must be positive");
        if (broker_latency_ms < 0) throw ConfigError("broker.latency_ms", "must be non-negative");
        key_source.validate();
        if (agents.size() != 2) throw ConfigError("agents", "exactly two agents are required");
        for (const auto& a : agents) a.validate();
        if (agents[0].party == agents[1].party)
            throw ConfigError("agents.party", "agents must use opposite serial parities");
        if (agents[0].node_id == agents[1].node_id)
            throw ConfigError("agents.node_id", "node ids must differ");
    }
};

namespace detail {

inline AgentConfig agent_from_json(const nlohmann::json& j) {
    std::string role_name = j.value("role", "PV");
    auto role = agent_role_from_name(role_name);
    if (!role) throw ConfigError("agents.role", "unknown role " + role_name);
    AgentConfig cfg = default_agent_config(*role);
    if (j.contains("party")) {
        auto party = party_from_name(j["party"].get<std::string>());
        if (!party) throw ConfigError("agents.party", "must be ODD or EVEN");
        cfg.party = *party;
    }
    if (j.contains("node_id")) cfg.node_id = j["node_id"].get<std::string>();
    if (j.contains("fast_period_ms")) cfg.fast_period_ms = j["fast_period_ms"].get<std::int64_t>();
    if (j.contains("slow_period_ms")) cfg.slow_period_ms = j["slow_period_ms"].get<std::int64_t>();
    if (j.contains("stats_period_ms"))
        cfg.stats_period_ms = j["stats_period_ms"].get<std::int64_t>();
    if (j.contains("key_poll_period_ms"))
        cfg.key_poll_period_ms = j["key_poll_period_ms"].get<std::int64_t>();
    if (j.contains("topics_pub")) cfg.topics_pub = j["topics_pub"].get<std::vector<std::string>>();
    if (j.contains("topics_sub")) cfg.topics_sub = j["topics_sub"].get<std::vector<std::string>>();
    if (j.contains("qos")) cfg.qos = j["qos"].get<std::uint8_t>();
    if (j.contains("delta_ms")) cfg.freshness.delta_ms = j["delta_ms"].get<std::int64_t>();
    if (j.contains("pool_threshold")) cfg.pool.threshold = j["pool_threshold"].get<std::uint64_t>();
    if (j.contains("clock_skew_ms")) cfg.clock_skew_ms = j["clock_skew_ms"].get<std::int64_t>();
    return cfg;
}

} // namespace detail

inline ScenarioConfig parse_scenario(const nlohmann::json& j) {
    ScenarioConfig cfg;
    try {
        if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("duration_s")) cfg.duration_s = j["duration_s"].get<double>();
        if (j.contains("broker") && j["broker"].contains("latency_ms"))
            cfg.broker_latency_ms = j["broker"]["latency_ms"].get<std::int64_t>();
        if (j.contains("key_source")) {
            const auto& ks = j["key_source"];
            if (ks.contains("mean_keys_per_sec"))
                cfg.key_source.mean_keys_per_sec = ks["mean_keys_per_sec"].get<double>();
            if (ks.contains("jitter_model")) {
                auto model = jitter_model_from_name(ks["jitter_model"].get<std::string>());
                if (!model)
                    throw ConfigError("key_source.jitter_model",
                                      "must be CONSTANT, GAUSSIAN, or DROPOUT");
                cfg.key_source.model = *model;
            }
            if (ks.contains("jitter_sd_ms"))
                cfg.key_source.jitter_sd_ms = ks["jitter_sd_ms"].get<double>();
            if (ks.contains("dropout_start_s"))
                cfg.key_source.dropout_start_s = ks["dropout_start_s"].get<double>();
            if (ks.contains("dropout_duration_s"))
                cfg.key_source.dropout_duration_s = ks["dropout_duration_s"].get<double>();
            if (ks.contains("warmup_keys"))
                cfg.key_source.warmup_keys = ks["warmup_keys"].get<std::uint64_t>();
        }
        if (j.contains("agents"))
            for (const auto& a : j["agents"]) cfg.agents.push_back(detail::agent_from_json(a));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("scenario", std::string("malformed value: ") + e.what());
    }
    if (cfg.agents.empty()) {
        cfg.agents.push_back(default_agent_config(AgentRole::INTEL));
        cfg.agents.push_back(default_agent_config(AgentRole::PV));
    }
    cfg.key_source.duration_s = cfg.duration_s;
    cfg.key_source.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in.is_open()) throw IoError("cannot open scenario file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("scenario", std::string("invalid JSON: ") + e.what());
    }
    return parse_scenario(j);
}

// Everything a scenario run leaves behind, both on disk (per-series CSV
// files) and in memory for assertions.
struct RunArtifacts {
    std::uint64_t frames_emitted = 0;
    // node_id -> sampled (elapsed_ms, value) series
    std::map<std::string, std::vector<std::pair<std::int64_t, std::uint64_t>>> keys_added;
    std::map<std::string, std::vector<std::pair<std::int64_t, std::uint64_t>>> keys_available;
    std::map<std::string, std::vector<std::pair<std::int64_t, std::uint64_t>>> msgs_authenticated;
    std::map<std::string, std::vector<StatsSnapshot>> snapshots;
    std::map<std::string, AgentSummary> summaries;
    // Nonce-discipline audit: every (key serial, IV) pair used for creation.
    std::vector<std::pair<std::uint64_t, std::array<std::uint8_t, kIvBytes>>> nonce_pairs;
    std::vector<AdvanceEvent> advances; // fresh-key advancement events, both agents
    std::vector<std::filesystem::path> output_files;
};

namespace detail {

inline void write_series_csv(const std::filesystem::path& path,
                             const std::vector<std::pair<std::int64_t, std::uint64_t>>& series,
                             RunArtifacts& artifacts) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write series file " + path.string());
    out << "elapsed_ms,value\n";
    for (const auto& [t, v] : series) out << t << ',' << v << '\n';
    if (!out) throw IoError("write failed on " + path.string());
    artifacts.output_files.push_back(path);
}

} // namespace detail

// Runs broker, key source, and both agents on one deterministic virtual-time
// loop; writes one CSV per series into out_dir.
inline RunArtifacts run_scenario(const ScenarioConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);

    SimScheduler sched;
    Broker broker(sched, QosOptions{});

    // Fresh key files per run; the source appends identical frames to both.
    std::array<std::filesystem::path, 2> key_files = {out_dir / (cfg.agents[0].node_id + ".keys"),
                                                      out_dir / (cfg.agents[1].node_id + ".keys")};
    for (const auto& f : key_files) {
        std::filesystem::remove(f);
        std::ofstream touch(f, std::ios::binary);
    }

    KeySourceConfig ks = cfg.key_source;
    ks.duration_s = cfg.duration_s;
    SimKeySource source(ks, sched, key_files[0], key_files[1]);

    RunArtifacts artifacts;

    std::vector<std::unique_ptr<Agent>> agents;
    for (std::size_t i = 0; i < cfg.agents.size(); ++i) {
        auto [client_end, broker_end] = PipeTransport::make_pair(
            sched, PipeOptions{cfg.broker_latency_ms});
        broker.attach(broker_end);
        auto entropy = std::make_unique<SeededRandomSource>(cfg.seed * 7919 + i + 1);
        agents.push_back(std::make_unique<Agent>(cfg.agents[i], sched, sched, client_end,
                                                 key_files[i], std::move(entropy)));
    }
    for (auto& agent : agents) {
        agent->authenticator().on_create(
            [&artifacts](std::uint64_t serial, const std::array<std::uint8_t, kIvBytes>& iv) {
                artifacts.nonce_pairs.emplace_back(serial, iv);
            });
        agent->keystore().on_advance(
            [&artifacts](const AdvanceEvent& ev) { artifacts.advances.push_back(ev); });
    }

    source.start();
    for (auto& agent : agents) agent->start();
    sched.run_until(static_cast<std::int64_t>(cfg.duration_s * 1000.0));
    for (auto& agent : agents) agent->stop();

    artifacts.frames_emitted = source.frames_emitted();
    for (auto& agent : agents) {
        const std::string& node = agent->config().node_id;
        auto& added = artifacts.keys_added[node];
        auto& available = artifacts.keys_available[node];
        auto& authenticated = artifacts.msgs_authenticated[node];
        for (const auto& snap : agent->snapshots()) {
            added.emplace_back(snap.t_ms, snap.keys_added);
            authenticated.emplace_back(snap.t_ms, snap.msgs_signed);
        }
        // The available series tracks the agent's own signing partition so the
        // faster publisher's depletion is visible (see README).
        available = agent->signing_pool_series();
        artifacts.snapshots[node] = agent->snapshots();
        artifacts.summaries[node] = agent->summary();

        detail::write_series_csv(out_dir / (node + "_keys_added.csv"), added, artifacts);
        detail::write_series_csv(out_dir / (node + "_keys_available.csv"), available, artifacts);
        detail::write_series_csv(out_dir / (node + "_msgs_authenticated.csv"), authenticated,
                                 artifacts);

        if (!agent->snapshots().empty()) {
            std::ofstream stats_out(out_dir / (node + "_stats.csv"));
            write_stats_csv(stats_out, agent->snapshots());
            artifacts.output_files.push_back(out_dir / (node + "_stats.csv"));
        }
    }
    broker.stop();
    sched.run_until_idle();
    return artifacts;
}

} // namespace qgrid

#endif
