#ifndef QGRID_AGENTS_HPP
#define QGRID_AGENTS_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "qgrid/authcodec.hpp"
#include "qgrid/clock.hpp"
#include "qgrid/errors.hpp"
#include "qgrid/ivstore.hpp"
#include "qgrid/keyframe.hpp"
#include "qgrid/keystore.hpp"
#include "qgrid/pubsub.hpp"
#include "qgrid/random.hpp"
#include "qgrid/stats.hpp"

#include <json.hpp>

namespace qgrid {

// ---------------------------------------------------------------------------
// Simulated QKD key source
// ---------------------------------------------------------------------------

enum class JitterModel { CONSTANT, GAUSSIAN, DROPOUT };

inline std::optional<JitterModel> jitter_model_from_name(std::string_view name) {
    if (name == "CONSTANT") return JitterModel::CONSTANT;
    if (name == "GAUSSIAN") return JitterModel::GAUSSIAN;
    if (name == "DROPOUT") return JitterModel::DROPOUT;
    return std::nullopt;
}

struct KeySourceConfig {
    double mean_keys_per_sec = 2.0;
    JitterModel model = JitterModel::CONSTANT;
    double jitter_sd_ms = 0.0;        // GAUSSIAN: stddev of the inter-arrival time
    double dropout_start_s = 0.0;     // DROPOUT: zero-rate window start
    double dropout_duration_s = 0.0;  // DROPOUT: zero-rate window length
    double duration_s = 60.0;
    std::uint64_t warmup_keys = 0;    // frames written immediately at start
    std::uint64_t seed = 1;

    void validate() const {
        if (mean_keys_per_sec <= 0)
            throw ConfigError("key_source.mean_keys_per_sec", "must be positive");
        if (duration_s < 0) throw ConfigError("key_source.duration_s", "must be non-negative");
        if (jitter_sd_ms < 0) throw ConfigError("key_source.jitter_sd_ms", "must be non-negative");
        if (dropout_start_s < 0 || dropout_duration_s < 0)
            throw ConfigError("key_source.dropout", "window must be non-negative");
    }
};

// Deterministic generator of the shared frame sequence: ids count up from 1
// and key material comes from the seeded stream, so two sinks fed from one
// generator hold identical bytes.
class KeyFrameGenerator {
public:
    explicit KeyFrameGenerator(std::uint64_t seed) : gen_(seed) {}

    KeyFrame next() {
        KeyFrame f;
        f.key_id = ++last_id_;
        f.key_data.resize(kKeyBytes);
        for (std::size_t i = 0; i < kKeyBytes; i += 8) {
            std::uint64_t word = gen_();
            for (std::size_t b = 0; b < 8; ++b)
                f.key_data[i + b] = static_cast<std::uint8_t>(word >> (8 * b));
        }
        return f;
    }

    std::uint64_t last_id() const { return last_id_; }

private:
    std::mt19937_64 gen_;
    std::uint64_t last_id_ = 0;
};

// Emits the frame stream into two append-only key files on a scheduler.
class SimKeySource {
public:
    SimKeySource(KeySourceConfig cfg, Scheduler& sched, std::filesystem::path sink_a,
                 std::filesystem::path sink_b)
        : cfg_(cfg), sched_(sched), sink_a_(std::move(sink_a)), sink_b_(std::move(sink_b)),
          generator_(cfg.seed), interval_rng_(cfg.seed ^ 0x9E3779B97F4A7C15ull) {
        cfg_.validate();
    }

    void start() {
        start_ms_ = sched_.now_ms();
        for (std::uint64_t i = 0; i < cfg_.warmup_keys; ++i) emit_frame();
        schedule_next();
    }

    std::uint64_t frames_emitted() const { return frames_; }

private:
    void schedule_next() {
        const std::int64_t elapsed = sched_.now_ms() - start_ms_;
        if (elapsed >= static_cast<std::int64_t>(cfg_.duration_s * 1000.0)) return;
        const double mean_interval_ms = 1000.0 / cfg_.mean_keys_per_sec;
        double interval = mean_interval_ms;
        if (cfg_.model == JitterModel::GAUSSIAN && cfg_.jitter_sd_ms > 0) {
            std::normal_distribution<double> dist(mean_interval_ms, cfg_.jitter_sd_ms);
            interval = std::max(1.0, dist(interval_rng_));
        }
        sched_.call_after(static_cast<std::int64_t>(std::llround(interval)), [this] {
            const double t_s = static_cast<double>(sched_.now_ms() - start_ms_) / 1000.0;
            const bool in_dropout = cfg_.model == JitterModel::DROPOUT &&
                                    t_s >= cfg_.dropout_start_s &&
                                    t_s < cfg_.dropout_start_s + cfg_.dropout_duration_s;
            if (!in_dropout) emit_frame();
            schedule_next();
        });
    }

    void emit_frame() {
        Bytes wire = serialize_frame(generator_.next());
        append(sink_a_, wire);
        append(sink_b_, wire);
        ++frames_;
    }

    static void append(const std::filesystem::path& path, const Bytes& wire) {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        if (!out) throw IoError("cannot append to key file " + path.string());
        out.write(reinterpret_cast<const char*>(wire.data()),
                  static_cast<std::streamsize>(wire.size()));
        if (!out) throw IoError("write failed on key file " + path.string());
    }

    KeySourceConfig cfg_;
    Scheduler& sched_;
    std::filesystem::path sink_a_, sink_b_;
    KeyFrameGenerator generator_;
    std::mt19937_64 interval_rng_;
    std::int64_t start_ms_ = 0;
    std::uint64_t frames_ = 0;
};

// Blocking wall-clock variant used by the `keys feed` command.
struct KeySourceSummary {
    std::uint64_t frames_emitted = 0;
};

inline KeySourceSummary run_key_source(const KeySourceConfig& cfg,
                                       const std::filesystem::path& sink_a,
                                       const std::filesystem::path& sink_b) {
    cfg.validate();
    SimScheduler sched;
    SimKeySource source(cfg, sched, sink_a, sink_b);
    source.start();
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(static_cast<std::int64_t>(cfg.duration_s * 1000));
    std::int64_t virtual_ms = 0;
    const std::int64_t step = 50;
    while (std::chrono::steady_clock::now() < deadline) {
        virtual_ms += step;
        sched.run_until(virtual_ms);
        std::this_thread::sleep_for(std::chrono::milliseconds(step));
    }
    sched.run_until(static_cast<std::int64_t>(cfg.duration_s * 1000));
    return {source.frames_emitted()};
}

// ---------------------------------------------------------------------------
// Agents
// ---------------------------------------------------------------------------

enum class AgentRole { INTEL, PV };

inline const char* agent_role_name(AgentRole r) { return r == AgentRole::INTEL ? "INTEL" : "PV"; }

inline std::optional<AgentRole> agent_role_from_name(std::string_view name) {
    if (name == "INTEL") return AgentRole::INTEL;
    if (name == "PV") return AgentRole::PV;
    return std::nullopt;
}

struct AgentConfig {
    AgentRole role = AgentRole::PV;
    PartyRole party = PartyRole::EVEN; // convention: INTEL=ODD, PV=EVEN
    std::string node_id;
    std::int64_t fast_period_ms = 1000;
    std::int64_t slow_period_ms = 5000;
    std::int64_t stats_period_ms = 5000;
    std::int64_t key_poll_period_ms = 1000;
    std::vector<std::string> topics_pub;
    std::vector<std::string> topics_sub;
    std::uint8_t qos = 1;
    FreshnessPolicy freshness{};
    PoolPolicy pool{};
    std::int64_t clock_skew_ms = 0;

    void validate() const {
        std::string scope = "agents." + node_id;
        if (node_id.empty()) throw ConfigError("agents.node_id", "must not be empty");
        if (fast_period_ms <= 0) throw ConfigError(scope + ".fast_period_ms", "must be positive");
        if (slow_period_ms <= 0) throw ConfigError(scope + ".slow_period_ms", "must be positive");
        if (fast_period_ms >= slow_period_ms)
            throw ConfigError(scope + ".fast_period_ms", "must be smaller than slow_period_ms");
        if (stats_period_ms <= 0) throw ConfigError(scope + ".stats_period_ms", "must be positive");
        if (key_poll_period_ms <= 0)
            throw ConfigError(scope + ".key_poll_period_ms", "must be positive");
        if (topics_pub.empty()) throw ConfigError(scope + ".topics_pub", "must not be empty");
        if (qos > 2) throw ConfigError(scope + ".qos", "must be 0, 1, or 2");
        if (freshness.delta_ms <= 0) throw ConfigError(scope + ".delta_ms", "must be positive");
        for (const auto& t : topics_pub)
            if (!topic_is_encodable(t))
                throw ConfigError(scope + ".topics_pub", "topic contains the payload delimiter");
    }
};

// Default wiring from the demonstration: the Intelligence agent publishes
// control data, the PV agent publishes measurements and forecasts.
inline AgentConfig default_agent_config(AgentRole role) {
    AgentConfig cfg;
    cfg.role = role;
    if (role == AgentRole::INTEL) {
        cfg.party = PartyRole::ODD;
        cfg.node_id = "intel";
        cfg.topics_pub = {"PV/Control"};
        cfg.topics_sub = {"PV/Measurement"};
    } else {
        cfg.party = PartyRole::EVEN;
        cfg.node_id = "pv";
        cfg.topics_pub = {"PV/Measurement"};
        cfg.topics_sub = {"PV/Control"};
    }
    return cfg;
}

struct AgentSummary {
    std::uint64_t publishes = 0;
    std::uint64_t publish_no_key = 0;
    std::uint64_t publish_iv_exhausted = 0;
    std::uint64_t publish_not_connected = 0;
    std::uint64_t received = 0;
    std::uint64_t verify_ok = 0;
    std::uint64_t verify_fail = 0;
};

namespace detail {
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}
} // namespace detail

// One scenario node: tails its key file into the keystore, keeps the IV pool
// topped up, publishes authenticated periodic messages, and verifies every
// receipt. Runs entirely on the scheduler context.
class Agent {
public:
    Agent(AgentConfig cfg, Scheduler& sched, const Clock& base_clock,
          std::shared_ptr<Transport> transport, std::filesystem::path key_file,
          std::unique_ptr<RandomSource> entropy)
        : cfg_(validated(std::move(cfg))), sched_(sched), clock_(base_clock, cfg_.clock_skew_ms),
          key_reader_(std::move(key_file)), entropy_(std::move(entropy)),
          keys_(&stats_), ivs_(&stats_),
          authenticator_(keys_, ivs_, clock_, cfg_.party, cfg_.pool, &stats_),
          verifier_(keys_, clock_, cfg_.party, cfg_.freshness, &stats_),
          client_(cfg_.node_id, sched, std::move(transport)),
          msg_rng_(detail::fnv1a64(cfg_.node_id)), alive_(std::make_shared<char>(0)) {
        client_.set_message_handler([this](const MessageEvent& ev) { on_message(ev); });
    }

    void start(std::function<void(bool)> on_connected = {}) {
        client_.connect([this, on_connected = std::move(on_connected),
                         token = std::weak_ptr<char>(alive_)](bool ok) {
            if (token.expired()) return;
            if (ok) {
                for (const auto& topic : cfg_.topics_sub) client_.subscribe(topic, cfg_.qos);
                begin_periodic_tasks();
            }
            if (on_connected) on_connected(ok);
        });
    }

    void stop() {
        stopped_ = true;
        for (auto& task : periodics_) sched_.cancel(task->timer);
        periodics_.clear();
        client_.close();
    }

    StatsSnapshot snapshot() const { return stats_.snapshot(cfg_.node_id, sched_.now_ms()); }
    const AgentSummary& summary() const { return summary_; }
    const AgentConfig& config() const { return cfg_; }
    KeyStore& keystore() { return keys_; }
    IvStore& ivstore() { return ivs_; }
    Authenticator& authenticator() { return authenticator_; }
    Verifier& verifier() { return verifier_; }
    const std::vector<StatsSnapshot>& snapshots() const { return snapshots_; }

    // Sampled on the stats tick alongside the snapshots: unused keys left in
    // this agent's own signing partition.
    const std::vector<std::pair<std::int64_t, std::uint64_t>>& signing_pool_series() const {
        return signing_pool_series_;
    }

private:
    static AgentConfig validated(AgentConfig c) {
        c.validate();
        return c;
    }

    struct PeriodicTask {
        std::int64_t period_ms = 0;
        std::function<void()> fn;
        TimerId timer = 0;
    };

    void begin_periodic_tasks() {
        poll_inputs();
        every(cfg_.key_poll_period_ms, [this] { poll_inputs(); });
        every(cfg_.fast_period_ms, [this] { fast_tick(); });
        every(cfg_.slow_period_ms, [this] { slow_tick(); });
        every(cfg_.stats_period_ms, [this] { stats_tick(); });
    }

    void every(std::int64_t period_ms, std::function<void()> fn) {
        auto task = std::make_shared<PeriodicTask>(PeriodicTask{period_ms, std::move(fn), 0});
        periodics_.push_back(task);
        schedule_task(task);
    }

    void schedule_task(const std::shared_ptr<PeriodicTask>& task) {
        task->timer = sched_.call_after(task->period_ms,
                                        [this, task, token = std::weak_ptr<char>(alive_)] {
            if (token.expired() || stopped_) return;
            task->fn();
            schedule_task(task);
        });
    }

    void poll_inputs() {
        auto frames = key_reader_.poll();
        if (!frames.empty()) keys_.ingest(frames);
        // Keep a couple of minutes of IVs ahead of the publish rate.
        auto ivc = ivs_.counters();
        if (ivc.available < 64) ivs_.fill_from(*entropy_, 256);
    }

    void fast_tick() {
        if (cfg_.role == AgentRole::PV) publish_message(make_measurement());
    }

    void slow_tick() {
        if (cfg_.role == AgentRole::PV)
            publish_message(make_forecast());
        else
            publish_message(make_control());
    }

    void stats_tick() {
        snapshots_.push_back(snapshot());
        signing_pool_series_.emplace_back(sched_.now_ms(), keys_.unused_count(cfg_.party));
    }

    void publish_message(const nlohmann::json& body) {
        nlohmann::json msg = body;
        if (!hello_sent_) {
            // First authenticated message doubles as the connection-time
            // HELLO the counterpart verifies before trusting the stream.
            msg["hello"] = cfg_.node_id;
        }
        const std::string text = msg.dump();
        const std::string& topic = cfg_.topics_pub.front();
        try {
            std::string wire = authenticator_.create_wire(
                {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()}, topic);
            client_.publish(topic, Bytes(wire.begin(), wire.end()), cfg_.qos);
            ++summary_.publishes;
            hello_sent_ = true;
        } catch (const NoKeyError&) {
            ++summary_.publish_no_key; // retried on the next period
        } catch (const IvExhaustedError&) {
            ++summary_.publish_iv_exhausted;
        } catch (const NotConnectedError&) {
            ++summary_.publish_not_connected;
        }
    }

    void on_message(const MessageEvent& ev) {
        ++summary_.received;
        std::string_view wire(reinterpret_cast<const char*>(ev.payload.data()), ev.payload.size());
        VerificationVerdict v = verifier_.verify_wire(wire, ev.topic);
        if (v.accepted)
            ++summary_.verify_ok;
        else
            ++summary_.verify_fail;
    }

    nlohmann::json make_measurement() {
        std::uniform_real_distribution<double> noise(-1.0, 1.0);
        return {
            {"type", "measurement"},
            {"voltage", 480.0 + noise(msg_rng_)},
            {"current", 120.0 + 5.0 * noise(msg_rng_)},
            {"frequency", 60.0 + 0.01 * noise(msg_rng_)},
            {"phase", 0.5 * noise(msg_rng_)},
        };
    }

    nlohmann::json make_forecast() {
        std::uniform_real_distribution<double> level(40.0, 90.0);
        return {
            {"type", "forecast"},
            {"horizon_min", 15},
            {"kw_forecast", level(msg_rng_)},
        };
    }

    nlohmann::json make_control() {
        std::uniform_real_distribution<double> setpoint(0.0, 100.0);
        return {
            {"type", "control"},
            {"setpoint_id", static_cast<int>(control_seq_++ % 4)},
            {"value", setpoint(msg_rng_)},
        };
    }

    AgentConfig cfg_;
    Scheduler& sched_;
    OffsetClock clock_;
    KeyFileReader key_reader_;
    std::unique_ptr<RandomSource> entropy_;
    StatsRegistry stats_;
    KeyStore keys_;
    IvStore ivs_;
    Authenticator authenticator_;
    Verifier verifier_;
    Client client_;
    std::mt19937_64 msg_rng_;
    std::shared_ptr<char> alive_;
    std::vector<std::shared_ptr<PeriodicTask>> periodics_;
    std::vector<StatsSnapshot> snapshots_;
    std::vector<std::pair<std::int64_t, std::uint64_t>> signing_pool_series_;
    AgentSummary summary_;
    std::uint64_t control_seq_ = 0;
    bool hello_sent_ = false;
    bool stopped_ = false;
};

} // namespace qgrid

#endif
