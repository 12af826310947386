#ifndef QGRID_STATS_HPP
#define QGRID_STATS_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "qgrid/errors.hpp"
#include "qgrid/verdict.hpp"

#include <json.hpp>

namespace qgrid {

// Point-in-time copy of one node's operational counters. Availability is
// derived inside the snapshot, so the conservation identities
//   keys_added == keys_available + keys_used + keys_rejected
//   ivs_added  == ivs_available + ivs_used
// hold in every snapshot by construction.
struct StatsSnapshot {
    std::string node_id;
    std::int64_t t_ms = 0;
    std::uint64_t keys_added = 0;
    std::uint64_t keys_available = 0;
    std::uint64_t keys_used = 0;
    std::uint64_t keys_rejected = 0;
    std::uint64_t ivs_added = 0;
    std::uint64_t ivs_available = 0;
    std::uint64_t ivs_used = 0;
    std::uint64_t verify_ok = 0;
    std::uint64_t verify_fail = 0;
    std::array<std::uint64_t, kFailReasonCount> fail_reasons{};
    std::uint64_t msgs_signed = 0;

    bool operator==(const StatsSnapshot&) const = default;
};

// Thread-safe counter registry fed by the stores and codec as events happen.
class StatsRegistry {
public:
    void record_keys_added(std::uint64_t n) { bump(keys_added_, n); }
    void record_keys_rejected(std::uint64_t n) { bump(keys_rejected_, n); }
    void record_key_used() { bump(keys_used_, 1); }
    void record_ivs_added(std::uint64_t n) { bump(ivs_added_, n); }
    void record_iv_used() { bump(ivs_used_, 1); }
    void record_msg_signed() { bump(msgs_signed_, 1); }
    void record_verify_ok() { bump(verify_ok_, 1); }

    void record_verify_fail(VerifyReason reason) {
        std::lock_guard lk(mu_);
        ++verify_fail_;
        ++fail_reasons_[static_cast<std::size_t>(reason) - 1];
    }

    StatsSnapshot snapshot(const std::string& node_id, std::int64_t t_ms) const {
        std::lock_guard lk(mu_);
        StatsSnapshot s;
        s.node_id = node_id;
        s.t_ms = t_ms;
        s.keys_added = keys_added_;
        s.keys_rejected = keys_rejected_;
        s.keys_used = keys_used_;
        s.keys_available = keys_added_ - keys_used_ - keys_rejected_;
        s.ivs_added = ivs_added_;
        s.ivs_used = ivs_used_;
        s.ivs_available = ivs_added_ - ivs_used_;
        s.verify_ok = verify_ok_;
        s.verify_fail = verify_fail_;
        s.fail_reasons = fail_reasons_;
        s.msgs_signed = msgs_signed_;
        return s;
    }

private:
    void bump(std::uint64_t& counter, std::uint64_t n) {
        std::lock_guard lk(mu_);
        counter += n;
    }

    mutable std::mutex mu_;
    std::uint64_t keys_added_ = 0, keys_rejected_ = 0, keys_used_ = 0;
    std::uint64_t ivs_added_ = 0, ivs_used_ = 0;
    std::uint64_t verify_ok_ = 0, verify_fail_ = 0;
    std::uint64_t msgs_signed_ = 0;
    std::array<std::uint64_t, kFailReasonCount> fail_reasons_{};
};

inline std::string stats_csv_header() {
    std::string h = "node_id,t_ms,keys_added,keys_available,keys_used,ivs_added,ivs_available,"
                    "ivs_used,verify_ok,verify_fail";
    for (std::size_t i = 1; i < kVerifyReasonCount; ++i) {
        h += ",fail_";
        h += kVerifyReasonNames[i];
    }
    // Trailing extras beyond the standard column set, kept last so the
    // documented prefix order is stable.
    h += ",keys_rejected,msgs_signed";
    return h;
}

inline void write_stats_csv_row(std::ostream& out, const StatsSnapshot& s) {
    out << s.node_id << ',' << s.t_ms << ',' << s.keys_added << ',' << s.keys_available << ','
        << s.keys_used << ',' << s.ivs_added << ',' << s.ivs_available << ',' << s.ivs_used << ','
        << s.verify_ok << ',' << s.verify_fail;
    for (auto n : s.fail_reasons) out << ',' << n;
    out << ',' << s.keys_rejected << ',' << s.msgs_signed << '\n';
}

inline void write_stats_csv(std::ostream& out, std::span<const StatsSnapshot> series) {
    if (series.empty()) throw IoError("refusing to export an empty snapshot series");
    out << stats_csv_header() << '\n';
    for (const auto& s : series) write_stats_csv_row(out, s);
    if (!out) throw IoError("stats CSV write failed");
}

inline nlohmann::json stats_to_json(const StatsSnapshot& s) {
    nlohmann::json reasons = nlohmann::json::object();
    for (std::size_t i = 0; i < kFailReasonCount; ++i)
        reasons[std::string(kVerifyReasonNames[i + 1])] = s.fail_reasons[i];
    return nlohmann::json{
        {"node_id", s.node_id},
        {"t_ms", s.t_ms},
        {"keys_added", s.keys_added},
        {"keys_available", s.keys_available},
        {"keys_used", s.keys_used},
        {"keys_rejected", s.keys_rejected},
        {"ivs_added", s.ivs_added},
        {"ivs_available", s.ivs_available},
        {"ivs_used", s.ivs_used},
        {"verify_ok", s.verify_ok},
        {"verify_fail", s.verify_fail},
        {"fail_reasons", reasons},
        {"msgs_signed", s.msgs_signed},
    };
}

inline StatsSnapshot stats_from_json(const nlohmann::json& j) {
    StatsSnapshot s;
    s.node_id = j.at("node_id").get<std::string>();
    s.t_ms = j.at("t_ms").get<std::int64_t>();
    s.keys_added = j.at("keys_added").get<std::uint64_t>();
    s.keys_available = j.at("keys_available").get<std::uint64_t>();
    s.keys_used = j.at("keys_used").get<std::uint64_t>();
    s.keys_rejected = j.at("keys_rejected").get<std::uint64_t>();
    s.ivs_added = j.at("ivs_added").get<std::uint64_t>();
    s.ivs_available = j.at("ivs_available").get<std::uint64_t>();
    s.ivs_used = j.at("ivs_used").get<std::uint64_t>();
    s.verify_ok = j.at("verify_ok").get<std::uint64_t>();
    s.verify_fail = j.at("verify_fail").get<std::uint64_t>();
    s.msgs_signed = j.at("msgs_signed").get<std::uint64_t>();
    const auto& reasons = j.at("fail_reasons");
    for (std::size_t i = 0; i < kFailReasonCount; ++i)
        s.fail_reasons[i] = reasons.at(std::string(kVerifyReasonNames[i + 1])).get<std::uint64_t>();
    return s;
}

inline void write_stats_jsonl(std::ostream& out, std::span<const StatsSnapshot> series) {
    if (series.empty()) throw IoError("refusing to export an empty snapshot series");
    for (const auto& s : series) out << stats_to_json(s).dump() << '\n';
    if (!out) throw IoError("stats JSONL write failed");
}

inline std::vector<StatsSnapshot> read_stats_jsonl(std::istream& in) {
    std::vector<StatsSnapshot> series;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            series.push_back(stats_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw IoError("bad snapshot at line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return series;
}

} // namespace qgrid

#endif
