#ifndef QGRID_KEYSTORE_HPP
#define QGRID_KEYSTORE_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>

#include "qgrid/errors.hpp"
#include "qgrid/keyframe.hpp"
#include "qgrid/stats.hpp"

namespace qgrid {

// Serial-number partitioning: each party may sign only with its own parity.
enum class PartyRole : std::uint8_t { ODD = 0, EVEN = 1 };

inline const char* party_name(PartyRole r) { return r == PartyRole::ODD ? "ODD" : "EVEN"; }

inline std::optional<PartyRole> party_from_name(std::string_view name) {
    if (name == "ODD") return PartyRole::ODD;
    if (name == "EVEN") return PartyRole::EVEN;
    return std::nullopt;
}

inline bool serial_matches(PartyRole role, std::uint64_t serial) {
    return (serial % 2 == 1) == (role == PartyRole::ODD);
}

inline PartyRole parity_of(std::uint64_t serial) {
    return serial % 2 == 1 ? PartyRole::ODD : PartyRole::EVEN;
}

// Minimum unused keys retained as a reserve before advancing to a fresh key.
struct PoolPolicy {
    std::uint64_t threshold = 30;
};

struct KeyRecord {
    std::uint64_t serial = 0;
    std::array<std::uint8_t, kKeyBytes> secret{};
    bool used = false;
};

struct SigningKey {
    std::uint64_t serial = 0;
    std::array<std::uint8_t, kKeyBytes> secret{};
    // True when the store advanced to a new key; false when the last key is
    // reused because the pool sits at or below the reserve threshold.
    bool fresh = false;
};

struct KeyCounters {
    std::uint64_t added = 0;     // every frame presented, accepted or not
    std::uint64_t available = 0; // added - used - rejected
    std::uint64_t used = 0;
    std::uint64_t rejected = 0;  // wrong length or duplicate serial
};

enum class VerifyLookup { ok, unknown_serial, already_consumed };

// Emitted whenever a party advances to a fresh signing key.
struct AdvanceEvent {
    PartyRole party{};
    std::uint64_t serial = 0;
    std::uint64_t unused_before = 0; // pool size before this key was consumed
};

// Synchronized table of shared secret keys. One ingest writer, one signing
// consumer, and one verifying consumer may operate concurrently.
class KeyStore {
public:
    KeyStore() = default;
    explicit KeyStore(StatsRegistry* stats) : stats_(stats) {}

    // Optional append-only journal of ADD/USE events for crash recovery.
    void open_journal(const std::filesystem::path& path) {
        std::lock_guard lk(mu_);
        journal_.open(path, std::ios::app);
        if (!journal_) throw IoError("cannot open journal " + path.string());
    }

    std::size_t ingest(std::span<const KeyFrame> frames) {
        std::lock_guard lk(mu_);
        std::size_t accepted = 0;
        for (const auto& f : frames) {
            ++added_;
            if (f.key_data.size() != kKeyBytes || table_.contains(f.key_id)) {
                ++rejected_;
                continue;
            }
            KeyRecord rec;
            rec.serial = f.key_id;
            std::copy(f.key_data.begin(), f.key_data.end(), rec.secret.begin());
            table_.emplace(f.key_id, rec);
            unused_[static_cast<int>(parity_of(f.key_id))].insert(f.key_id);
            ++accepted;
            journal_line("ADD " + std::to_string(f.key_id));
        }
        if (stats_) {
            if (accepted) stats_->record_keys_added(accepted);
            if (frames.size() > accepted) stats_->record_keys_rejected(frames.size() - accepted);
        }
        return accepted;
    }

    SigningKey next_signing_key(PartyRole role, const PoolPolicy& policy) {
        std::unique_lock lk(mu_);
        auto& mine = unused_[static_cast<int>(role)];
        const std::uint64_t pool = unused_count_locked();
        if (pool > policy.threshold && !mine.empty()) {
            std::uint64_t serial = *mine.begin();
            mine.erase(mine.begin());
            KeyRecord& rec = table_.at(serial);
            rec.used = true;
            ++used_;
            last_signed_[static_cast<int>(role)] = serial;
            journal_line("USE " + std::to_string(serial) + " sign");
            AdvanceEvent ev{role, serial, pool};
            auto hook = on_advance_;
            auto secret = rec.secret;
            lk.unlock();
            if (stats_) stats_->record_key_used();
            if (hook) hook(ev);
            return {serial, secret, true};
        }
        auto last = last_signed_[static_cast<int>(role)];
        if (!last)
            throw NoKeyError("party " + std::string(party_name(role)) +
                             " has no signing key: pool=" + std::to_string(pool) +
                             " threshold=" + std::to_string(policy.threshold));
        return {*last, table_.at(*last).secret, false};
    }

    VerifyLookup lookup_for_verify(std::uint64_t serial, std::array<std::uint8_t, kKeyBytes>& secret) const {
        std::lock_guard lk(mu_);
        auto it = table_.find(serial);
        if (it == table_.end()) return VerifyLookup::unknown_serial;
        const int p = static_cast<int>(parity_of(serial));
        if (it->second.used && last_verified_[p] != serial)
            return VerifyLookup::already_consumed;
        secret = it->second.secret;
        return VerifyLookup::ok;
    }

    // Called after a successful MAC verification; a forged serial must not
    // burn a good key, so consumption happens here rather than at lookup.
    void mark_verified(std::uint64_t serial) {
        std::lock_guard lk(mu_);
        auto it = table_.find(serial);
        if (it == table_.end()) return;
        const int p = static_cast<int>(parity_of(serial));
        if (!last_verified_[p] || serial > *last_verified_[p]) last_verified_[p] = serial;
        if (!it->second.used) {
            it->second.used = true;
            unused_[p].erase(serial);
            ++used_;
            journal_line("USE " + std::to_string(serial) + " verify");
            if (stats_) stats_->record_key_used();
        }
    }

    KeyCounters counters() const {
        std::lock_guard lk(mu_);
        KeyCounters c;
        c.added = added_;
        c.used = used_;
        c.rejected = rejected_;
        c.available = added_ - used_ - rejected_;
        return c;
    }

    std::uint64_t unused_count() const {
        std::lock_guard lk(mu_);
        return unused_count_locked();
    }

    // Unused keys in one party's signing partition.
    std::uint64_t unused_count(PartyRole role) const {
        std::lock_guard lk(mu_);
        return unused_[static_cast<int>(role)].size();
    }

    void on_advance(std::function<void(const AdvanceEvent&)> hook) {
        std::lock_guard lk(mu_);
        on_advance_ = std::move(hook);
    }

    // Restores used flags and watermarks from a journal written by a
    // previous run. Keys themselves come from re-reading the key file.
    void apply_journal(std::istream& in) {
        std::string line;
        while (std::getline(in, line)) {
            std::istringstream ls(line);
            std::string op;
            std::uint64_t serial = 0;
            ls >> op >> serial;
            if (op != "USE" || !ls) continue;
            std::string how;
            ls >> how;
            std::lock_guard lk(mu_);
            auto it = table_.find(serial);
            if (it == table_.end() || it->second.used) continue;
            const int p = static_cast<int>(parity_of(serial));
            it->second.used = true;
            unused_[p].erase(serial);
            ++used_;
            if (how == "sign") {
                auto& last = last_signed_[p];
                if (!last || serial > *last) last = serial;
            } else if (how == "verify") {
                auto& last = last_verified_[p];
                if (!last || serial > *last) last = serial;
            }
        }
    }

private:
    std::uint64_t unused_count_locked() const { return unused_[0].size() + unused_[1].size(); }

    void journal_line(const std::string& line) {
        if (journal_.is_open()) journal_ << line << '\n' << std::flush;
    }

    mutable std::mutex mu_;
    std::map<std::uint64_t, KeyRecord> table_;
    std::set<std::uint64_t> unused_[2]; // indexed by PartyRole
    std::optional<std::uint64_t> last_signed_[2];
    std::optional<std::uint64_t> last_verified_[2];
    std::uint64_t added_ = 0, used_ = 0, rejected_ = 0;
    std::function<void(const AdvanceEvent&)> on_advance_;
    StatsRegistry* stats_ = nullptr;
    mutable std::ofstream journal_;
};

} // namespace qgrid

#endif
