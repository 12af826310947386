#ifndef QGRID_AUTHCODEC_HPP
#define QGRID_AUTHCODEC_HPP

#include <array>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "qgrid/bytes.hpp"
#include "qgrid/clock.hpp"
#include "qgrid/errors.hpp"
#include "qgrid/gmac.hpp"
#include "qgrid/ivstore.hpp"
#include "qgrid/keystore.hpp"
#include "qgrid/stats.hpp"
#include "qgrid/verdict.hpp"

namespace qgrid {

inline constexpr char kPayloadDelimiter = '-';

// Everything that gets authenticated: the application message, its topic,
// the serial of the signing key, and the creation timestamp.
struct TotalMessage {
    Bytes message;
    std::string topic;
    std::uint64_t key_serial = 0;
    std::int64_t timestamp_ms = 0;

    bool operator==(const TotalMessage&) const = default;
};

// Canonical MAC input: each field is emitted as a 4-byte big-endian length
// followed by its bytes; the two integers are 8-byte big-endian. Injective
// by construction, so no wire-encoding choice can alias two messages.
inline Bytes serialize_total(const TotalMessage& t) {
    Bytes out;
    out.reserve(4 * 4 + t.message.size() + t.topic.size() + 16);
    put_u32_be(out, static_cast<std::uint32_t>(t.message.size()));
    out.insert(out.end(), t.message.begin(), t.message.end());
    put_u32_be(out, static_cast<std::uint32_t>(t.topic.size()));
    out.insert(out.end(), t.topic.begin(), t.topic.end());
    put_u32_be(out, 8);
    put_u64_be(out, t.key_serial);
    put_u32_be(out, 8);
    put_u64_be(out, static_cast<std::uint64_t>(t.timestamp_ms));
    return out;
}

struct AuthPayload {
    TotalMessage total;
    std::array<std::uint8_t, kIvBytes> iv{};
    MacTag mac{};

    bool operator==(const AuthPayload&) const = default;
};

// Maximum tolerated |receiver clock - sender timestamp| in milliseconds.
struct FreshnessPolicy {
    std::int64_t delta_ms = 2000;
};

inline bool topic_is_encodable(std::string_view topic) {
    return topic.find(kPayloadDelimiter) == std::string_view::npos;
}

// Wire form: six dash-delimited fields  m_b64-t-n_dec-ts_dec-iv_b64-mac_b64.
// Binary fields travel as base64 and the integers as decimal, so the dash
// never occurs inside a field; topics must not contain it.
inline std::string encode_payload(const AuthPayload& p) {
    if (!topic_is_encodable(p.total.topic))
        throw std::invalid_argument("topic contains the payload delimiter: " + p.total.topic);
    if (p.total.timestamp_ms < 0)
        throw std::invalid_argument("negative timestamp is not encodable");
    std::string out = base64_encode(p.total.message);
    out += kPayloadDelimiter;
    out += p.total.topic;
    out += kPayloadDelimiter;
    out += std::to_string(p.total.key_serial);
    out += kPayloadDelimiter;
    out += std::to_string(p.total.timestamp_ms);
    out += kPayloadDelimiter;
    out += base64_encode(p.iv);
    out += kPayloadDelimiter;
    out += base64_encode(p.mac);
    return out;
}

namespace detail {

inline bool parse_decimal_u64(std::string_view s, std::uint64_t& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out, 10);
    return ec == std::errc() && ptr == s.data() + s.size();
}

} // namespace detail

// Strict decode; any structural defect yields nullopt (MALFORMED).
inline std::optional<AuthPayload> decode_payload(std::string_view wire) {
    std::array<std::string_view, 6> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i < 6; ++i) {
        std::size_t end = wire.find(kPayloadDelimiter, start);
        if (i < 5) {
            if (end == std::string_view::npos) return std::nullopt;
            fields[i] = wire.substr(start, end - start);
            start = end + 1;
        } else {
            if (end != std::string_view::npos) return std::nullopt; // too many fields
            fields[i] = wire.substr(start);
        }
    }

    AuthPayload p;
    auto message = base64_decode(fields[0]);
    if (!message) return std::nullopt;
    p.total.message = std::move(*message);
    p.total.topic = std::string(fields[1]);
    std::uint64_t serial = 0, ts = 0;
    if (!detail::parse_decimal_u64(fields[2], serial)) return std::nullopt;
    if (!detail::parse_decimal_u64(fields[3], ts)) return std::nullopt;
    if (ts > static_cast<std::uint64_t>(INT64_MAX)) return std::nullopt;
    p.total.key_serial = serial;
    p.total.timestamp_ms = static_cast<std::int64_t>(ts);
    auto iv = base64_decode(fields[4]);
    if (!iv || iv->size() != kIvBytes) return std::nullopt;
    std::copy(iv->begin(), iv->end(), p.iv.begin());
    auto mac = base64_decode(fields[5]);
    if (!mac || mac->size() != kMacBytes) return std::nullopt;
    std::copy(mac->begin(), mac->end(), p.mac.begin());
    return p;
}

// Create side: pulls the signing key under the reserve-pool rule and a fresh
// single-use IV, stamps the time, and tags the canonical total message.
class Authenticator {
public:
    Authenticator(KeyStore& keys, IvStore& ivs, const Clock& clock, PartyRole role,
                  PoolPolicy policy = {}, StatsRegistry* stats = nullptr)
        : keys_(keys), ivs_(ivs), clock_(clock), role_(role), policy_(policy), stats_(stats) {}

    AuthPayload create_payload(std::span<const std::uint8_t> message, std::string_view topic) {
        SigningKey key = keys_.next_signing_key(role_, policy_);
        InitVector iv = ivs_.next_iv();
        AuthPayload p;
        p.total.message.assign(message.begin(), message.end());
        p.total.topic = std::string(topic);
        p.total.key_serial = key.serial;
        p.total.timestamp_ms = clock_.now_ms();
        p.iv = iv.value;
        p.mac = gmac_tag(key.secret, p.iv, serialize_total(p.total));
        if (on_create_) on_create_(key.serial, p.iv);
        if (stats_) stats_->record_msg_signed();
        return p;
    }

    std::string create_wire(std::span<const std::uint8_t> message, std::string_view topic) {
        return encode_payload(create_payload(message, topic));
    }

    // Observer for nonce-discipline audits: fires once per created MAC with
    // the (key serial, IV) pair that keyed it.
    void on_create(std::function<void(std::uint64_t, const std::array<std::uint8_t, kIvBytes>&)> hook) {
        on_create_ = std::move(hook);
    }

    PartyRole role() const { return role_; }

private:
    KeyStore& keys_;
    IvStore& ivs_;
    const Clock& clock_;
    PartyRole role_;
    PoolPolicy policy_;
    StatsRegistry* stats_ = nullptr;
    std::function<void(std::uint64_t, const std::array<std::uint8_t, kIvBytes>&)> on_create_;
};

// Verify side for one remote counterpart. Checks run in a fixed order --
// key replay, freshness, topic, MAC -- and state advances only on accept,
// so a forged message can never poison the watermark.
class Verifier {
public:
    Verifier(KeyStore& keys, const Clock& clock, PartyRole own_role, FreshnessPolicy policy = {},
             StatsRegistry* stats = nullptr)
        : keys_(keys), clock_(clock), own_role_(own_role), policy_(policy), stats_(stats) {}

    VerificationVerdict verify(const AuthPayload& p, std::string_view expected_topic) {
        VerificationVerdict v = check(p, expected_topic);
        if (v.accepted)
            accept(p);
        else if (stats_)
            stats_->record_verify_fail(v.reason);
        if (stats_ && v.accepted) stats_->record_verify_ok();
        return v;
    }

    // Decode + verify; undecodable input is MALFORMED.
    VerificationVerdict verify_wire(std::string_view wire, std::string_view expected_topic) {
        auto p = decode_payload(wire);
        if (!p) {
            if (stats_) stats_->record_verify_fail(VerifyReason::MALFORMED);
            return VerificationVerdict::fail(VerifyReason::MALFORMED);
        }
        return verify(*p, expected_topic);
    }

    std::optional<std::uint64_t> watermark() const { return watermark_; }
    std::uint64_t nonmonotonic_ts_count() const { return nonmonotonic_ts_; }

private:
    VerificationVerdict check(const AuthPayload& p, std::string_view expected_topic) {
        const std::uint64_t serial = p.total.key_serial;

        // 1. Key replay. A serial from our own signing partition, a serial
        //    behind the watermark, or a repeated (serial, IV) pair all mean
        //    the key was already consumed.
        if (serial_matches(own_role_, serial))
            return VerificationVerdict::fail(VerifyReason::KEY_REPLAYED);
        if (watermark_ && serial < *watermark_)
            return VerificationVerdict::fail(VerifyReason::KEY_REPLAYED);
        if (watermark_ && serial == *watermark_ && seen_ivs_.contains(p.iv))
            return VerificationVerdict::fail(VerifyReason::KEY_REPLAYED);
        std::array<std::uint8_t, kKeyBytes> secret{};
        switch (keys_.lookup_for_verify(serial, secret)) {
            case VerifyLookup::unknown_serial:
                return VerificationVerdict::fail(VerifyReason::UNKNOWN_KEY);
            case VerifyLookup::already_consumed:
                return VerificationVerdict::fail(VerifyReason::KEY_REPLAYED);
            case VerifyLookup::ok:
                break;
        }

        // 2. Freshness window.
        const std::int64_t now = clock_.now_ms();
        if (std::abs(now - p.total.timestamp_ms) > policy_.delta_ms)
            return VerificationVerdict::fail(VerifyReason::STALE_TIMESTAMP);

        // 3. Transport topic must equal the authenticated topic.
        if (p.total.topic != expected_topic)
            return VerificationVerdict::fail(VerifyReason::TOPIC_MISMATCH);

        // 4. Recompute and compare the tag in constant time.
        MacTag expected = gmac_tag(secret, p.iv, serialize_total(p.total));
        if (!ct_equal(expected, p.mac))
            return VerificationVerdict::fail(VerifyReason::MAC_MISMATCH);

        return VerificationVerdict::ok();
    }

    void accept(const AuthPayload& p) {
        const std::uint64_t serial = p.total.key_serial;
        if (!watermark_ || serial > *watermark_) {
            watermark_ = serial;
            seen_ivs_.clear();
        }
        seen_ivs_.insert(p.iv);
        // Sequence anomalies are flagged, not rejected; the timestamp window
        // above is the enforced check.
        if (last_ts_ && p.total.timestamp_ms < *last_ts_) ++nonmonotonic_ts_;
        last_ts_ = p.total.timestamp_ms;
        keys_.mark_verified(serial);
    }

    KeyStore& keys_;
    const Clock& clock_;
    PartyRole own_role_;
    FreshnessPolicy policy_;
    StatsRegistry* stats_ = nullptr;
    std::optional<std::uint64_t> watermark_;
    std::set<std::array<std::uint8_t, kIvBytes>> seen_ivs_;
    std::optional<std::int64_t> last_ts_;
    std::uint64_t nonmonotonic_ts_ = 0;
};

} // namespace qgrid

#endif
