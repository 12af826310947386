#ifndef QGRID_VERDICT_HPP
#define QGRID_VERDICT_HPP

#include <array>
#include <cstddef>
#include <string_view>

namespace qgrid {

// Outcome of verifying one incoming payload. The checks run in a fixed
// order, so the reason identifies the first gate that failed.
enum class VerifyReason {
    OK,
    MAC_MISMATCH,
    TOPIC_MISMATCH,
    STALE_TIMESTAMP,
    KEY_REPLAYED,
    UNKNOWN_KEY,
    MALFORMED,
};

inline constexpr std::size_t kVerifyReasonCount = 7;
inline constexpr std::size_t kFailReasonCount = kVerifyReasonCount - 1; // OK excluded

inline constexpr std::array<std::string_view, kVerifyReasonCount> kVerifyReasonNames = {
    "OK", "MAC_MISMATCH", "TOPIC_MISMATCH", "STALE_TIMESTAMP",
    "KEY_REPLAYED", "UNKNOWN_KEY", "MALFORMED",
};

inline std::string_view verify_reason_name(VerifyReason r) {
    return kVerifyReasonNames[static_cast<std::size_t>(r)];
}

struct VerificationVerdict {
    bool accepted = false;
    VerifyReason reason = VerifyReason::MALFORMED;

    static VerificationVerdict ok() { return {true, VerifyReason::OK}; }
    static VerificationVerdict fail(VerifyReason r) { return {false, r}; }

    bool operator==(const VerificationVerdict&) const = default;
};

} // namespace qgrid

#endif
