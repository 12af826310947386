#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "qgrid/keystore.hpp"

using namespace qgrid;

namespace {

KeyFrame frame(std::uint64_t id, std::uint8_t fill = 0x5A) {
    return KeyFrame{id, Bytes(kKeyBytes, fill), false};
}

std::vector<KeyFrame> frames(std::initializer_list<std::uint64_t> ids) {
    std::vector<KeyFrame> out;
    for (auto id : ids) out.push_back(frame(id));
    return out;
}

} // namespace

TEST_CASE("ingest adds new serials and rejects duplicates and bad lengths") {
    KeyStore store;
    auto batch = frames({1, 2, 3});
    CHECK(store.ingest(batch) == 3);
    CHECK(store.ingest(batch) == 0); // idempotent
    KeyFrame short_key{4, Bytes(16, 0x00), false};
    CHECK(store.ingest({&short_key, 1}) == 0);

    auto c = store.counters();
    CHECK(c.added == 7); // 3 accepted + 3 duplicates + 1 short
    CHECK(c.available == 3);
    CHECK(c.used == 0);
    CHECK(c.rejected == 4);
    CHECK(c.added == c.available + c.used + c.rejected);
}

TEST_CASE("reserve pool gates fresh advancement") {
    KeyStore store;
    std::vector<KeyFrame> batch;
    for (std::uint64_t id = 1; id <= 32; ++id) batch.push_back(frame(id));
    store.ingest(batch);
    PoolPolicy policy{30};

    // 32 unused > 30: advancement allowed, lowest odd serial first.
    auto k1 = store.next_signing_key(PartyRole::ODD, policy);
    CHECK(k1.serial == 1);
    CHECK(k1.fresh);

    // 31 unused > 30: one more advance.
    auto k2 = store.next_signing_key(PartyRole::ODD, policy);
    CHECK(k2.serial == 3);
    CHECK(k2.fresh);

    // 30 unused == threshold: reuse the last key.
    auto k3 = store.next_signing_key(PartyRole::ODD, policy);
    CHECK(k3.serial == 3);
    CHECK_FALSE(k3.fresh);
    auto k4 = store.next_signing_key(PartyRole::ODD, policy);
    CHECK(k4.serial == 3);
    CHECK_FALSE(k4.fresh);
}

TEST_CASE("parity rule restricts each party to its own serials") {
    KeyStore store;
    store.ingest(frames({2, 4, 5}));
    PoolPolicy policy{0};
    auto k = store.next_signing_key(PartyRole::EVEN, policy);
    CHECK(k.serial == 2);
    auto k2 = store.next_signing_key(PartyRole::EVEN, policy);
    CHECK(k2.serial == 4);
    // 5 is odd: never handed to the EVEN party even though it is unused.
    auto k3 = store.next_signing_key(PartyRole::EVEN, policy);
    CHECK(k3.serial == 4);
    CHECK_FALSE(k3.fresh);
}

TEST_CASE("cold start below the threshold fails visibly") {
    KeyStore store;
    store.ingest(frames({1, 2}));
    PoolPolicy policy{30};
    CHECK_THROWS_AS(store.next_signing_key(PartyRole::ODD, policy), NoKeyError);
}

TEST_CASE("party with no unused serials of its parity and no history fails") {
    KeyStore store;
    store.ingest(frames({2, 4, 6}));
    PoolPolicy policy{0};
    CHECK_THROWS_AS(store.next_signing_key(PartyRole::ODD, policy), NoKeyError);
}

TEST_CASE("verification lookup consumes keys only after success") {
    KeyStore store;
    store.ingest(frames({1, 2, 3, 4}));
    std::array<std::uint8_t, kKeyBytes> secret{};

    SECTION("unknown serial") {
        CHECK(store.lookup_for_verify(999, secret) == VerifyLookup::unknown_serial);
    }

    SECTION("lookup does not burn the key") {
        CHECK(store.lookup_for_verify(2, secret) == VerifyLookup::ok);
        CHECK(store.counters().used == 0);
        CHECK(store.lookup_for_verify(2, secret) == VerifyLookup::ok);
    }

    SECTION("replay of an older serial after advancement") {
        CHECK(store.lookup_for_verify(2, secret) == VerifyLookup::ok);
        store.mark_verified(2);
        // Reuse window: the same serial still verifies.
        CHECK(store.lookup_for_verify(2, secret) == VerifyLookup::ok);
        // Counterpart advances to 4; 2 is now a replay indicator.
        store.mark_verified(4);
        CHECK(store.lookup_for_verify(2, secret) == VerifyLookup::already_consumed);
        CHECK(store.lookup_for_verify(4, secret) == VerifyLookup::ok);
    }
}

TEST_CASE("counters stay conserved across mixed operations") {
    KeyStore store;
    std::vector<KeyFrame> batch;
    for (std::uint64_t id = 1; id <= 10; ++id) batch.push_back(frame(id));
    store.ingest(batch);
    PoolPolicy policy{5};
    store.next_signing_key(PartyRole::ODD, policy);
    store.next_signing_key(PartyRole::EVEN, policy);
    auto c = store.counters();
    CHECK(c.added == 10);
    CHECK(c.used == 2);
    CHECK(c.available == 8);
    CHECK(c.added == c.available + c.used + c.rejected);
}

TEST_CASE("fresh serials are strictly increasing and never repeat") {
    KeyStore store;
    std::vector<KeyFrame> batch;
    for (std::uint64_t id = 1; id <= 200; ++id) batch.push_back(frame(id));
    store.ingest(batch);
    PoolPolicy policy{10};
    std::uint64_t last_odd = 0;
    std::set<std::uint64_t> fresh_serials;
    for (int i = 0; i < 80; ++i) {
        auto k = store.next_signing_key(PartyRole::ODD, policy);
        if (k.fresh) {
            CHECK(k.serial > last_odd);
            CHECK(fresh_serials.insert(k.serial).second);
            last_odd = k.serial;
        }
    }
}

TEST_CASE("odd and even consumers sharing a table never collide") {
    KeyStore store;
    std::vector<KeyFrame> batch;
    for (std::uint64_t id = 1; id <= 400; ++id) batch.push_back(frame(id));
    store.ingest(batch);
    PoolPolicy policy{20};

    std::vector<std::uint64_t> odd_serials, even_serials;
    std::thread odd_consumer([&] {
        for (int i = 0; i < 100; ++i) {
            auto k = store.next_signing_key(PartyRole::ODD, policy);
            if (k.fresh) odd_serials.push_back(k.serial);
        }
    });
    std::thread even_consumer([&] {
        for (int i = 0; i < 100; ++i) {
            auto k = store.next_signing_key(PartyRole::EVEN, policy);
            if (k.fresh) even_serials.push_back(k.serial);
        }
    });
    odd_consumer.join();
    even_consumer.join();

    for (auto s : odd_serials) CHECK(s % 2 == 1);
    for (auto s : even_serials) CHECK(s % 2 == 0);
    auto c = store.counters();
    CHECK(c.added == c.available + c.used + c.rejected);
}

TEST_CASE("advance hook reports pre-consumption pool size") {
    KeyStore store;
    store.ingest(frames({1, 2, 3, 4, 5}));
    PoolPolicy policy{2};
    std::vector<AdvanceEvent> events;
    store.on_advance([&](const AdvanceEvent& ev) { events.push_back(ev); });
    store.next_signing_key(PartyRole::ODD, policy);  // 5 unused > 2
    store.next_signing_key(PartyRole::ODD, policy);  // 4 unused > 2
    store.next_signing_key(PartyRole::ODD, policy);  // 3 unused > 2
    store.next_signing_key(PartyRole::ODD, policy);  // 2 unused == 2: reuse
    REQUIRE(events.size() == 3);
    CHECK(events[0].unused_before == 5);
    CHECK(events[1].unused_before == 4);
    CHECK(events[2].unused_before == 3);
    for (const auto& ev : events) CHECK(ev.unused_before > policy.threshold);
}

TEST_CASE("journal restores used flags and watermarks") {
    auto dir = std::filesystem::temp_directory_path() / "qgrid_keystore_test";
    std::filesystem::create_directories(dir);
    auto journal_path = dir / "events.journal";
    std::filesystem::remove(journal_path);

    std::vector<KeyFrame> batch;
    for (std::uint64_t id = 1; id <= 8; ++id) batch.push_back(frame(id));
    {
        KeyStore store;
        store.open_journal(journal_path);
        store.ingest(batch);
        PoolPolicy policy{2};
        store.next_signing_key(PartyRole::ODD, policy);
        store.next_signing_key(PartyRole::ODD, policy);
        store.mark_verified(2);
    }

    KeyStore recovered;
    recovered.ingest(batch);
    std::ifstream jin(journal_path);
    recovered.apply_journal(jin);
    auto c = recovered.counters();
    CHECK(c.used == 3); // serials 1, 3 signed; 2 verified
    // The recovered store keeps signing where it left off.
    auto k = recovered.next_signing_key(PartyRole::ODD, PoolPolicy{2});
    CHECK(k.serial == 5);
    std::filesystem::remove_all(dir);
}
