#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "qgrid/ivstore.hpp"

using namespace qgrid;

TEST_CASE("chunking splits entropy into 16-byte vectors") {
    IvStore store;
    CHECK(store.chunk(Bytes(48, 0x01)) == 3);
    CHECK(store.chunk(Bytes{}) == 0);
    auto c = store.counters();
    CHECK(c.added == 3);
    CHECK(c.available == 3);
}

TEST_CASE("partial chunks buffer until completed") {
    IvStore store;
    CHECK(store.chunk(Bytes(40, 0x02)) == 2); // 8 bytes left over
    CHECK(store.chunk(Bytes(8, 0x03)) == 1);  // completes the third
    CHECK(store.counters().added == 3);
}

TEST_CASE("next_iv returns vectors in order and exactly once") {
    IvStore store;
    Bytes entropy;
    for (int i = 0; i < 3 * 16; ++i) entropy.push_back(static_cast<std::uint8_t>(i));
    store.chunk(entropy);

    auto iv0 = store.next_iv();
    CHECK(iv0.index == 0);
    CHECK(iv0.value[0] == 0);
    auto iv1 = store.next_iv();
    CHECK(iv1.index == 1);
    CHECK(iv1.value[0] == 16);
    store.next_iv();
    CHECK_THROWS_AS(store.next_iv(), IvExhaustedError);

    auto c = store.counters();
    CHECK(c.added == 3);
    CHECK(c.used == 3);
    CHECK(c.available == 0);
}

TEST_CASE("many draws never repeat a value") {
    IvStore store;
    SeededRandomSource source(99);
    store.fill_from(source, 10000);
    std::set<std::array<std::uint8_t, kIvBytes>> seen;
    for (int i = 0; i < 10000; ++i) {
        auto iv = store.next_iv();
        CHECK(seen.insert(iv.value).second);
    }
    CHECK(store.counters().added ==
          store.counters().available + store.counters().used);
}

TEST_CASE("seeded source is reproducible") {
    SeededRandomSource a(7), b(7);
    Bytes ba(64), bb(64);
    a.read(ba);
    b.read(bb);
    CHECK(ba == bb);
}
