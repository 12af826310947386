#include <catch2/catch_amalgamated.hpp>

#include <memory>
#include <vector>

#include "qgrid/pubsub.hpp"

using namespace qgrid;

namespace {

struct Node {
    std::shared_ptr<Transport> client_end;
    std::unique_ptr<Client> client;
    std::vector<MessageEvent> inbox;
    bool connected = false;
};

struct Harness {
    SimScheduler sched;
    Broker broker{sched};

    // Optional fault policies per direction.
    Node add_node(const std::string& id, FaultPolicy client_to_broker = {},
                  FaultPolicy broker_to_client = {}) {
        auto [client_end, broker_end] = PipeTransport::make_pair(sched, PipeOptions{1});
        std::shared_ptr<Transport> client_side = client_end;
        if (client_to_broker)
            client_side = std::make_shared<FaultInjector>(client_end, sched,
                                                          std::move(client_to_broker));
        std::shared_ptr<Transport> broker_side = broker_end;
        if (broker_to_client)
            broker_side = std::make_shared<FaultInjector>(broker_end, sched,
                                                          std::move(broker_to_client));
        broker.attach(broker_side);
        Node node;
        node.client_end = client_side;
        node.client = std::make_unique<Client>(id, sched, client_side);
        return node;
    }

    void connect(Node& node) {
        node.client->connect([&node](bool ok) { node.connected = ok; });
        sched.run_for(10);
        REQUIRE(node.connected);
    }

    void collect(Node& node) {
        node.client->set_message_handler(
            [&node](const MessageEvent& ev) { node.inbox.push_back(ev); });
    }
};

Bytes payload_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

} // namespace

TEST_CASE("packet encoding round trips every type") {
    std::vector<Packet> packets = {
        Packet{.type = PacketType::CONNECT, .client_id = "intel"},
        Packet{.type = PacketType::CONNACK, .flag = true},
        Packet{.type = PacketType::SUBSCRIBE, .mid = 7, .qos = 2, .topic = "PV/Control"},
        Packet{.type = PacketType::SUBACK, .mid = 7, .qos = 1},
        Packet{.type = PacketType::PUBLISH, .flag = true, .mid = 9, .qos = 1,
               .topic = "PV/Measurement", .payload = {0, 1, 2, 255}},
        Packet{.type = PacketType::PUBACK, .mid = 9},
        Packet{.type = PacketType::PUBREC, .mid = 10},
        Packet{.type = PacketType::PUBREL, .mid = 10},
        Packet{.type = PacketType::PUBCOMP, .mid = 10},
    };
    for (const auto& p : packets) {
        auto decoded = decode_packet(encode_packet(p));
        REQUIRE(decoded.has_value());
        CHECK(*decoded == p);
    }
    CHECK_FALSE(decode_packet(Bytes{}).has_value());
    CHECK_FALSE(decode_packet(Bytes{0x00}).has_value());
    Bytes truncated = encode_packet(packets[4]);
    truncated.resize(truncated.size() - 1);
    CHECK_FALSE(decode_packet(truncated).has_value());
}

TEST_CASE("connect establishes a session and duplicate ids supersede") {
    Harness h;
    auto a = h.add_node("dup");
    h.connect(a);
    CHECK(h.broker.session_count() == 1);

    auto b = h.add_node("dup");
    h.connect(b);
    h.sched.run_for(10);
    CHECK(h.broker.session_count() == 1); // old session closed
    CHECK_FALSE(a.client_end->is_open());
    CHECK(b.client_end->is_open());
}

TEST_CASE("connecting to a stopped broker fails") {
    Harness h;
    h.broker.stop();
    h.sched.run_for(5);
    auto a = h.add_node("x");
    bool result = true;
    a.client->connect([&](bool ok) { result = ok; });
    h.sched.run_until_idle();
    CHECK_FALSE(result);
}

TEST_CASE("operations before connect are rejected") {
    Harness h;
    auto a = h.add_node("x");
    CHECK_THROWS_AS(a.client->publish("t", {}, 0), NotConnectedError);
    CHECK_THROWS_AS(a.client->subscribe("t", 0), NotConnectedError);
}

TEST_CASE("subscription filters are exact and fan out to all subscribers") {
    Harness h;
    auto pub = h.add_node("pub");
    auto sub1 = h.add_node("sub1");
    auto sub2 = h.add_node("sub2");
    auto other = h.add_node("other");
    h.connect(pub);
    h.connect(sub1);
    h.connect(sub2);
    h.connect(other);
    h.collect(sub1);
    h.collect(sub2);
    h.collect(other);

    sub1.client->subscribe("PV/Measurement", 0);
    sub2.client->subscribe("PV/Measurement", 0);
    other.client->subscribe("PV/Control", 0);
    h.sched.run_for(10);

    pub.client->publish("PV/Measurement", payload_bytes("v=480"), 0);
    h.sched.run_for(10);

    REQUIRE(sub1.inbox.size() == 1);
    REQUIRE(sub2.inbox.size() == 1);
    CHECK(other.inbox.empty()); // topic isolation
    CHECK(sub1.inbox[0].topic == "PV/Measurement");
    CHECK(sub1.inbox[0].payload == payload_bytes("v=480"));
}

TEST_CASE("no retained messages: publish before subscribe is not delivered") {
    Harness h;
    auto pub = h.add_node("pub");
    auto sub = h.add_node("sub");
    h.connect(pub);
    h.connect(sub);
    h.collect(sub);
    pub.client->publish("T", payload_bytes("early"), 0);
    h.sched.run_for(10);
    sub.client->subscribe("T", 0);
    h.sched.run_for(10);
    CHECK(sub.inbox.empty());
}

TEST_CASE("the broker relays payload bytes untouched") {
    Harness h;
    auto pub = h.add_node("pub");
    auto sub = h.add_node("sub");
    h.connect(pub);
    h.connect(sub);
    h.collect(sub);
    sub.client->subscribe("T", 2);
    h.sched.run_for(10);
    Bytes opaque;
    for (int i = 0; i < 256; ++i) opaque.push_back(static_cast<std::uint8_t>(i));
    pub.client->publish("T", opaque, 2);
    h.sched.run_until_idle();
    REQUIRE(sub.inbox.size() == 1);
    CHECK(sub.inbox[0].payload == opaque);
}

TEST_CASE("delivery qos is the minimum of publish and granted qos") {
    Harness h;
    auto pub = h.add_node("pub");
    auto sub = h.add_node("sub");
    h.connect(pub);
    h.connect(sub);
    h.collect(sub);
    sub.client->subscribe("T", 1); // granted 1
    h.sched.run_for(10);
    pub.client->publish("T", payload_bytes("m"), 2);
    h.sched.run_until_idle();
    REQUIRE(sub.inbox.size() == 1);
    CHECK(sub.inbox[0].qos == 1);
}

TEST_CASE("qos0 over a lossless transport delivers exactly once") {
    Harness h;
    auto pub = h.add_node("pub");
    auto sub = h.add_node("sub");
    h.connect(pub);
    h.connect(sub);
    h.collect(sub);
    sub.client->subscribe("T", 0);
    h.sched.run_for(10);
    bool completed = false;
    pub.client->publish("T", payload_bytes("m"), 0, [&] { completed = true; });
    h.sched.run_until_idle();
    CHECK(completed);
    CHECK(sub.inbox.size() == 1);
}

TEST_CASE("qos1 with a dropped acknowledgment delivers twice, duplicate flagged") {
    Harness h;
    // Drop the first PUBACK the broker sends back to the publisher.
    auto pub = h.add_node("pub", {}, drop_nth_of_type(PacketType::PUBACK, 0));
    auto sub = h.add_node("sub");
    h.connect(pub);
    h.connect(sub);
    h.collect(sub);
    sub.client->subscribe("T", 1);
    h.sched.run_for(10);

    bool completed = false;
    pub.client->publish("T", payload_bytes("m"), 1, [&] { completed = true; });
    h.sched.run_until_idle();

    CHECK(completed);
    REQUIRE(sub.inbox.size() == 2); // at-least-once: duplicate visible to the app
    CHECK_FALSE(sub.inbox[0].dup);
    CHECK(sub.inbox[1].dup);
}

TEST_CASE("qos1 with a dropped forward is retransmitted to the subscriber") {
    Harness h;
    auto pub = h.add_node("pub");
    // Drop the first PUBLISH the broker forwards to the subscriber.
    auto sub = h.add_node("sub", {}, drop_nth_of_type(PacketType::PUBLISH, 0));
    h.connect(pub);
    h.connect(sub);
    h.collect(sub);
    sub.client->subscribe("T", 1);
    h.sched.run_for(10);
    pub.client->publish("T", payload_bytes("m"), 1);
    h.sched.run_until_idle();
    REQUIRE(sub.inbox.size() >= 1);
    CHECK(sub.inbox.back().dup); // the delivered copy is the retransmission
}

TEST_CASE("qos2 delivers exactly once under every single-drop schedule") {
    struct DropCase {
        const char* name;
        int leg; // 0: publisher<->broker, 1: broker<->subscriber
        bool from_client;
        PacketType type;
    };
    const DropCase cases[] = {
        {"none", -1, false, PacketType::CONNECT},
        {"publish from publisher", 0, true, PacketType::PUBLISH},
        {"pubrec to publisher", 0, false, PacketType::PUBREC},
        {"pubrel from publisher", 0, true, PacketType::PUBREL},
        {"pubcomp to publisher", 0, false, PacketType::PUBCOMP},
        {"publish to subscriber", 1, false, PacketType::PUBLISH},
        {"pubrec from subscriber", 1, true, PacketType::PUBREC},
        {"pubrel to subscriber", 1, false, PacketType::PUBREL},
        {"pubcomp from subscriber", 1, true, PacketType::PUBCOMP},
    };

    for (const auto& c : cases) {
        DYNAMIC_SECTION("drop: " << c.name) {
            Harness h;
            FaultPolicy pub_c2b, pub_b2c, sub_c2b, sub_b2c;
            if (c.leg == 0 && c.from_client) pub_c2b = drop_nth_of_type(c.type, 0);
            if (c.leg == 0 && !c.from_client) pub_b2c = drop_nth_of_type(c.type, 0);
            if (c.leg == 1 && c.from_client) sub_c2b = drop_nth_of_type(c.type, 0);
            if (c.leg == 1 && !c.from_client) sub_b2c = drop_nth_of_type(c.type, 0);

            auto pub = h.add_node("pub", std::move(pub_c2b), std::move(pub_b2c));
            auto sub = h.add_node("sub", std::move(sub_c2b), std::move(sub_b2c));
            h.connect(pub);
            h.connect(sub);
            h.collect(sub);
            sub.client->subscribe("T", 2);
            h.sched.run_for(10);

            bool completed = false;
            pub.client->publish("T", payload_bytes("exactly-once"), 2, [&] { completed = true; });
            h.sched.run_until_idle();

            CHECK(completed);
            CHECK(sub.inbox.size() == 1);
        }
    }
}

TEST_CASE("qos1 delivers at least once under every single-drop schedule") {
    const std::pair<bool, PacketType> cases[] = {
        {true, PacketType::PUBLISH}, // publisher -> broker
        {false, PacketType::PUBACK}, // broker -> publisher
    };
    for (auto [from_client, type] : cases) {
        DYNAMIC_SECTION("drop " << packet_type_name(type) << " from_client=" << from_client) {
            Harness h;
            auto pub = h.add_node("pub", from_client ? drop_nth_of_type(type, 0) : FaultPolicy{},
                                  from_client ? FaultPolicy{} : drop_nth_of_type(type, 0));
            auto sub = h.add_node("sub");
            h.connect(pub);
            h.connect(sub);
            h.collect(sub);
            sub.client->subscribe("T", 1);
            h.sched.run_for(10);
            pub.client->publish("T", payload_bytes("m"), 1);
            h.sched.run_until_idle();
            CHECK(sub.inbox.size() >= 1);
        }
    }
}

TEST_CASE("delayed frames still arrive") {
    Harness h;
    std::size_t delayed = 0;
    FaultPolicy delay_policy = [&](const Packet& p, std::size_t) {
        if (p.type == PacketType::PUBLISH && delayed++ == 0)
            return FaultDecision{FaultAction::DELAY, 250};
        return FaultDecision{};
    };
    auto pub = h.add_node("pub", std::move(delay_policy));
    auto sub = h.add_node("sub");
    h.connect(pub);
    h.connect(sub);
    h.collect(sub);
    sub.client->subscribe("T", 0);
    h.sched.run_for(10);
    pub.client->publish("T", payload_bytes("late"), 0);
    h.sched.run_for(100);
    CHECK(sub.inbox.empty()); // still in flight
    h.sched.run_for(200);
    CHECK(sub.inbox.size() == 1);
}
