#ifndef QGRID_PUBSUB_HPP
#define QGRID_PUBSUB_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qgrid/bytes.hpp"
#include "qgrid/clock.hpp"
#include "qgrid/errors.hpp"

namespace qgrid {

// Minimal publish/subscribe wire protocol. Frames travel as a 1-byte packet
// type followed by the packet fields; the stream transport adds a 4-byte
// big-endian length prefix per frame.
enum class PacketType : std::uint8_t {
    CONNECT = 1,
    CONNACK,
    SUBSCRIBE,
    SUBACK,
    PUBLISH,
    PUBACK,
    PUBREC,
    PUBREL,
    PUBCOMP,
};

inline const char* packet_type_name(PacketType t) {
    switch (t) {
        case PacketType::CONNECT: return "CONNECT";
        case PacketType::CONNACK: return "CONNACK";
        case PacketType::SUBSCRIBE: return "SUBSCRIBE";
        case PacketType::SUBACK: return "SUBACK";
        case PacketType::PUBLISH: return "PUBLISH";
        case PacketType::PUBACK: return "PUBACK";
        case PacketType::PUBREC: return "PUBREC";
        case PacketType::PUBREL: return "PUBREL";
        case PacketType::PUBCOMP: return "PUBCOMP";
    }
    return "?";
}

struct Packet {
    PacketType type{};
    std::string client_id; // CONNECT
    bool flag = false;     // CONNACK: accepted; PUBLISH: duplicate delivery
    std::uint16_t mid = 0; // all acknowledged flows
    std::uint8_t qos = 0;  // SUBSCRIBE: requested; SUBACK: granted; PUBLISH: level
    std::string topic;
    Bytes payload;

    bool operator==(const Packet&) const = default;
};

inline Bytes encode_packet(const Packet& p) {
    Bytes out;
    out.push_back(static_cast<std::uint8_t>(p.type));
    switch (p.type) {
        case PacketType::CONNECT:
            put_u16_be(out, static_cast<std::uint16_t>(p.client_id.size()));
            out.insert(out.end(), p.client_id.begin(), p.client_id.end());
            break;
        case PacketType::CONNACK:
            out.push_back(p.flag ? 1 : 0);
            break;
        case PacketType::SUBSCRIBE:
            put_u16_be(out, p.mid);
            out.push_back(p.qos);
            put_u16_be(out, static_cast<std::uint16_t>(p.topic.size()));
            out.insert(out.end(), p.topic.begin(), p.topic.end());
            break;
        case PacketType::SUBACK:
            put_u16_be(out, p.mid);
            out.push_back(p.qos);
            break;
        case PacketType::PUBLISH:
            put_u16_be(out, p.mid);
            out.push_back(static_cast<std::uint8_t>((p.flag ? 1 : 0) | (p.qos << 1)));
            put_u16_be(out, static_cast<std::uint16_t>(p.topic.size()));
            out.insert(out.end(), p.topic.begin(), p.topic.end());
            put_u32_be(out, static_cast<std::uint32_t>(p.payload.size()));
            out.insert(out.end(), p.payload.begin(), p.payload.end());
            break;
        case PacketType::PUBACK:
        case PacketType::PUBREC:
        case PacketType::PUBREL:
        case PacketType::PUBCOMP:
            put_u16_be(out, p.mid);
            break;
    }
    return out;
}

inline std::optional<Packet> decode_packet(std::span<const std::uint8_t> frame) {
    ByteReader r(frame);
    std::uint8_t type_byte = 0;
    if (!r.take_u8(type_byte)) return std::nullopt;
    if (type_byte < 1 || type_byte > static_cast<std::uint8_t>(PacketType::PUBCOMP))
        return std::nullopt;
    Packet p;
    p.type = static_cast<PacketType>(type_byte);
    std::uint16_t len16 = 0;
    std::uint32_t len32 = 0;
    std::uint8_t byte = 0;
    switch (p.type) {
        case PacketType::CONNECT:
            if (!r.take_u16(len16) || !r.take_string(len16, p.client_id)) return std::nullopt;
            break;
        case PacketType::CONNACK:
            if (!r.take_u8(byte)) return std::nullopt;
            p.flag = byte != 0;
            break;
        case PacketType::SUBSCRIBE:
            if (!r.take_u16(p.mid) || !r.take_u8(p.qos)) return std::nullopt;
            if (!r.take_u16(len16) || !r.take_string(len16, p.topic)) return std::nullopt;
            break;
        case PacketType::SUBACK:
            if (!r.take_u16(p.mid) || !r.take_u8(p.qos)) return std::nullopt;
            break;
        case PacketType::PUBLISH:
            if (!r.take_u16(p.mid) || !r.take_u8(byte)) return std::nullopt;
            p.flag = (byte & 1) != 0;
            p.qos = static_cast<std::uint8_t>(byte >> 1);
            if (p.qos > 2) return std::nullopt;
            if (!r.take_u16(len16) || !r.take_string(len16, p.topic)) return std::nullopt;
            if (!r.take_u32(len32) || !r.take_bytes(len32, p.payload)) return std::nullopt;
            break;
        case PacketType::PUBACK:
        case PacketType::PUBREC:
        case PacketType::PUBREL:
        case PacketType::PUBCOMP:
            if (!r.take_u16(p.mid)) return std::nullopt;
            break;
    }
    if (!r.empty()) return std::nullopt;
    return p;
}

// Bidirectional ordered frame channel. Receive callbacks are invoked on the
// scheduler context, which is what keeps broker and client state single-owner.
class Transport {
public:
    virtual ~Transport() = default;
    virtual void send(Bytes frame) = 0;
    virtual void set_receiver(std::function<void(Bytes)> cb) = 0;
    virtual void set_close_handler(std::function<void()> cb) = 0;
    virtual void close() = 0;
    virtual bool is_open() const = 0;
};

struct PipeOptions {
    std::int64_t latency_ms = 1;
};

// In-process transport pair used for deterministic tests and single-process
// scenario runs. Frames are handed to the peer via the scheduler after the
// configured latency, preserving order.
class PipeTransport : public Transport, public std::enable_shared_from_this<PipeTransport> {
public:
    static std::pair<std::shared_ptr<PipeTransport>, std::shared_ptr<PipeTransport>>
    make_pair(Scheduler& sched, PipeOptions opt = {}) {
        auto a = std::shared_ptr<PipeTransport>(new PipeTransport(sched, opt));
        auto b = std::shared_ptr<PipeTransport>(new PipeTransport(sched, opt));
        a->peer_ = b;
        b->peer_ = a;
        return {a, b};
    }

    void send(Bytes frame) override {
        if (!open_) return;
        auto peer = peer_.lock();
        if (!peer) return;
        sched_.call_after(opt_.latency_ms, [peer, frame = std::move(frame)]() mutable {
            peer->deliver(std::move(frame));
        });
    }

    void set_receiver(std::function<void(Bytes)> cb) override { receiver_ = std::move(cb); }
    void set_close_handler(std::function<void()> cb) override { close_handler_ = std::move(cb); }

    void close() override {
        if (!open_) return;
        open_ = false;
        if (close_handler_) close_handler_();
        if (auto peer = peer_.lock()) peer->peer_closed();
    }

    bool is_open() const override { return open_; }

private:
    PipeTransport(Scheduler& sched, PipeOptions opt) : sched_(sched), opt_(opt) {}

    void deliver(Bytes frame) {
        if (open_ && receiver_) receiver_(std::move(frame));
    }

    void peer_closed() {
        if (!open_) return;
        open_ = false;
        if (close_handler_) close_handler_();
    }

    Scheduler& sched_;
    PipeOptions opt_;
    std::weak_ptr<PipeTransport> peer_;
    std::function<void(Bytes)> receiver_;
    std::function<void()> close_handler_;
    bool open_ = true;
};

enum class FaultAction { PASS, DROP, DUPLICATE, DELAY };

struct FaultDecision {
    FaultAction action = FaultAction::PASS;
    std::int64_t delay_ms = 0;
};

// Decides the fate of the index-th frame sent through the injector (indices
// count from zero, per wrapped direction).
using FaultPolicy = std::function<FaultDecision(const Packet&, std::size_t index)>;

// Wraps the send side of a transport with a programmable drop/duplicate/delay
// schedule. Receive passes through untouched.
class FaultInjector : public Transport {
public:
    FaultInjector(std::shared_ptr<Transport> inner, Scheduler& sched, FaultPolicy policy)
        : inner_(std::move(inner)), sched_(sched), policy_(std::move(policy)) {}

    void send(Bytes frame) override {
        FaultDecision d;
        if (policy_) {
            auto pkt = decode_packet(frame);
            d = pkt ? policy_(*pkt, index_++) : FaultDecision{};
        }
        switch (d.action) {
            case FaultAction::PASS:
                inner_->send(std::move(frame));
                break;
            case FaultAction::DROP:
                break;
            case FaultAction::DUPLICATE:
                inner_->send(frame);
                inner_->send(std::move(frame));
                break;
            case FaultAction::DELAY:
                sched_.call_after(d.delay_ms, [inner = inner_, frame = std::move(frame)]() mutable {
                    inner->send(std::move(frame));
                });
                break;
        }
    }

    void set_receiver(std::function<void(Bytes)> cb) override { inner_->set_receiver(std::move(cb)); }
    void set_close_handler(std::function<void()> cb) override {
        inner_->set_close_handler(std::move(cb));
    }
    void close() override { inner_->close(); }
    bool is_open() const override { return inner_->is_open(); }

private:
    std::shared_ptr<Transport> inner_;
    Scheduler& sched_;
    FaultPolicy policy_;
    std::size_t index_ = 0;
};

// Drops the nth frame (counting every frame through the injector).
inline FaultPolicy drop_nth_frame(std::size_t n) {
    return [n](const Packet&, std::size_t index) {
        return FaultDecision{index == n ? FaultAction::DROP : FaultAction::PASS, 0};
    };
}

// Drops the nth frame of the given type.
inline FaultPolicy drop_nth_of_type(PacketType type, std::size_t n) {
    auto seen = std::make_shared<std::size_t>(0);
    return [type, n, seen](const Packet& p, std::size_t) {
        if (p.type != type) return FaultDecision{};
        return FaultDecision{(*seen)++ == n ? FaultAction::DROP : FaultAction::PASS, 0};
    };
}

struct QosOptions {
    std::int64_t ack_timeout_ms = 1000;
    int retry_limit = 32;
};

// Topic-filtering message broker. All state mutations run on the scheduler
// context; the broker never looks inside payload bytes, so end-to-end
// authentication survives an untrusted broker.
class Broker {
public:
    Broker(Scheduler& sched, QosOptions opt = {})
        : sched_(sched), opt_(opt), alive_(std::make_shared<char>(0)) {}

    ~Broker() { shutdown_now(); }

    void attach(std::shared_ptr<Transport> transport) {
        run_on_context([this, transport] {
            if (stopped_) {
                transport->close();
                return;
            }
            auto sess = std::make_shared<Session>();
            sess->transport = transport;
            sessions_.push_back(sess);
            std::weak_ptr<Session> weak = sess;
            transport->set_receiver([this, weak, token = watch()](Bytes frame) {
                if (token.expired()) return;
                if (auto s = weak.lock()) handle_frame(s, frame);
            });
            transport->set_close_handler([this, weak, token = watch()] {
                if (token.expired()) return;
                if (auto s = weak.lock()) drop_session(s);
            });
        });
    }

    void stop() {
        run_on_context([this] { shutdown_now(); });
    }

    bool stopped() const { return stopped_; }
    std::size_t session_count() const { return sessions_.size(); }

private:
    struct Outbound {
        Packet publish; // original forwarded PUBLISH (for retransmission)
        enum class Stage { AwaitPuback, AwaitPubrec, AwaitPubcomp } stage{};
        TimerId timer = 0;
        int retries = 0;
    };

    struct Session {
        std::shared_ptr<Transport> transport;
        std::string client_id;
        bool connected = false;
        std::map<std::string, std::uint8_t> subscriptions; // exact-match filter -> granted QoS
        std::map<std::uint16_t, Outbound> outbound;
        std::set<std::uint16_t> inbound_qos2;
        std::uint16_t next_mid = 1;
    };
    using SessionPtr = std::shared_ptr<Session>;

    std::weak_ptr<char> watch() const { return alive_; }

    void run_on_context(std::function<void()> fn) {
        sched_.post([token = watch(), fn = std::move(fn)] {
            if (!token.expired()) fn();
        });
    }

    void shutdown_now() {
        if (stopped_) return;
        stopped_ = true;
        auto sessions = std::move(sessions_);
        sessions_.clear();
        by_id_.clear();
        for (auto& sess : sessions) {
            for (auto& [mid, ob] : sess->outbound) sched_.cancel(ob.timer);
            sess->outbound.clear();
            sess->transport->close();
        }
    }

    void send(const SessionPtr& sess, const Packet& p) { sess->transport->send(encode_packet(p)); }

    void handle_frame(const SessionPtr& sess, const Bytes& frame) {
        auto decoded = decode_packet(frame);
        if (!decoded) return; // unparseable frames are dropped
        const Packet& p = *decoded;
        switch (p.type) {
            case PacketType::CONNECT: handle_connect(sess, p); break;
            case PacketType::SUBSCRIBE: handle_subscribe(sess, p); break;
            case PacketType::PUBLISH: handle_publish(sess, p); break;
            case PacketType::PUBREL: {
                sess->inbound_qos2.erase(p.mid);
                send(sess, Packet{.type = PacketType::PUBCOMP, .mid = p.mid});
                break;
            }
            case PacketType::PUBACK: {
                auto it = sess->outbound.find(p.mid);
                if (it != sess->outbound.end() && it->second.stage == Outbound::Stage::AwaitPuback) {
                    sched_.cancel(it->second.timer);
                    sess->outbound.erase(it);
                }
                break;
            }
            case PacketType::PUBREC: {
                auto it = sess->outbound.find(p.mid);
                if (it != sess->outbound.end() && it->second.stage == Outbound::Stage::AwaitPubrec) {
                    sched_.cancel(it->second.timer);
                    it->second.stage = Outbound::Stage::AwaitPubcomp;
                    it->second.retries = 0;
                    arm_timer(sess, p.mid);
                }
                // PUBREL must be (re)sent even if the entry is already in the
                // release stage: the peer rearms on duplicate PUBREC.
                if (it != sess->outbound.end())
                    send(sess, Packet{.type = PacketType::PUBREL, .mid = p.mid});
                break;
            }
            case PacketType::PUBCOMP: {
                auto it = sess->outbound.find(p.mid);
                if (it != sess->outbound.end() && it->second.stage == Outbound::Stage::AwaitPubcomp) {
                    sched_.cancel(it->second.timer);
                    sess->outbound.erase(it);
                }
                break;
            }
            default: break;
        }
    }

    void handle_connect(const SessionPtr& sess, const Packet& p) {
        // A reconnect with the same id supersedes the old session.
        auto existing = by_id_.find(p.client_id);
        if (existing != by_id_.end() && existing->second != sess) {
            drop_session(existing->second);
        }
        sess->client_id = p.client_id;
        sess->connected = true;
        by_id_[p.client_id] = sess;
        send(sess, Packet{.type = PacketType::CONNACK, .flag = true});
    }

    void handle_subscribe(const SessionPtr& sess, const Packet& p) {
        if (!sess->connected || p.topic.empty()) return;
        sess->subscriptions[p.topic] = std::min<std::uint8_t>(p.qos, 2);
        send(sess, Packet{.type = PacketType::SUBACK, .mid = p.mid,
                          .qos = sess->subscriptions[p.topic]});
    }

    void handle_publish(const SessionPtr& sess, const Packet& p) {
        if (!sess->connected) return;
        bool forward = true;
        if (p.qos == 2) {
            // Exactly-once inbound: a retransmitted PUBLISH with a known mid
            // is acknowledged but not forwarded again.
            if (!sess->inbound_qos2.insert(p.mid).second) forward = false;
        }
        if (forward) fan_out(p);
        if (p.qos == 1) send(sess, Packet{.type = PacketType::PUBACK, .mid = p.mid});
        if (p.qos == 2) send(sess, Packet{.type = PacketType::PUBREC, .mid = p.mid});
    }

    void fan_out(const Packet& p) {
        for (const auto& sess : sessions_) {
            if (!sess->connected) continue;
            auto sub = sess->subscriptions.find(p.topic);
            if (sub == sess->subscriptions.end()) continue;
            std::uint8_t eff = std::min(p.qos, sub->second);
            // Propagate the duplicate flag: a QoS 1 retransmission from the
            // publisher surfaces as a flagged duplicate at the subscriber.
            Packet out{.type = PacketType::PUBLISH, .flag = p.flag, .qos = eff, .topic = p.topic,
                       .payload = p.payload};
            if (eff > 0) {
                out.mid = next_mid(sess);
                Outbound ob;
                ob.publish = out;
                ob.stage = eff == 1 ? Outbound::Stage::AwaitPuback : Outbound::Stage::AwaitPubrec;
                sess->outbound.emplace(out.mid, std::move(ob));
                arm_timer(sess, out.mid);
            }
            send(sess, out);
        }
    }

    std::uint16_t next_mid(const SessionPtr& sess) {
        std::uint16_t mid;
        do {
            mid = sess->next_mid++;
            if (sess->next_mid == 0) sess->next_mid = 1;
        } while (mid == 0 || sess->outbound.contains(mid));
        return mid;
    }

    void arm_timer(const SessionPtr& sess, std::uint16_t mid) {
        std::weak_ptr<Session> weak = sess;
        auto it = sess->outbound.find(mid);
        it->second.timer =
            sched_.call_after(opt_.ack_timeout_ms, [this, weak, mid, token = watch()] {
                if (token.expired()) return;
                if (auto s = weak.lock()) retransmit(s, mid);
            });
    }

    void retransmit(const SessionPtr& sess, std::uint16_t mid) {
        auto it = sess->outbound.find(mid);
        if (it == sess->outbound.end()) return;
        Outbound& ob = it->second;
        if (++ob.retries > opt_.retry_limit) {
            sess->outbound.erase(it);
            return;
        }
        if (ob.stage == Outbound::Stage::AwaitPubcomp) {
            send(sess, Packet{.type = PacketType::PUBREL, .mid = mid});
        } else {
            Packet dup = ob.publish;
            dup.flag = true;
            send(sess, dup);
        }
        arm_timer(sess, mid);
    }

    void drop_session(const SessionPtr& sess) {
        if (stopped_) return;
        for (auto& [mid, ob] : sess->outbound) sched_.cancel(ob.timer);
        sess->outbound.clear();
        if (!sess->client_id.empty()) {
            auto it = by_id_.find(sess->client_id);
            if (it != by_id_.end() && it->second == sess) by_id_.erase(it);
        }
        sess->connected = false;
        sess->transport->close();
        std::erase(sessions_, sess);
    }

    Scheduler& sched_;
    QosOptions opt_;
    std::shared_ptr<char> alive_;
    std::vector<SessionPtr> sessions_; // attach order, kept stable for deterministic fan-out
    std::map<std::string, SessionPtr> by_id_;
    bool stopped_ = false;
};

struct MessageEvent {
    std::string topic;
    Bytes payload;
    bool dup = false;
    std::uint8_t qos = 0;
};

struct ClientOptions {
    QosOptions qos{};
    std::int64_t connack_timeout_ms = 3000;
};

// Client endpoint: connect, subscribe, publish with QoS 0/1/2 delivery
// semantics. All callbacks fire on the scheduler context.
class Client {
public:
    Client(std::string client_id, Scheduler& sched, std::shared_ptr<Transport> transport,
           ClientOptions opt = {})
        : id_(std::move(client_id)), sched_(sched), transport_(std::move(transport)), opt_(opt),
          alive_(std::make_shared<char>(0)) {
        transport_->set_receiver([this, token = watch()](Bytes frame) {
            if (token.expired()) return;
            handle_frame(frame);
        });
        transport_->set_close_handler([this, token = watch()] {
            if (token.expired()) return;
            handle_close();
        });
    }

    ~Client() {
        for (auto& [mid, ob] : outbound_) sched_.cancel(ob.timer);
        if (connack_timer_) sched_.cancel(*connack_timer_);
    }

    // Initiates the session; cb(true) on CONNACK, cb(false) if the transport
    // closes or the acknowledgment times out.
    void connect(std::function<void(bool)> cb) {
        sched_.post([this, cb = std::move(cb), token = watch()]() mutable {
            if (token.expired()) return;
            if (!transport_->is_open()) {
                if (cb) cb(false);
                return;
            }
            connect_cb_ = std::move(cb);
            transport_->send(encode_packet(Packet{.type = PacketType::CONNECT, .client_id = id_}));
            connack_timer_ = sched_.call_after(opt_.connack_timeout_ms, [this, token = watch()] {
                if (token.expired()) return;
                connack_timer_.reset();
                finish_connect(false);
            });
        });
    }

    void subscribe(const std::string& topic, std::uint8_t qos,
                   std::function<void(std::uint8_t)> on_suback = {}) {
        require_connected("subscribe");
        std::uint16_t mid = next_mid();
        if (on_suback) pending_subs_[mid] = std::move(on_suback);
        transport_->send(encode_packet(
            Packet{.type = PacketType::SUBSCRIBE, .mid = mid, .qos = qos, .topic = topic}));
    }

    void set_message_handler(std::function<void(const MessageEvent&)> handler) {
        message_handler_ = std::move(handler);
    }

    // on_complete fires when the QoS handshake for this message finishes
    // (immediately for QoS 0).
    void publish(const std::string& topic, Bytes payload, std::uint8_t qos,
                 std::function<void()> on_complete = {}) {
        require_connected("publish");
        Packet p{.type = PacketType::PUBLISH, .qos = qos, .topic = topic,
                 .payload = std::move(payload)};
        if (qos == 0) {
            transport_->send(encode_packet(p));
            if (on_complete) on_complete();
            return;
        }
        p.mid = next_mid();
        Outbound ob;
        ob.publish = p;
        ob.stage = qos == 1 ? Outbound::Stage::AwaitPuback : Outbound::Stage::AwaitPubrec;
        ob.on_complete = std::move(on_complete);
        outbound_.emplace(p.mid, std::move(ob));
        arm_timer(p.mid);
        transport_->send(encode_packet(p));
    }

    bool connected() const { return connected_; }
    const std::string& id() const { return id_; }

    void close() {
        connected_ = false;
        transport_->close();
    }

private:
    struct Outbound {
        Packet publish;
        enum class Stage { AwaitPuback, AwaitPubrec, AwaitPubcomp } stage{};
        TimerId timer = 0;
        int retries = 0;
        std::function<void()> on_complete;
    };

    std::weak_ptr<char> watch() const { return alive_; }

    void require_connected(const char* op) const {
        if (!connected_)
            throw NotConnectedError(std::string(op) + " requires an established session");
    }

    std::uint16_t next_mid() {
        std::uint16_t mid;
        do {
            mid = next_mid_++;
            if (next_mid_ == 0) next_mid_ = 1;
        } while (mid == 0 || outbound_.contains(mid));
        return mid;
    }

    void finish_connect(bool ok) {
        connected_ = ok;
        if (connack_timer_) {
            sched_.cancel(*connack_timer_);
            connack_timer_.reset();
        }
        if (connect_cb_) {
            auto cb = std::move(connect_cb_);
            connect_cb_ = nullptr;
            cb(ok);
        }
    }

    void handle_close() {
        connected_ = false;
        if (connect_cb_) finish_connect(false);
    }

    void handle_frame(const Bytes& frame) {
        auto decoded = decode_packet(frame);
        if (!decoded) return;
        const Packet& p = *decoded;
        switch (p.type) {
            case PacketType::CONNACK:
                finish_connect(p.flag);
                break;
            case PacketType::SUBACK: {
                auto it = pending_subs_.find(p.mid);
                if (it != pending_subs_.end()) {
                    auto cb = std::move(it->second);
                    pending_subs_.erase(it);
                    cb(p.qos);
                }
                break;
            }
            case PacketType::PUBLISH: handle_inbound_publish(p); break;
            case PacketType::PUBREL:
                inbound_qos2_.erase(p.mid);
                transport_->send(encode_packet(Packet{.type = PacketType::PUBCOMP, .mid = p.mid}));
                break;
            case PacketType::PUBACK: {
                auto it = outbound_.find(p.mid);
                if (it != outbound_.end() && it->second.stage == Outbound::Stage::AwaitPuback)
                    complete_outbound(it);
                break;
            }
            case PacketType::PUBREC: {
                auto it = outbound_.find(p.mid);
                if (it != outbound_.end() && it->second.stage == Outbound::Stage::AwaitPubrec) {
                    sched_.cancel(it->second.timer);
                    it->second.stage = Outbound::Stage::AwaitPubcomp;
                    it->second.retries = 0;
                    arm_timer(p.mid);
                }
                if (outbound_.contains(p.mid))
                    transport_->send(encode_packet(Packet{.type = PacketType::PUBREL, .mid = p.mid}));
                break;
            }
            case PacketType::PUBCOMP: {
                auto it = outbound_.find(p.mid);
                if (it != outbound_.end() && it->second.stage == Outbound::Stage::AwaitPubcomp)
                    complete_outbound(it);
                break;
            }
            default: break;
        }
    }

    void handle_inbound_publish(const Packet& p) {
        bool deliver = true;
        if (p.qos == 2) {
            // Deduplicate by message id until the broker releases it.
            if (!inbound_qos2_.insert(p.mid).second) deliver = false;
        }
        if (deliver && message_handler_)
            message_handler_(MessageEvent{p.topic, p.payload, p.flag, p.qos});
        if (p.qos == 1)
            transport_->send(encode_packet(Packet{.type = PacketType::PUBACK, .mid = p.mid}));
        if (p.qos == 2)
            transport_->send(encode_packet(Packet{.type = PacketType::PUBREC, .mid = p.mid}));
    }

    void complete_outbound(std::map<std::uint16_t, Outbound>::iterator it) {
        sched_.cancel(it->second.timer);
        auto cb = std::move(it->second.on_complete);
        outbound_.erase(it);
        if (cb) cb();
    }

    void arm_timer(std::uint16_t mid) {
        auto it = outbound_.find(mid);
        it->second.timer = sched_.call_after(opt_.qos.ack_timeout_ms, [this, mid, token = watch()] {
            if (token.expired()) return;
            retransmit(mid);
        });
    }

    void retransmit(std::uint16_t mid) {
        auto it = outbound_.find(mid);
        if (it == outbound_.end()) return;
        Outbound& ob = it->second;
        if (++ob.retries > opt_.qos.retry_limit) {
            outbound_.erase(it);
            return;
        }
        if (ob.stage == Outbound::Stage::AwaitPubcomp) {
            transport_->send(encode_packet(Packet{.type = PacketType::PUBREL, .mid = mid}));
        } else {
            Packet dup = ob.publish;
            dup.flag = true;
            transport_->send(encode_packet(dup));
        }
        arm_timer(mid);
    }

    std::string id_;
    Scheduler& sched_;
    std::shared_ptr<Transport> transport_;
    ClientOptions opt_;
    std::shared_ptr<char> alive_;
    bool connected_ = false;
    std::function<void(bool)> connect_cb_;
    std::optional<TimerId> connack_timer_;
    std::function<void(const MessageEvent&)> message_handler_;
    std::map<std::uint16_t, std::function<void(std::uint8_t)>> pending_subs_;
    std::map<std::uint16_t, Outbound> outbound_;
    std::set<std::uint16_t> inbound_qos2_;
    std::uint16_t next_mid_ = 1;
};

} // namespace qgrid

#endif
