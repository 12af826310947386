#ifndef QGRID_NET_HPP
#define QGRID_NET_HPP

#include <atomic>
#include <cstring>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include "qgrid/bytes.hpp"
#include "qgrid/clock.hpp"
#include "qgrid/errors.hpp"
#include "qgrid/pubsub.hpp"

namespace qgrid {

inline constexpr std::uint16_t kDefaultBrokerPort = 1883;

// Stream transport carrying length-prefixed frames (4-byte big-endian length
// + frame body). A reader thread posts inbound frames onto the scheduler so
// protocol state stays single-owner.
class SocketTransport : public Transport,
                        public std::enable_shared_from_this<SocketTransport> {
public:
    static std::shared_ptr<SocketTransport> adopt(int fd, Scheduler& sched) {
        auto t = std::shared_ptr<SocketTransport>(new SocketTransport(fd, sched));
        t->start_reader();
        return t;
    }

    static std::shared_ptr<SocketTransport> connect(const std::string& host, std::uint16_t port,
                                                    Scheduler& sched) {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw BrokerUnavailableError("socket creation failed");
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
            ::close(fd);
            throw BrokerUnavailableError("bad broker address " + host);
        }
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            ::close(fd);
            throw BrokerUnavailableError("connect to " + host + ":" + std::to_string(port) +
                                         " failed");
        }
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        return adopt(fd, sched);
    }

    ~SocketTransport() override { shutdown_socket(); }

    void send(Bytes frame) override {
        std::lock_guard lk(write_mu_);
        if (closed_) return;
        Bytes wire;
        wire.reserve(4 + frame.size());
        put_u32_be(wire, static_cast<std::uint32_t>(frame.size()));
        wire.insert(wire.end(), frame.begin(), frame.end());
        std::size_t off = 0;
        while (off < wire.size()) {
            ssize_t n = ::send(fd_, wire.data() + off, wire.size() - off, MSG_NOSIGNAL);
            if (n <= 0) {
                signal_close();
                return;
            }
            off += static_cast<std::size_t>(n);
        }
    }

    void set_receiver(std::function<void(Bytes)> cb) override {
        std::lock_guard lk(cb_mu_);
        receiver_ = std::move(cb);
    }

    void set_close_handler(std::function<void()> cb) override {
        std::lock_guard lk(cb_mu_);
        close_handler_ = std::move(cb);
    }

    void close() override { shutdown_socket(); }

    bool is_open() const override { return !closed_; }

private:
    SocketTransport(int fd, Scheduler& sched) : fd_(fd), sched_(sched) {}

    // The reader keeps the transport alive and exits once the socket shuts
    // down, so it is detached rather than joined.
    void start_reader() {
        auto self = shared_from_this();
        std::thread([self] { self->read_loop(); }).detach();
    }

    void read_loop() {
        while (!closed_) {
            std::uint8_t len_buf[4];
            if (!read_exact(len_buf, 4)) break;
            std::uint32_t len = get_u32_be(len_buf);
            if (len > kMaxFrameBytes) break;
            Bytes frame(len);
            if (!read_exact(frame.data(), len)) break;
            auto self = shared_from_this();
            sched_.post([self, frame = std::move(frame)]() mutable {
                std::function<void(Bytes)> cb;
                {
                    std::lock_guard lk(self->cb_mu_);
                    cb = self->receiver_;
                }
                if (cb && !self->closed_) cb(std::move(frame));
            });
        }
        signal_close();
    }

    bool read_exact(std::uint8_t* buf, std::size_t n) {
        std::size_t off = 0;
        while (off < n) {
            ssize_t r = ::recv(fd_, buf + off, n - off, 0);
            if (r <= 0) return false;
            off += static_cast<std::size_t>(r);
        }
        return true;
    }

    void signal_close() {
        bool expected = false;
        if (!close_signalled_.compare_exchange_strong(expected, true)) return;
        shutdown_socket();
        auto self = shared_from_this();
        sched_.post([self] {
            std::function<void()> cb;
            {
                std::lock_guard lk(self->cb_mu_);
                cb = self->close_handler_;
            }
            if (cb) cb();
        });
    }

    void shutdown_socket() {
        bool expected = false;
        if (closed_.compare_exchange_strong(expected, true)) {
            ::shutdown(fd_, SHUT_RDWR);
            ::close(fd_);
        }
    }

    static constexpr std::uint32_t kMaxFrameBytes = 16 * 1024 * 1024;

    int fd_;
    Scheduler& sched_;
    std::mutex write_mu_;
    std::mutex cb_mu_;
    std::function<void(Bytes)> receiver_;
    std::function<void()> close_handler_;
    std::atomic<bool> closed_{false};
    std::atomic<bool> close_signalled_{false};
};

// Accept loop handing each connection to the callback as a Transport.
class SocketServer {
public:
    SocketServer(std::uint16_t port, Scheduler& sched,
                 std::function<void(std::shared_ptr<Transport>)> on_accept)
        : sched_(sched), on_accept_(std::move(on_accept)) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw IoError("listener socket creation failed");
        int one = 1;
        ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(port);
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            ::close(fd_);
            throw IoError("bind to port " + std::to_string(port) + " failed");
        }
        if (::listen(fd_, 16) != 0) {
            ::close(fd_);
            throw IoError("listen failed");
        }
        socklen_t len = sizeof(addr);
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        acceptor_ = std::thread([this] { accept_loop(); });
    }

    ~SocketServer() { stop(); }

    std::uint16_t port() const { return port_; }

    void stop() {
        bool expected = false;
        if (stopping_.compare_exchange_strong(expected, true)) {
            ::shutdown(fd_, SHUT_RDWR);
            ::close(fd_);
        }
        if (acceptor_.joinable()) acceptor_.join();
    }

private:
    void accept_loop() {
        while (!stopping_) {
            int cfd = ::accept(fd_, nullptr, nullptr);
            if (cfd < 0) break;
            int one = 1;
            ::setsockopt(cfd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
            on_accept_(SocketTransport::adopt(cfd, sched_));
        }
    }

    Scheduler& sched_;
    std::function<void(std::shared_ptr<Transport>)> on_accept_;
    int fd_ = -1;
    std::uint16_t port_ = 0;
    std::thread acceptor_;
    std::atomic<bool> stopping_{false};
};

} // namespace qgrid

#endif
