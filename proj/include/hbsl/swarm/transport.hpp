#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "hbsl/errors.hpp"
#include "hbsl/log.hpp"
#include "hbsl/swarm/message.hpp"

namespace hbsl::swarm {

using data::NodeId;

/// Point-to-point message delivery between registered nodes. collect()
/// returns the messages of one kind for one round, ordered by sender, and
/// discards any message tagged with an earlier round.
class Transport {
public:
    virtual ~Transport() = default;
    virtual void register_node(NodeId node) = 0;
    virtual void send(NodeId to, const ProtocolMessage& msg) = 0;
    virtual std::vector<ProtocolMessage> collect(NodeId node, std::uint32_t round, MessageKind kind,
                                                 std::size_t expected, std::chrono::milliseconds timeout) = 0;
    /// Drop everything still queued (used when a round is rolled back).
    virtual void clear() = 0;
    virtual std::size_t rejected_stale() const = 0;
};

namespace detail {

// Frames per node, filtered on collection. Thread-safe.
class Mailboxes {
public:
    void add(NodeId node) {
        std::lock_guard lock(mu_);
        boxes_[node];
    }

    bool has(NodeId node) const {
        std::lock_guard lock(mu_);
        return boxes_.count(node) != 0;
    }

    void push(NodeId node, std::vector<std::uint8_t> frame) {
        {
            std::lock_guard lock(mu_);
            auto it = boxes_.find(node);
            if (it == boxes_.end()) throw ProtocolError("no mailbox for node " + std::to_string(node));
            it->second.push_back(std::move(frame));
        }
        cv_.notify_all();
    }

    std::vector<ProtocolMessage> take(NodeId node, std::uint32_t round, MessageKind kind, std::size_t expected,
                                      std::chrono::milliseconds timeout) {
        std::unique_lock lock(mu_);
        auto it = boxes_.find(node);
        if (it == boxes_.end()) throw ProtocolError("no mailbox for node " + std::to_string(node));
        std::vector<ProtocolMessage> out;
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        bool timed_out = false;
        while (true) {
            auto& box = it->second;
            std::vector<std::vector<std::uint8_t>> keep;
            for (auto& frame : box) {
                auto msg = ProtocolMessage::decode(frame);
                if (msg.round() < round) {
                    ++rejected_;
                    log::debug("dropping stale " + std::string(to_string(msg.kind())) + " from node " +
                               std::to_string(msg.sender()) + " for round " + std::to_string(msg.round()));
                } else if (msg.round() == round && msg.kind() == kind) {
                    out.push_back(std::move(msg));
                } else {
                    keep.push_back(std::move(frame));
                }
            }
            box = std::move(keep);
            if (out.size() >= expected || timed_out) break;
            timed_out = cv_.wait_until(lock, deadline) == std::cv_status::timeout;
        }
        std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.sender() < b.sender(); });
        return out;
    }

    void clear() {
        std::lock_guard lock(mu_);
        for (auto& [node, box] : boxes_) box.clear();
    }

    std::size_t rejected() const { return rejected_.load(); }

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::map<NodeId, std::vector<std::vector<std::uint8_t>>> boxes_;
    std::atomic<std::size_t> rejected_{0};
};

}  // namespace detail

/// Deterministic in-process delivery. Messages are encoded to wire frames on
/// send and decoded on collect, so only value copies ever cross nodes.
class InProcessBus final : public Transport {
public:
    void register_node(NodeId node) override { boxes_.add(node); }

    void send(NodeId to, const ProtocolMessage& msg) override {
        if (!boxes_.has(to)) throw ProtocolError("send to unknown node " + std::to_string(to));
        boxes_.push(to, msg.encode());
    }

    std::vector<ProtocolMessage> collect(NodeId node, std::uint32_t round, MessageKind kind, std::size_t expected,
                                         std::chrono::milliseconds) override {
        return boxes_.take(node, round, kind, expected, std::chrono::milliseconds(0));
    }

    void clear() override { boxes_.clear(); }
    std::size_t rejected_stale() const override { return boxes_.rejected(); }

private:
    detail::Mailboxes boxes_;
};

/// Loopback TCP delivery using the same length-prefixed frames. Each node
/// listens on its own port; a sender opens a connection per message.
class TcpTransport final : public Transport {
public:
    TcpTransport() = default;
    TcpTransport(const TcpTransport&) = delete;
    TcpTransport& operator=(const TcpTransport&) = delete;

    ~TcpTransport() override {
        for (auto& [node, l] : listeners_) {
            l->stopping = true;
            ::shutdown(l->fd, SHUT_RDWR);
            ::close(l->fd);
        }
        for (auto& [node, l] : listeners_)
            if (l->thread.joinable()) l->thread.join();
    }

    void register_node(NodeId node) override {
        if (listeners_.count(node)) return;
        auto l = std::make_unique<Listener>();
        l->fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (l->fd < 0) throw IoError("tcp transport: socket() failed");
        int one = 1;
        ::setsockopt(l->fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = 0;
        if (::bind(l->fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(l->fd, 64) != 0) {
            ::close(l->fd);
            throw IoError("tcp transport: cannot listen for node " + std::to_string(node));
        }
        socklen_t len = sizeof(addr);
        ::getsockname(l->fd, reinterpret_cast<sockaddr*>(&addr), &len);
        l->port = ntohs(addr.sin_port);
        boxes_.add(node);
        Listener* raw = l.get();
        l->thread = std::thread([this, raw, node] { accept_loop(*raw, node); });
        listeners_.emplace(node, std::move(l));
    }

    void send(NodeId to, const ProtocolMessage& msg) override {
        auto it = listeners_.find(to);
        if (it == listeners_.end()) throw ProtocolError("send to unknown node " + std::to_string(to));
        const auto frame = msg.encode();
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw IoError("tcp transport: socket() failed");
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(it->second->port);
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            ::close(fd);
            throw ProtocolError("tcp transport: node " + std::to_string(to) + " unreachable");
        }
        std::size_t off = 0;
        while (off < frame.size()) {
            const auto n = ::send(fd, frame.data() + off, frame.size() - off, MSG_NOSIGNAL);
            if (n <= 0) {
                ::close(fd);
                throw ProtocolError("tcp transport: write to node " + std::to_string(to) + " failed");
            }
            off += static_cast<std::size_t>(n);
        }
        ::close(fd);
    }

    std::vector<ProtocolMessage> collect(NodeId node, std::uint32_t round, MessageKind kind, std::size_t expected,
                                         std::chrono::milliseconds timeout) override {
        return boxes_.take(node, round, kind, expected, timeout);
    }

    void clear() override { boxes_.clear(); }
    std::size_t rejected_stale() const override { return boxes_.rejected(); }

    std::uint16_t port_of(NodeId node) const { return listeners_.at(node)->port; }

private:
    struct Listener {
        int fd = -1;
        std::uint16_t port = 0;
        std::atomic<bool> stopping{false};
        std::thread thread;
    };

    static bool read_exact(int fd, std::uint8_t* dst, std::size_t n) {
        std::size_t off = 0;
        while (off < n) {
            const auto r = ::recv(fd, dst + off, n - off, 0);
            if (r <= 0) return false;
            off += static_cast<std::size_t>(r);
        }
        return true;
    }

    void accept_loop(Listener& l, NodeId node) {
        while (!l.stopping) {
            const int conn = ::accept(l.fd, nullptr, nullptr);
            if (conn < 0) {
                if (l.stopping) return;
                continue;
            }
            while (true) {
                std::uint8_t prefix[4];
                if (!read_exact(conn, prefix, 4)) break;
                const std::uint32_t len = prefix[0] | (prefix[1] << 8) | (prefix[2] << 16) |
                                          (static_cast<std::uint32_t>(prefix[3]) << 24);
                std::vector<std::uint8_t> frame(4 + len);
                std::copy(prefix, prefix + 4, frame.begin());
                if (!read_exact(conn, frame.data() + 4, len)) break;
                boxes_.push(node, std::move(frame));
            }
            ::close(conn);
        }
    }

    detail::Mailboxes boxes_;
    std::map<NodeId, std::unique_ptr<Listener>> listeners_;
};

}  // namespace hbsl::swarm
