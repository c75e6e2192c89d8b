#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hbsl/data/dataset.hpp"
#include "hbsl/errors.hpp"
#include "hbsl/model/serialize.hpp"

namespace hbsl::swarm {

enum class MessageKind : std::uint8_t {
    report_accuracy = 1,
    submit_params = 2,
    broadcast_model = 3,
    round_done = 4,
};

inline const char* to_string(MessageKind k) {
    switch (k) {
        case MessageKind::report_accuracy: return "REPORT_ACCURACY";
        case MessageKind::submit_params: return "SUBMIT_PARAMS";
        case MessageKind::broadcast_model: return "BROADCAST_MODEL";
        case MessageKind::round_done: return "ROUND_DONE";
    }
    return "UNKNOWN";
}

/// A protocol message. Payloads can only be built from an accuracy scalar or
/// a parameter bundle, so example records never leave a node.
class ProtocolMessage {
public:
    static ProtocolMessage report_accuracy(data::NodeId sender, std::uint32_t round, double accuracy) {
        ProtocolMessage m(MessageKind::report_accuracy, sender, round);
        model::wire::put_f64(m.payload_, accuracy);
        return m;
    }

    static ProtocolMessage submit_params(data::NodeId sender, std::uint32_t round, const model::ModelParameters& p) {
        ProtocolMessage m(MessageKind::submit_params, sender, round);
        m.payload_ = model::serialize(p);
        return m;
    }

    static ProtocolMessage broadcast_model(data::NodeId sender, std::uint32_t round, std::vector<std::uint8_t> bytes) {
        ProtocolMessage m(MessageKind::broadcast_model, sender, round);
        m.payload_ = std::move(bytes);
        return m;
    }

    static ProtocolMessage round_done(data::NodeId sender, std::uint32_t round) {
        return ProtocolMessage(MessageKind::round_done, sender, round);
    }

    MessageKind kind() const noexcept { return kind_; }
    data::NodeId sender() const noexcept { return sender_; }
    std::uint32_t round() const noexcept { return round_; }
    std::span<const std::uint8_t> payload() const noexcept { return payload_; }

    double accuracy() const {
        expect(MessageKind::report_accuracy);
        model::wire::Reader r(payload_);
        return r.f64();
    }

    model::ModelParameters params() const {
        if (kind_ != MessageKind::submit_params && kind_ != MessageKind::broadcast_model)
            throw ProtocolError(std::string("message ") + to_string(kind_) + " carries no parameters");
        return model::deserialize(payload_);
    }

    /// u32 LE length of the rest, kind byte, u32 LE round, u16 LE sender, payload.
    std::vector<std::uint8_t> encode() const {
        std::vector<std::uint8_t> out;
        out.reserve(4 + kHeaderSize + payload_.size());
        model::wire::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(kHeaderSize + payload_.size()));
        model::wire::put_u8(out, static_cast<std::uint8_t>(kind_));
        model::wire::put_le<std::uint32_t>(out, round_);
        model::wire::put_le<std::uint16_t>(out, sender_);
        out.insert(out.end(), payload_.begin(), payload_.end());
        return out;
    }

    /// Decode one complete frame (including its length prefix).
    static ProtocolMessage decode(std::span<const std::uint8_t> frame) {
        model::wire::Reader r(frame);
        const auto len = r.le<std::uint32_t>();
        if (len < kHeaderSize || r.remaining() != len)
            throw ProtocolError("frame length " + std::to_string(len) + " does not match " +
                                std::to_string(r.remaining()) + " body bytes");
        const auto kind = r.le<std::uint8_t>();
        if (kind < 1 || kind > 4) throw ProtocolError("unknown message kind " + std::to_string(kind));
        ProtocolMessage m(static_cast<MessageKind>(kind), 0, 0);
        m.round_ = r.le<std::uint32_t>();
        m.sender_ = r.le<std::uint16_t>();
        const auto rest = r.rest();
        m.payload_.assign(rest.begin(), rest.end());
        if (m.kind_ == MessageKind::report_accuracy && m.payload_.size() != 8)
            throw ProtocolError("REPORT_ACCURACY payload must be 8 bytes");
        if (m.kind_ == MessageKind::round_done && !m.payload_.empty())
            throw ProtocolError("ROUND_DONE carries no payload");
        return m;
    }

    static constexpr std::size_t kHeaderSize = 1 + 4 + 2;

private:
    ProtocolMessage(MessageKind k, data::NodeId sender, std::uint32_t round) : kind_(k), sender_(sender), round_(round) {}

    void expect(MessageKind k) const {
        if (kind_ != k)
            throw ProtocolError(std::string("expected ") + to_string(k) + ", got " + to_string(kind_));
    }

    MessageKind kind_;
    data::NodeId sender_;
    std::uint32_t round_;
    std::vector<std::uint8_t> payload_;
};

}  // namespace hbsl::swarm
