#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "hbsl/hitl/feedback.hpp"
#include "hbsl/model/serialize.hpp"
#include "hbsl/swarm/election.hpp"
#include "hbsl/swarm/merge.hpp"
#include "hbsl/swarm/message.hpp"
#include "hbsl/swarm/node.hpp"
#include "hbsl/swarm/round.hpp"
#include "hbsl/swarm/transport.hpp"

using namespace hbsl;
using namespace hbsl::swarm;
using model::ModelParameters;
using namespace std::chrono_literals;

namespace {

constexpr std::size_t kVocab = 24;

ModelParameters scalar_bundle(double v) {
    auto p = model::init_parameters(2, 1, 1, 0);
    p.fill(v);
    return p;
}

// Flat value list read back from the wire format, independent of the tensor accessors.
std::vector<double> flat(const ModelParameters& p) {
    const auto bytes = model::serialize(p);
    const std::size_t n = p.parameter_count();
    std::vector<double> out(n);
    const std::size_t start = bytes.size() - n * 8;
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits = 0;
        for (int b = 7; b >= 0; --b) bits = (bits << 8) | bytes[start + i * 8 + b];
        std::memcpy(&out[i], &bits, 8);
    }
    return out;
}

std::vector<MergeContribution> random_contributions(std::size_t n, std::uint64_t seed) {
    std::vector<MergeContribution> c;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> w(0.1, 5.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto p = model::init_parameters(7, 3, 2, seed * 31 + i);
        for (auto& t : p.tensors())
            for (double& v : t.values) v = std::uniform_real_distribution<double>(-3, 3)(rng);
        c.push_back({static_cast<NodeId>(i + 1), p, w(rng), 0.0});
    }
    return c;
}

data::Dataset synthetic_set(std::size_t n, std::uint64_t seed, const std::string& prefix) {
    std::mt19937_64 rng(seed);
    data::Dataset d;
    for (std::size_t i = 0; i < n; ++i) {
        data::Example e;
        e.id = prefix + std::to_string(i);
        const int len = 3 + int(rng() % 5);
        int cue = 0;
        for (int k = 0; k < len; ++k) {
            const auto tok = static_cast<model::TokenId>(2 + rng() % (kVocab - 2));
            cue += tok < 8 ? 1 : 0;
            e.tokens.push_back(tok);
        }
        e.label = cue > 0 ? 1 : 0;
        e.raw_text = "sentence " + e.id;
        d.push_back(std::move(e));
    }
    return d;
}

data::NodeShard shard_for(NodeId id, std::size_t train, std::size_t test, std::uint64_t seed) {
    data::NodeShard s;
    s.node_id = id;
    const std::string tag = "n" + std::to_string(id) + "_";
    s.train = synthetic_set(train, seed, tag + "tr");
    s.validation = synthetic_set(std::max<std::size_t>(1, train / 10), seed + 1, tag + "va");
    s.test = synthetic_set(test, seed + 2, tag + "te");
    return s;
}

std::vector<NodeState> make_nodes(std::size_t n, Mode mode, std::size_t test = 40, bool identical = false) {
    std::vector<NodeState> nodes;
    for (std::size_t i = 0; i < n; ++i) {
        const auto id = static_cast<NodeId>(i + 1);
        const std::uint64_t seed = identical ? 77 : 100 + i;
        auto shard = shard_for(id, 30 + (identical ? 0 : 5 * i), test, seed);
        if (identical) {
            shard.node_id = id;
        }
        nodes.push_back(make_node(std::move(shard), model::init_parameters(kVocab, 4, 3, seed), mode, seed));
    }
    return nodes;
}

RoundConfig small_config(Mode mode, hitl::FeedbackProvider* provider = nullptr) {
    RoundConfig cfg;
    cfg.mode = mode;
    cfg.hyper.epochs = 1;
    cfg.hyper.batch_size = 8;
    cfg.provider = provider;
    return cfg;
}

bool all_serialize_equal(const std::vector<NodeState>& nodes) {
    const auto ref = model::serialize(nodes.front().params);
    return std::all_of(nodes.begin(), nodes.end(), [&](const auto& n) { return model::serialize(n.params) == ref; });
}

bool same_state(const NodeState& a, const NodeState& b) {
    auto ids = [](const data::Dataset& d) {
        std::vector<std::pair<std::string, int>> v;
        for (const auto& e : d) v.emplace_back(e.id, e.label);
        return v;
    };
    return a.node_id == b.node_id && a.params == b.params && a.optimizer == b.optimizer && a.round == b.round &&
           a.history.size() == b.history.size() && ids(a.shard.train) == ids(b.shard.train) &&
           ids(a.shard.test) == ids(b.shard.test) && a.shard.fed_back_ids == b.shard.fed_back_ids;
}

}  // namespace

// ---- election ----

TEST(ElectMaster, Examples) {
    std::vector<AccuracyReport> r{{1, 0.80}, {2, 0.91}, {3, 0.85}};
    EXPECT_EQ(elect_master(r), 2);
    std::vector<AccuracyReport> tie{{2, 0.90}, {1, 0.90}};
    EXPECT_EQ(elect_master(tie), 1);
    std::vector<AccuracyReport> one{{5, 0.1}};
    EXPECT_EQ(elect_master(one), 5);
    EXPECT_THROW(elect_master(std::span<const AccuracyReport>{}), ProtocolError);
}

TEST(ElectMaster, ScaleInvariant) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<AccuracyReport> r;
        for (NodeId i = 1; i <= 6; ++i) r.push_back({i, double(rng() % 20) / 20.0});
        const auto base = elect_master(r);
        for (double scale : {0.5, 3.0, 1e-3}) {
            auto s = r;
            for (auto& x : s) x.validation_accuracy *= scale;
            EXPECT_EQ(elect_master(s), base);
        }
    }
}

// ---- merge ----

TEST(Merge, ScalarAverage) {
    std::vector<MergeContribution> c{{1, scalar_bundle(2.0)}, {2, scalar_bundle(4.0)}};
    EXPECT_DOUBLE_EQ(merge_average(c).b_z(), 3.0);
}

TEST(Merge, IdenticalBundlesIdempotent) {
    auto base = random_contributions(1, 5).front().params;
    std::vector<MergeContribution> c(5, MergeContribution{1, base});
    const auto a = flat(merge_average(c));
    const auto b = flat(base);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LE(std::abs(a[i] - b[i]), std::abs(b[i]) * 2.3e-16);
}

TEST(Merge, AverageMatchesScalarOracle) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto c = random_contributions(4, seed);
        const auto got = flat(merge_average(c));
        std::vector<double> want(got.size(), 0.0);
        for (const auto& x : c) {
            const auto f = flat(x.params);
            for (std::size_t i = 0; i < f.size(); ++i) want[i] += f[i];
        }
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i] / 4.0, 1e-12);
    }
}

TEST(Merge, WeightedMatchesScalarOracle) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto c = random_contributions(3, seed);
        double wsum = 0.0;
        for (const auto& x : c) wsum += x.weight;
        std::vector<double> num(flat(c[0].params).size(), 0.0);
        for (const auto& x : c) {
            const auto f = flat(x.params);
            for (std::size_t i = 0; i < f.size(); ++i) num[i] += x.weight * f[i];
        }
        const auto norm = flat(merge_weighted(c, MergeConvention::normalized));
        const auto lit = flat(merge_weighted(c, MergeConvention::literal));
        for (std::size_t i = 0; i < num.size(); ++i) {
            EXPECT_NEAR(norm[i], num[i] / wsum, 1e-12);
            EXPECT_NEAR(lit[i], num[i] / (3.0 * wsum), 1e-12);
        }
    }
}

TEST(Merge, WeightedExamples) {
    std::vector<MergeContribution> eq{{1, scalar_bundle(2.0), 1.0}, {2, scalar_bundle(2.0), 1.0}};
    EXPECT_DOUBLE_EQ(merge_weighted(eq, MergeConvention::literal).b_z(), 1.0);
    std::vector<MergeContribution> w{{1, scalar_bundle(4.0), 3.0}, {2, scalar_bundle(0.0), 1.0}};
    EXPECT_DOUBLE_EQ(merge_weighted(w, MergeConvention::normalized).b_z(), 3.0);

    auto c = random_contributions(4, 8);
    for (auto& x : c) x.weight = 2.5;
    const auto a = flat(merge_average(c));
    const auto b = flat(merge_weighted(c, MergeConvention::normalized));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Merge, LiteralShrinksEqualWeightMeanByHalf) {
    auto c = random_contributions(2, 12);
    for (auto& x : c) x.weight = 1.0;
    const auto mean = flat(merge_average(c));
    const auto lit = flat(merge_weighted(c, MergeConvention::literal));
    for (std::size_t i = 0; i < mean.size(); ++i) EXPECT_NEAR(lit[i], mean[i] / 2.0, 1e-12);
}

TEST(Merge, Linearity) {
    auto c = random_contributions(5, 21);
    auto scale_all = [](std::vector<MergeContribution> v, double alpha) {
        for (auto& x : v)
            for (auto& t : x.params.tensors())
                for (double& v : t.values) v *= alpha;
        return v;
    };
    const auto base = flat(merge_average(c));
    // Power-of-two scaling is exact in binary floating point, so the merge commutes bit for bit.
    for (double alpha : {0.25, 2.0, 8.0}) {
        const auto a = flat(merge_average(scale_all(c, alpha)));
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], alpha * base[i]);
    }
    // Otherwise the result stays within one ulp of the largest contributing magnitude.
    const double alpha = 0.37;
    const auto a = flat(merge_average(scale_all(c, alpha)));
    std::vector<double> scale(a.size(), 0.0);
    for (const auto& x : c) {
        const auto f = flat(x.params);
        for (std::size_t i = 0; i < f.size(); ++i) scale[i] = std::max(scale[i], std::abs(alpha * f[i]));
    }
    for (std::size_t i = 0; i < a.size(); ++i)
        EXPECT_LE(std::abs(a[i] - alpha * base[i]), std::nextafter(scale[i], 1e300) - scale[i]);
}

TEST(Merge, Errors) {
    std::vector<MergeContribution> bad{{1, model::init_parameters(7, 3, 2, 1)}, {2, model::init_parameters(8, 3, 2, 1)}};
    try {
        merge_average(bad);
        FAIL();
    } catch (const ProtocolError& e) {
        EXPECT_NE(std::string(e.what()).find("embedding"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("node 2"), std::string::npos);
    }
    EXPECT_THROW(merge_weighted(bad, MergeConvention::normalized), ProtocolError);
    auto c = random_contributions(2, 1);
    c[1].weight = 0.0;
    EXPECT_THROW(merge_weighted(c, MergeConvention::normalized), ConfigError);
    c[1].weight = -1.0;
    EXPECT_THROW(merge_weighted(c, MergeConvention::literal), ConfigError);
    EXPECT_THROW(merge_average(std::span<const MergeContribution>{}), ProtocolError);
}

// ---- messages ----

static_assert(!std::is_constructible_v<ProtocolMessage, data::Example>);
static_assert(!std::is_constructible_v<ProtocolMessage, data::Dataset>);
static_assert(!std::is_default_constructible_v<ProtocolMessage>);

TEST(Message, RoundTripEveryKind) {
    const auto p = model::init_parameters(5, 2, 2, 4);
    const ProtocolMessage msgs[] = {ProtocolMessage::report_accuracy(3, 7, 0.8125),
                                    ProtocolMessage::submit_params(4, 7, p),
                                    ProtocolMessage::broadcast_model(1, 8, model::serialize(p)),
                                    ProtocolMessage::round_done(2, 9)};
    for (const auto& m : msgs) {
        const auto d = ProtocolMessage::decode(m.encode());
        EXPECT_EQ(d.kind(), m.kind());
        EXPECT_EQ(d.sender(), m.sender());
        EXPECT_EQ(d.round(), m.round());
        EXPECT_TRUE(std::equal(d.payload().begin(), d.payload().end(), m.payload().begin(), m.payload().end()));
    }
    EXPECT_DOUBLE_EQ(ProtocolMessage::decode(msgs[0].encode()).accuracy(), 0.8125);
    EXPECT_EQ(ProtocolMessage::decode(msgs[1].encode()).params(), p);
    EXPECT_THROW(msgs[0].params(), ProtocolError);
    EXPECT_THROW(msgs[3].accuracy(), ProtocolError);
}

TEST(Message, HeaderLayout) {
    const auto f = ProtocolMessage::round_done(0x0102, 0x0A0B0C0D).encode();
    const std::vector<std::uint8_t> want{7, 0, 0, 0, 4, 0x0D, 0x0C, 0x0B, 0x0A, 0x02, 0x01};
    EXPECT_EQ(f, want);
}

TEST(Message, RejectsMalformedFrames) {
    auto f = ProtocolMessage::round_done(1, 1).encode();
    auto bad_kind = f;
    bad_kind[4] = 9;
    EXPECT_THROW(ProtocolMessage::decode(bad_kind), ProtocolError);
    auto short_frame = f;
    short_frame.pop_back();
    EXPECT_THROW(ProtocolMessage::decode(short_frame), hbsl::Error);
    auto acc = ProtocolMessage::report_accuracy(1, 1, 0.5).encode();
    acc.push_back(0);
    acc[0] += 1;
    EXPECT_THROW(ProtocolMessage::decode(acc), ProtocolError);
}

TEST(Message, PayloadsCarryNoRawData) {
    // Train a node, then check no message it emits contains its example text or ids.
    auto nodes = make_nodes(2, Mode::SL);
    for (auto& e : nodes[0].shard.train) e.raw_text = "SECRET-" + e.id + "-statement";
    model::TrainHyper hyper;
    hyper.epochs = 1;
    model::train_epochs(nodes[0].params, nodes[0].optimizer, nodes[0].shard.train, hyper, 1);
    const std::vector<std::vector<std::uint8_t>> frames{
        ProtocolMessage::submit_params(1, 1, nodes[0].params).encode(),
        ProtocolMessage::broadcast_model(1, 1, model::serialize(nodes[0].params)).encode(),
        ProtocolMessage::report_accuracy(1, 1, 0.5).encode(), ProtocolMessage::round_done(1, 1).encode()};
    for (const auto& f : frames) {
        const std::string blob(f.begin(), f.end());
        EXPECT_EQ(blob.find("SECRET"), std::string::npos);
        for (const auto& e : nodes[0].shard.train) EXPECT_EQ(blob.find(e.id), std::string::npos);
    }
}

// ---- transports ----

TEST(InProcessBus, OrdersBySenderAndDropsStale) {
    InProcessBus bus;
    for (NodeId n : {1, 2, 3}) bus.register_node(n);
    bus.send(1, ProtocolMessage::report_accuracy(3, 2, 0.3));
    bus.send(1, ProtocolMessage::report_accuracy(2, 2, 0.2));
    bus.send(1, ProtocolMessage::report_accuracy(2, 1, 0.9));
    bus.send(1, ProtocolMessage::round_done(3, 2));
    auto got = bus.collect(1, 2, MessageKind::report_accuracy, 2, 0ms);
    ASSERT_EQ(got.size(), 2u);
    EXPECT_EQ(got[0].sender(), 2);
    EXPECT_EQ(got[1].sender(), 3);
    EXPECT_EQ(bus.rejected_stale(), 1u);
    EXPECT_EQ(bus.collect(1, 2, MessageKind::round_done, 1, 0ms).size(), 1u);
    EXPECT_THROW(bus.send(9, ProtocolMessage::round_done(1, 1)), ProtocolError);
}

TEST(InProcessBus, ClearDropsQueued) {
    InProcessBus bus;
    bus.register_node(1);
    bus.send(1, ProtocolMessage::round_done(2, 1));
    bus.clear();
    EXPECT_TRUE(bus.collect(1, 1, MessageKind::round_done, 1, 0ms).empty());
}

TEST(TcpTransport, DeliversFramesOverLoopback) {
    TcpTransport tcp;
    tcp.register_node(1);
    tcp.register_node(2);
    EXPECT_NE(tcp.port_of(1), tcp.port_of(2));
    const auto p = model::init_parameters(30, 5, 4, 2);
    tcp.send(2, ProtocolMessage::submit_params(1, 1, p));
    tcp.send(2, ProtocolMessage::report_accuracy(1, 0, 0.5));
    auto got = tcp.collect(2, 1, MessageKind::submit_params, 1, 5s);
    ASSERT_EQ(got.size(), 1u);
    EXPECT_EQ(got[0].params(), p);
    const auto start = std::chrono::steady_clock::now();
    EXPECT_TRUE(tcp.collect(1, 1, MessageKind::round_done, 1, 50ms).empty());
    EXPECT_GE(std::chrono::steady_clock::now() - start, 45ms);
}

// ---- broadcast ----

TEST(Broadcast, AllNodesSerializeIdentically) {
    auto nodes = make_nodes(4, Mode::SL);
    for (auto& n : nodes) n.optimizer.step = 5, n.optimizer.first.fill(0.3);
    InProcessBus bus;
    for (auto& n : nodes) bus.register_node(n.node_id);
    const auto merged = model::init_parameters(kVocab, 4, 3, 999);
    const auto acks = broadcast_model(bus, 2, merged, nodes, 1);
    EXPECT_EQ(acks, (std::vector<NodeId>{1, 3, 4}));
    for (const auto& n : nodes) {
        if (n.node_id == 2) continue;
        EXPECT_EQ(n.params, merged);
        EXPECT_EQ(n.optimizer.step, 0u);
        EXPECT_TRUE(std::all_of(n.optimizer.first.tensors().begin(), n.optimizer.first.tensors().end(),
                                [](const auto& t) { return std::all_of(t.values.begin(), t.values.end(), [](double v) { return v == 0.0; }); }));
    }
}

TEST(Broadcast, SingleNodeIsNoop) {
    auto nodes = make_nodes(1, Mode::SL);
    InProcessBus bus;
    bus.register_node(1);
    const auto before = nodes[0].params;
    EXPECT_TRUE(broadcast_model(bus, 1, model::init_parameters(kVocab, 4, 3, 5), nodes, 1).empty());
    EXPECT_EQ(nodes[0].params, before);
}

TEST(Broadcast, MismatchedPeerLeftUntouched) {
    auto nodes = make_nodes(3, Mode::SL);
    nodes[2].params = model::init_parameters(kVocab + 1, 4, 3, 1);
    nodes[2].optimizer = model::OptimizerState(nodes[2].params);
    auto before = nodes;
    InProcessBus bus;
    for (auto& n : nodes) bus.register_node(n.node_id);
    EXPECT_THROW(broadcast_model(bus, 1, model::init_parameters(kVocab, 4, 3, 5), nodes, 1), ProtocolError);
    for (std::size_t i = 0; i < nodes.size(); ++i) EXPECT_EQ(nodes[i].params, before[i].params);
}

// ---- rounds ----

TEST(RunRound, SlLeavesShardsAndFeedbackUntouched) {
    auto nodes = make_nodes(4, Mode::SL);
    InProcessBus bus;
    std::vector<std::size_t> sizes;
    for (auto& n : nodes) sizes.push_back(n.shard.train.size());
    const auto ops = hitl::operation_counter().load();
    for (int r = 0; r < 3; ++r) {
        const auto res = run_round(nodes, small_config(Mode::SL), bus);
        ASSERT_EQ(res.reports.size(), 4u);
        for (const auto& rep : res.reports) {
            EXPECT_EQ(rep.feedback_size, 0u);
            EXPECT_GE(rep.test_accuracy, 0.0);
            EXPECT_LE(rep.test_accuracy, 1.0);
        }
        EXPECT_TRUE(all_serialize_equal(nodes));
    }
    EXPECT_EQ(hitl::operation_counter().load(), ops);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        EXPECT_EQ(nodes[i].shard.train.size(), sizes[i]);
        EXPECT_EQ(nodes[i].round, 3u);
        EXPECT_EQ(nodes[i].history.size(), 3u);
    }
}

TEST(RunRound, HbslGrowsByFloorOfPortion) {
    auto nodes = make_nodes(3, Mode::HBSL, 1000);
    hitl::OracleProvider oracle;
    InProcessBus bus;
    std::vector<std::size_t> before;
    for (auto& n : nodes) before.push_back(n.shard.train.size());
    auto res = run_round(nodes, small_config(Mode::HBSL, &oracle), bus);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        EXPECT_EQ(nodes[i].shard.train.size(), before[i] + 200);
        EXPECT_EQ(res.reports[i].feedback_size, 200u);
        EXPECT_EQ(res.reports[i].train_size, before[i]);
    }
    EXPECT_TRUE(all_serialize_equal(nodes));
    auto res2 = run_round(nodes, small_config(Mode::HBSL, &oracle), bus);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        EXPECT_EQ(res2.reports[i].feedback_size, 200u);
        EXPECT_GE(nodes[i].shard.train.size(), before[i] + 200);
        EXPECT_LE(nodes[i].shard.train.size(), before[i] + 400);
    }
}

TEST(RunRound, FeedbackLabelsMatchGroundTruth) {
    auto nodes = make_nodes(2, Mode::HBSL, 100);
    hitl::OracleProvider oracle;
    InProcessBus bus;
    run_round(nodes, small_config(Mode::HBSL, &oracle), bus);
    for (const auto& n : nodes) {
        for (const auto& e : n.shard.train) {
            if (!n.shard.fed_back_ids.count(e.id)) continue;
            auto it = std::find_if(n.shard.test.begin(), n.shard.test.end(), [&](const auto& t) { return t.id == e.id; });
            ASSERT_NE(it, n.shard.test.end());
            EXPECT_EQ(e.label, it->label);
        }
    }
}

TEST(RunRound, AtomicUnderInjectedFailure) {
    hitl::OracleProvider oracle;
    for (auto stage : {RoundStage::local_training, RoundStage::model_update, RoundStage::broadcast,
                       RoundStage::inference, RoundStage::feedback}) {
        auto nodes = make_nodes(4, Mode::HBSL);
        InProcessBus bus;
        run_round(nodes, small_config(Mode::HBSL, &oracle), bus);
        const auto snapshot = nodes;
        auto cfg = small_config(Mode::HBSL, &oracle);
        const NodeId victim = stage == RoundStage::broadcast ? 0 : 3;
        cfg.fault_hook = [&](RoundStage s, NodeId n) {
            if (s == stage && (victim == 0 || n == victim)) throw TrainingError(std::string("injected at ") + to_string(s));
        };
        EXPECT_THROW(run_round(nodes, cfg, bus), TrainingError) << to_string(stage);
        for (std::size_t i = 0; i < nodes.size(); ++i) EXPECT_TRUE(same_state(nodes[i], snapshot[i])) << to_string(stage);
        // The same transport keeps working once the fault is gone.
        run_round(nodes, small_config(Mode::HBSL, &oracle), bus);
        EXPECT_EQ(nodes[0].round, 2u);
        EXPECT_TRUE(all_serialize_equal(nodes));
    }
}

TEST(RunRound, IdenticalNodesReportIdentically) {
    auto nodes = make_nodes(3, Mode::SL, 40, true);
    InProcessBus bus;
    auto res = run_round(nodes, small_config(Mode::SL), bus);
    for (const auto& r : res.reports) {
        EXPECT_EQ(r.test_accuracy, res.reports[0].test_accuracy);
        EXPECT_EQ(r.mean_train_loss, res.reports[0].mean_train_loss);
        EXPECT_EQ(r.train_size, res.reports[0].train_size);
    }
    EXPECT_EQ(res.master, 1);
}

TEST(RunRound, ParallelMatchesSequential) {
    hitl::OracleProvider oracle;
    auto a = make_nodes(4, Mode::HBSL);
    auto b = a;
    InProcessBus bus_a, bus_b;
    auto cfg = small_config(Mode::HBSL, &oracle);
    auto par = cfg;
    par.parallel = true;
    for (int r = 0; r < 2; ++r) {
        auto ra = run_round(a, cfg, bus_a);
        auto rb = run_round(b, par, bus_b);
        ASSERT_EQ(ra.reports.size(), rb.reports.size());
        for (std::size_t i = 0; i < ra.reports.size(); ++i)
            EXPECT_EQ(experiment::to_csv_row(ra.reports[i]), experiment::to_csv_row(rb.reports[i]));
    }
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].params, b[i].params);
}

TEST(RunRound, TcpMatchesInProcess) {
    auto a = make_nodes(3, Mode::SL);
    auto b = a;
    InProcessBus bus;
    TcpTransport tcp;
    auto ra = run_round(a, small_config(Mode::SL), bus);
    auto rb = run_round(b, small_config(Mode::SL), tcp);
    for (std::size_t i = 0; i < ra.reports.size(); ++i)
        EXPECT_EQ(experiment::to_csv_row(ra.reports[i]), experiment::to_csv_row(rb.reports[i]));
    EXPECT_TRUE(all_serialize_equal(b));
}

TEST(RunRound, LeakageFreeExcludesFedBackItems) {
    auto nodes = make_nodes(2, Mode::HBSL, 20);
    hitl::OracleProvider oracle;
    InProcessBus bus;
    auto cfg = small_config(Mode::HBSL, &oracle);
    cfg.evaluation = EvaluationMode::leakage_free;
    cfg.feedback_portion = 1.0;
    run_round(nodes, cfg, bus);
    for (const auto& n : nodes) EXPECT_EQ(n.shard.fed_back_ids.size(), 20u);
    EXPECT_THROW(run_round(nodes, cfg, bus), EvaluationError);
    EXPECT_EQ(nodes[0].round, 1u);
    cfg.evaluation = EvaluationMode::faithful;
    EXPECT_NO_THROW(run_round(nodes, cfg, bus));
}

TEST(RunRound, MergedModelObserved) {
    auto nodes = make_nodes(3, Mode::SL);
    InProcessBus bus;
    auto cfg = small_config(Mode::SL);
    ModelParameters seen;
    NodeId seen_master = 0;
    cfg.on_merged = [&](std::uint32_t, NodeId m, const ModelParameters& p) {
        seen = p;
        seen_master = m;
    };
    auto res = run_round(nodes, cfg, bus);
    EXPECT_EQ(seen_master, res.master);
    EXPECT_EQ(seen, nodes[0].params);
    const auto best = std::max_element(res.validation_accuracy.begin(), res.validation_accuracy.end());
    EXPECT_EQ(*best, res.validation_accuracy[res.master - 1]);
}

TEST(RunRound, PreconditionErrors) {
    auto nodes = make_nodes(2, Mode::HBSL);
    InProcessBus bus;
    EXPECT_THROW(run_round(nodes, small_config(Mode::HBSL), bus), ConfigError);
    nodes[1].round = 4;
    EXPECT_THROW(run_round(nodes, small_config(Mode::SL), bus), ProtocolError);
    std::vector<NodeState> none;
    EXPECT_THROW(run_round(none, small_config(Mode::SL), bus), ConfigError);
}
