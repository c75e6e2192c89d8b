#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hbsl/errors.hpp"
#include "hbsl/seed.hpp"

namespace hbsl::model {

struct ModelDims {
    std::size_t vocab_size = 0;
    std::size_t embed_dim = 0;
    std::size_t hidden_dim = 0;

    friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Dense row-major tensor of doubles. Rank 0 holds a single scalar.
struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> values;

    Tensor() = default;
    Tensor(std::string n, std::vector<std::size_t> s) : name(std::move(n)), shape(std::move(s)) {
        std::size_t count = 1;
        for (auto d : shape) count *= d;
        values.assign(count, 0.0);
    }

    std::size_t size() const noexcept { return values.size(); }
    std::size_t cols() const noexcept { return shape.size() >= 2 ? shape[1] : 1; }

    double& at(std::size_t r, std::size_t c) noexcept { return values[r * shape[1] + c]; }
    double at(std::size_t r, std::size_t c) const noexcept { return values[r * shape[1] + c]; }

    std::span<double> row(std::size_t r) noexcept { return {values.data() + r * cols(), cols()}; }
    std::span<const double> row(std::size_t r) const noexcept { return {values.data() + r * cols(), cols()}; }

    bool same_shape(const Tensor& o) const noexcept { return name == o.name && shape == o.shape; }
};

/// Fixed order of the tensors in every bundle, which is also the order they
/// are serialized and merged in.
enum class Slot : std::size_t {
    embedding,
    w_e_fwd,
    w_e_bwd,
    w_h_fwd,
    w_h_bwd,
    b_h_fwd,
    b_h_bwd,
    w_z_fwd,
    w_z_bwd,
    b_z,
};

inline constexpr std::size_t kSlotCount = 10;

inline constexpr std::array<std::string_view, kSlotCount> kSlotNames = {
    "embedding", "w_e_fwd", "w_e_bwd", "w_h_fwd", "w_h_bwd",
    "b_h_fwd",   "b_h_bwd", "w_z_fwd", "w_z_bwd", "b_z",
};

inline std::vector<std::size_t> slot_shape(Slot slot, const ModelDims& d) {
    switch (slot) {
        case Slot::embedding: return {d.vocab_size, d.embed_dim};
        case Slot::w_e_fwd:
        case Slot::w_e_bwd: return {d.embed_dim, d.hidden_dim};
        case Slot::w_h_fwd:
        case Slot::w_h_bwd: return {d.hidden_dim, d.hidden_dim};
        case Slot::b_h_fwd:
        case Slot::b_h_bwd:
        case Slot::w_z_fwd:
        case Slot::w_z_bwd: return {d.hidden_dim};
        case Slot::b_z: return {};
    }
    return {};
}

inline bool is_bias(Slot slot) noexcept {
    return slot == Slot::b_h_fwd || slot == Slot::b_h_bwd || slot == Slot::b_z;
}

/// A named set of tensors shaped for one BRNN. The tag keeps parameters,
/// gradients and optimizer moments from being mixed up at compile time while
/// sharing all the shape bookkeeping.
template <typename Tag>
class TensorBundle {
public:
    TensorBundle() = default;

    explicit TensorBundle(const ModelDims& dims) : dims_(dims) {
        for (std::size_t i = 0; i < kSlotCount; ++i) {
            tensors_[i] = Tensor(std::string(kSlotNames[i]), slot_shape(static_cast<Slot>(i), dims));
        }
    }

    template <typename OtherTag>
    static TensorBundle zeros_like(const TensorBundle<OtherTag>& other) {
        return TensorBundle(other.dims());
    }

    const ModelDims& dims() const noexcept { return dims_; }

    Tensor& operator[](Slot s) noexcept { return tensors_[static_cast<std::size_t>(s)]; }
    const Tensor& operator[](Slot s) const noexcept { return tensors_[static_cast<std::size_t>(s)]; }

    std::array<Tensor, kSlotCount>& tensors() noexcept { return tensors_; }
    const std::array<Tensor, kSlotCount>& tensors() const noexcept { return tensors_; }

    double b_z() const noexcept { return (*this)[Slot::b_z].values[0]; }
    double& b_z() noexcept { return (*this)[Slot::b_z].values[0]; }

    std::size_t parameter_count() const noexcept {
        std::size_t n = 0;
        for (const auto& t : tensors_) n += t.size();
        return n;
    }

    void fill(double v) {
        for (auto& t : tensors_) std::fill(t.values.begin(), t.values.end(), v);
    }

    bool all_finite() const noexcept {
        for (const auto& t : tensors_)
            for (double v : t.values)
                if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const TensorBundle& a, const TensorBundle& b) {
        if (!(a.dims_ == b.dims_)) return false;
        for (std::size_t i = 0; i < kSlotCount; ++i) {
            if (a.tensors_[i].shape != b.tensors_[i].shape || a.tensors_[i].values != b.tensors_[i].values)
                return false;
        }
        return true;
    }

private:
    ModelDims dims_{};
    std::array<Tensor, kSlotCount> tensors_{};
};

struct ParamsTag {};
struct GradTag {};

using ModelParameters = TensorBundle<ParamsTag>;
using Gradients = TensorBundle<GradTag>;

/// Names of tensors whose shapes differ between two bundles (empty when congruent).
template <typename A, typename B>
std::vector<std::string> shape_mismatches(const TensorBundle<A>& a, const TensorBundle<B>& b) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < kSlotCount; ++i) {
        if (!a.tensors()[i].same_shape(b.tensors()[i])) out.emplace_back(kSlotNames[i]);
    }
    return out;
}

inline std::string join_names(const std::vector<std::string>& names) {
    std::string s;
    for (const auto& n : names) {
        if (!s.empty()) s += ", ";
        s += n;
    }
    return s;
}

inline constexpr double kInitRange = 0.08;

/// Weights uniform in [-0.08, 0.08] from a seeded generator, biases zero.
inline ModelParameters init_parameters(std::size_t vocab_size, std::size_t embed_dim, std::size_t hidden_dim,
                                       std::uint64_t seed) {
    if (vocab_size == 0 || embed_dim == 0 || hidden_dim == 0) {
        throw ConfigError("init_parameters: every dimension must be >= 1 (vocab=" + std::to_string(vocab_size) +
                          ", embed=" + std::to_string(embed_dim) + ", hidden=" + std::to_string(hidden_dim) + ")");
    }
    ModelParameters p(ModelDims{vocab_size, embed_dim, hidden_dim});
    Rng rng(derive_seed(seed, {stream::init}));
    for (std::size_t i = 0; i < kSlotCount; ++i) {
        if (is_bias(static_cast<Slot>(i))) continue;
        for (double& v : p.tensors()[i].values) v = (2.0 * uniform_unit(rng) - 1.0) * kInitRange;
    }
    return p;
}

}  // namespace hbsl::model
