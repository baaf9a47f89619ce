#include "tensormem/sensory.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "tensormem/errors.hpp"

namespace tensormem {

SensoryBuffer::SensoryBuffer(std::size_t channels, std::size_t buffer_length)
    : channels_(channels), positions_(buffer_length + 1), values_(channels * (buffer_length + 1), 0.0) {
    if (channels == 0) throw DimensionError("sensory buffer needs at least one channel");
}

double& SensoryBuffer::at(std::size_t q, std::size_t gamma) {
    if (q >= channels_ || gamma >= positions_) throw DimensionError("buffer index out of range");
    return values_[q * positions_ + gamma];
}

double SensoryBuffer::at(std::size_t q, std::size_t gamma) const {
    if (q >= channels_ || gamma >= positions_) throw DimensionError("buffer index out of range");
    return values_[q * positions_ + gamma];
}

SensoryBuffer buffer_at(const Registry& registry, const SensoryStore& store, EntityId time,
                        std::size_t channels) {
    registry.require_kind(time, EntityKind::Time);
    SensoryBuffer buf(channels, store.buffer_length());
    for (const auto& e : store.entries()) {
        if (e.t != time) continue;
        const auto q = registry.ordinal(e.q);
        if (q >= channels) {
            throw DimensionError("channel '" + registry.entity(e.q).label +
                                 "' exceeds the configured channel count " +
                                 std::to_string(channels));
        }
        buf.at(q, gamma_index(registry, e.gamma)) = e.value;
    }
    return buf;
}

// ---------------------------------------------------------------------------

EncoderM::EncoderM(std::size_t input_dim, std::vector<std::size_t> sub_dims, bool nonneg_mode)
    : input_dim_(input_dim), sub_dims_(std::move(sub_dims)), nonneg_(nonneg_mode) {
    if (sub_dims_.empty()) throw DimensionError("encoder needs at least one sub-map");
    output_dim_ = std::accumulate(sub_dims_.begin(), sub_dims_.end(), std::size_t{0});
    if (output_dim_ == 0 || input_dim_ == 0) throw DimensionError("encoder dimensions must be positive");
    std::size_t off = 0;
    for (auto d : sub_dims_) {
        sub_offsets_.push_back(off);
        off += d * input_dim_ + d;
    }
    params_.assign(off, 0.0);
}

std::size_t EncoderM::row_offset(std::size_t row) const {
    if (row >= output_dim_) throw DimensionError("encoder row out of range");
    std::size_t base = 0;
    for (std::size_t k = 0; k < sub_dims_.size(); ++k) {
        if (row < base + sub_dims_[k]) return sub_offsets_[k] + (row - base) * input_dim_;
        base += sub_dims_[k];
    }
    return 0;
}

std::size_t EncoderM::bias_offset(std::size_t row) const {
    std::size_t base = 0;
    for (std::size_t k = 0; k < sub_dims_.size(); ++k) {
        if (row < base + sub_dims_[k]) {
            return sub_offsets_[k] + sub_dims_[k] * input_dim_ + (row - base);
        }
        base += sub_dims_[k];
    }
    throw DimensionError("encoder row out of range");
}

double& EncoderM::weight(std::size_t row, std::size_t col) {
    if (col >= input_dim_) throw DimensionError("encoder column out of range");
    return params_[row_offset(row) + col];
}

double& EncoderM::bias(std::size_t row) { return params_[bias_offset(row)]; }

Vector EncoderM::pre_activation(std::span<const double> input) const {
    if (input.size() != input_dim_) {
        throw DimensionError("sensory buffer has " + std::to_string(input.size()) +
                             " values, encoder expects " + std::to_string(input_dim_));
    }
    Vector z(output_dim_);
    for (std::size_t row = 0; row < output_dim_; ++row) {
        const double* w = params_.data() + row_offset(row);
        double s = params_[bias_offset(row)];
        for (std::size_t i = 0; i < input_dim_; ++i) s += w[i] * input[i];
        z[row] = s;
    }
    return z;
}

Vector EncoderM::encode(std::span<const double> input) const {
    Vector z = pre_activation(input);
    if (nonneg_) {
        for (auto& x : z) x = std::exp(x);
    }
    return z;
}

void EncoderM::backward(std::span<const double> input, std::span<const double> d_h,
                        std::span<double> d_params) const {
    if (d_h.size() != output_dim_ || d_params.size() != params_.size()) {
        throw DimensionError("encoder gradient shape mismatch");
    }
    const Vector h = nonneg_ ? encode(input) : Vector{};
    if (input.size() != input_dim_) throw DimensionError("encoder input shape mismatch");
    for (std::size_t row = 0; row < output_dim_; ++row) {
        const double dz = nonneg_ ? d_h[row] * h[row] : d_h[row];
        const std::size_t w = row_offset(row);
        for (std::size_t i = 0; i < input_dim_; ++i) d_params[w + i] += dz * input[i];
        d_params[bias_offset(row)] += dz;
    }
}

void EncoderM::randomize(Rng& rng, double stddev) {
    for (auto& w : params_) w = normal(rng, 0.0, stddev);
}

Vector EncoderM::reconstruct(std::span<const double> h) const {
    if (h.size() != output_dim_) throw DimensionError("latent vector length mismatch");
    Eigen::MatrixXd w(output_dim_, input_dim_);
    Eigen::VectorXd z(output_dim_);
    for (std::size_t row = 0; row < output_dim_; ++row) {
        const double* src = params_.data() + row_offset(row);
        for (std::size_t i = 0; i < input_dim_; ++i) w(row, i) = src[i];
        if (nonneg_ && !(h[row] > 0.0)) {
            throw NumericalError("nonnegative encoder output must be strictly positive");
        }
        z(row) = (nonneg_ ? std::log(h[row]) : h[row]) - params_[bias_offset(row)];
    }
    const Eigen::VectorXd x = w.completeOrthogonalDecomposition().solve(z);
    return Vector(x.data(), x.data() + x.size());
}

// ---------------------------------------------------------------------------

double novelty(std::span<const double> predicted, std::span<const double> encoded) {
    if (predicted.size() != encoded.size() || encoded.empty()) {
        throw DimensionError("novelty needs two latent vectors of equal length");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < encoded.size(); ++i) {
        const double d = predicted[i] - encoded[i];
        s += d * d;
    }
    return s / static_cast<double>(encoded.size());
}

EpisodeOutcome form_episode(const EncoderM& encoder, const SensoryBuffer& buffer,
                            const std::optional<Vector>& predicted, Registry& registry,
                            double tau, std::string_view time_label, bool significant) {
    if (!(tau >= 0.0)) throw UsageError("novelty threshold must be non-negative");
    if (encoder.output_dim() != registry.dim()) {
        throw DimensionError("encoder output does not match the latent dimension");
    }
    EpisodeOutcome out;
    out.encoded = encoder.encode(buffer);
    out.novelty = predicted ? novelty(*predicted, out.encoded)
                            : std::numeric_limits<double>::infinity();
    if (out.novelty >= tau || significant) {
        if (registry.find(time_label, EntityKind::Time)) {
            throw DataError("time entity '" + std::string(time_label) + "' already exists");
        }
        const EntityId t = registry.register_entity(time_label, EntityKind::Time);
        registry.set_embedding(t, out.encoded);
        out.time = t;
    }
    return out;
}

// ---------------------------------------------------------------------------

std::size_t time_slot(const Memory& memory) {
    for (std::size_t j = 0; j < memory.arity(); ++j) {
        if (memory.slot_kind(j) == EntityKind::Time) return j;
    }
    throw UnsupportedError("memory has no time slot");
}

namespace {

std::vector<std::size_t> symbol_slots(const Memory& memory, std::size_t tslot) {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < memory.arity(); ++j) {
        if (j != tslot) order.push_back(j);
    }
    if (order.size() != 3) throw UnsupportedError("scene decoding needs a 4-way (s, p, o, t) memory");
    return order;
}

}  // namespace

std::vector<std::array<EntityId, 3>> decode_scene(const Memory& episodic, const Registry& registry,
                                                  std::span<const double> h_t, double beta,
                                                  std::size_t n_samples, Rng& rng) {
    const std::size_t tslot = time_slot(episodic);
    const auto order = symbol_slots(episodic, tslot);
    for (double x : h_t) {
        if (x < 0.0 || !std::isfinite(x)) {
            throw NumericalError("exact scene decoding needs a nonnegative time representation");
        }
    }
    std::vector<SlotBinding> fixed(episodic.arity(), slot::Free{});
    fixed[tslot] = slot::Clamp{Vector(h_t.begin(), h_t.end())};
    ChainSampler chain(episodic, registry, std::move(fixed), order, beta);
    std::vector<std::array<EntityId, 3>> out;
    out.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const auto ids = chain.sample(rng);
        out.push_back({ids[0], ids[1], ids[2]});
    }
    return out;
}

EpisodicSemanticView::EpisodicSemanticView(const Memory& episodic, const Registry& registry,
                                           std::optional<std::vector<EntityId>> times)
    : episodic_(episodic), registry_(registry), time_slot_(time_slot(episodic)),
      times_(std::move(times)) {
    symbol_slots(episodic, time_slot_);
    if (times_) {
        for (auto t : *times_) registry.require_kind(t, EntityKind::Time);
    }
}

std::vector<SlotBinding> EpisodicSemanticView::lift(std::span<const SlotBinding> bindings) const {
    if (bindings.size() != 3) throw DimensionError("semantic view takes (s, p, o) bindings");
    std::vector<SlotBinding> full;
    std::size_t k = 0;
    for (std::size_t j = 0; j < episodic_.arity(); ++j) {
        if (j == time_slot_) {
            full.push_back(slot::Marginalize{times_});
        } else {
            full.push_back(bindings[k++]);
        }
    }
    return full;
}

Distribution EpisodicSemanticView::conditional(std::span<const SlotBinding> bindings,
                                               double beta) const {
    return conditional_distribution(episodic_, registry_, lift(bindings), beta);
}

Distribution EpisodicSemanticView::marginal(std::size_t slot, double beta) const {
    std::vector<SlotBinding> b(3, slot::Marginalize{});
    b.at(slot) = slot::Free{};
    return conditional(b, beta);
}

std::array<EntityId, 3> EpisodicSemanticView::sample(double beta, Rng& rng) const {
    std::vector<SlotBinding> fixed(episodic_.arity(), slot::Free{});
    fixed[time_slot_] = slot::Marginalize{times_};
    ChainSampler chain(episodic_, registry_, std::move(fixed), symbol_slots(episodic_, time_slot_),
                       beta);
    const auto ids = chain.sample(rng);
    return {ids[0], ids[1], ids[2]};
}

}  // namespace tensormem
