#pragma once
// From sensory buffers to latent time representations and back to symbols.
//
// A buffer u_{:,:,t} (Q channels x N+1 positions) is vectorized and encoded
// into h_t by a learned map. If h_t is novel with respect to a prediction it
// becomes the embedding of a fresh Time entity (an episode). Scenes are
// decoded by sampling (s, p, o) from the 4-way episodic model with the time
// slot clamped to h_t, and semantic memory is the same model with time
// summed out.

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tensormem/models.hpp"
#include "tensormem/query.hpp"
#include "tensormem/registry.hpp"
#include "tensormem/stores.hpp"

namespace tensormem {

class SensoryBuffer {
public:
    SensoryBuffer(std::size_t channels, std::size_t buffer_length);

    std::size_t channels() const noexcept { return channels_; }
    std::size_t positions() const noexcept { return positions_; }
    std::size_t size() const noexcept { return values_.size(); }

    double& at(std::size_t q, std::size_t gamma);
    double at(std::size_t q, std::size_t gamma) const;

    // Channel-major vectorization: element (q, gamma) sits at q * (N+1) + gamma.
    const Vector& vec() const noexcept { return values_; }

private:
    std::size_t channels_;
    std::size_t positions_;
    Vector values_;
};

// Gathers the entries of one time step; missing entries are zero. Channel q
// is the q-th registered channel.
SensoryBuffer buffer_at(const Registry& registry, const SensoryStore& store, EntityId time,
                        std::size_t channels);

// f^M: a stack of affine sub-maps from vec(u) whose outputs are concatenated
// into h. In nonnegative mode h = exp(concatenation).
class EncoderM {
public:
    EncoderM(std::size_t input_dim, std::vector<std::size_t> sub_dims, bool nonneg_mode);
    static EncoderM single(std::size_t input_dim, std::size_t dim, bool nonneg_mode) {
        return EncoderM(input_dim, {dim}, nonneg_mode);
    }

    std::size_t input_dim() const noexcept { return input_dim_; }
    std::size_t output_dim() const noexcept { return output_dim_; }
    bool nonneg_mode() const noexcept { return nonneg_; }
    const std::vector<std::size_t>& sub_dims() const noexcept { return sub_dims_; }

    // Parameters are, per sub-map, a row-major weight block then its bias.
    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }

    // Weight (row, col) of the full stacked map, across sub-map boundaries.
    double& weight(std::size_t row, std::size_t col);
    double& bias(std::size_t row);

    Vector encode(std::span<const double> input) const;
    Vector encode(const SensoryBuffer& buffer) const { return encode(buffer.vec()); }

    // d(cost)/d(h) into d(cost)/d(parameters).
    void backward(std::span<const double> input, std::span<const double> d_h,
                  std::span<double> d_params) const;

    void randomize(Rng& rng, double stddev);

    // Experimental: least-norm input reproducing h under the stacked affine
    // map (pseudo-inverse). Not an exact inverse when Q(N+1) > dim.
    Vector reconstruct(std::span<const double> h) const;

private:
    Vector pre_activation(std::span<const double> input) const;
    std::size_t row_offset(std::size_t row) const;
    std::size_t bias_offset(std::size_t row) const;

    std::size_t input_dim_;
    std::vector<std::size_t> sub_dims_;
    std::size_t output_dim_;
    bool nonneg_;
    Vector params_;
    std::vector<std::size_t> sub_offsets_;
};

// Mean squared deviation per latent dimension.
double novelty(std::span<const double> predicted, std::span<const double> encoded);

struct EpisodeOutcome {
    Vector encoded;
    double novelty;  // +inf when no prediction was available
    std::optional<EntityId> time;
};

// Encodes the buffer and, if novelty >= tau (or the buffer is flagged as
// significant), registers `time_label` as a new Time entity whose embedding
// is h_t.
EpisodeOutcome form_episode(const EncoderM& encoder, const SensoryBuffer& buffer,
                            const std::optional<Vector>& predicted, Registry& registry,
                            double tau, std::string_view time_label, bool significant = false);

// n ancestral draws s -> p -> o from the episodic model with the time slot
// clamped to h_t.
std::vector<std::array<EntityId, 3>> decode_scene(const Memory& episodic, const Registry& registry,
                                                  std::span<const double> h_t, double beta,
                                                  std::size_t n_samples, Rng& rng);

// The 4-way episodic model with its time slot summed out (optionally over a
// subset of time ids) behaves as a 3-way semantic memory.
class EpisodicSemanticView {
public:
    EpisodicSemanticView(const Memory& episodic, const Registry& registry,
                         std::optional<std::vector<EntityId>> times = std::nullopt);

    // bindings over (s, p, o).
    Distribution conditional(std::span<const SlotBinding> bindings, double beta) const;
    Distribution marginal(std::size_t slot, double beta) const;
    std::array<EntityId, 3> sample(double beta, Rng& rng) const;

private:
    std::vector<SlotBinding> lift(std::span<const SlotBinding> bindings) const;

    const Memory& episodic_;
    const Registry& registry_;
    std::size_t time_slot_;
    std::optional<std::vector<EntityId>> times_;
};

// Index of the Time slot of an episodic memory.
std::size_t time_slot(const Memory& memory);

}  // namespace tensormem
