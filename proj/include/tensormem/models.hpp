#pragma once
// Indicator mapping functions: the maps from the latent vectors of a tuple's
// slots to the natural parameter theta of the observation likelihood.
//
// Families: PARAFAC, Tucker (3- or 4-way dense core), RESCAL (per-predicate
// r x r slices) and a one-hidden-layer multiway network. A `Memory` binds a
// family to slot kinds so that tuples of registry ids can be scored.

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tensormem/common.hpp"
#include "tensormem/registry.hpp"

namespace tensormem {

enum class ModelFamily { Parafac, Tucker, Rescal, Multiway };

std::string_view to_string(ModelFamily family);
ModelFamily parse_family(std::string_view text);

// One latent vector per slot. A slot that is being predicted may hold an
// empty vector.
using Inputs = std::span<const Vector>;

// Dense Tucker core with r^arity entries, row-major over (r1, ..., rk).
class CoreTensor {
public:
    CoreTensor(std::size_t arity, std::size_t dim, bool nonneg_mode);

    std::size_t arity() const noexcept { return arity_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return stored_.size(); }
    bool nonneg_mode() const noexcept { return nonneg_; }

    double effective(std::size_t flat) const;
    std::span<double> stored() noexcept { return stored_; }
    std::span<const double> stored() const noexcept { return stored_; }

    // Sets the effective value (inverting exp in nonnegative mode).
    void set_effective(std::size_t flat, double value);

private:
    std::size_t arity_;
    std::size_t dim_;
    bool nonneg_;
    Vector stored_;
};

// RESCAL core: one r x r slice per predicate, laid out [p][r1][r2].
class RescalCore {
public:
    RescalCore(std::size_t dim, std::size_t predicates, bool nonneg_mode);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t predicates() const noexcept { return predicates_; }
    bool nonneg_mode() const noexcept { return nonneg_; }

    double effective(std::size_t r1, std::size_t r2, std::size_t p) const;
    void set_effective(std::size_t r1, std::size_t r2, std::size_t p, double value);
    std::span<double> stored() noexcept { return stored_; }
    std::span<const double> stored() const noexcept { return stored_; }

    // Grows to `predicates` slices; new slices start at zero stored value.
    void resize_predicates(std::size_t predicates);

private:
    std::size_t flat(std::size_t r1, std::size_t r2, std::size_t p) const {
        return (p * dim_ + r1) * dim_ + r2;
    }

    std::size_t dim_;
    std::size_t predicates_;
    bool nonneg_;
    Vector stored_;
};

// Feedforward net: tanh(sum_k W_k x_k + b1) -> U z + b2.
// With zero inputs the hidden layer is tanh(b1), which makes a learned
// constant vector.
class MultiwayNet {
public:
    MultiwayNet(std::size_t inputs, std::size_t in_dim, std::size_t hidden, std::size_t out_dim);

    std::size_t inputs() const noexcept { return inputs_; }
    std::size_t in_dim() const noexcept { return in_dim_; }
    std::size_t hidden() const noexcept { return hidden_; }
    std::size_t out_dim() const noexcept { return out_dim_; }

    Vector forward(Inputs x) const;
    // Accumulates into d_inputs (may be empty) and d_params.
    void backward(Inputs x, std::span<const double> d_out, std::span<Vector> d_inputs,
                  std::span<double> d_params) const;

    void randomize(Rng& rng);

    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }

    // Parameter block offsets, exposed for tests.
    std::size_t weight_offset(std::size_t input) const { return input * hidden_ * in_dim_; }
    std::size_t hidden_bias_offset() const { return inputs_ * hidden_ * in_dim_; }
    std::size_t output_weight_offset() const { return hidden_bias_offset() + hidden_; }
    std::size_t output_bias_offset() const { return output_weight_offset() + out_dim_ * hidden_; }

private:
    Vector hidden_activations(Inputs x) const;

    std::size_t inputs_;
    std::size_t in_dim_;
    std::size_t hidden_;
    std::size_t out_dim_;
    Vector params_;
};

double score_parafac(std::span<const double> a_s, std::span<const double> a_p,
                     std::span<const double> a_o);
double score_tucker(const CoreTensor& core, Inputs factors);
double score_rescal(const RescalCore& core, std::span<const double> a_s, std::size_t p,
                    std::span<const double> a_o);
double score_multiway(const MultiwayNet& net, Inputs inputs);

// Polymorphic indicator mapping function over `arity()` slots.
class ScoringModel {
public:
    virtual ~ScoringModel() = default;

    virtual ModelFamily family() const = 0;
    virtual std::size_t arity() const = 0;
    virtual std::unique_ptr<ScoringModel> clone() const = 0;

    // Multilinear in the slot inputs (PARAFAC, Tucker, RESCAL).
    virtual bool multilinear() const = 0;
    // Every effective parameter is strictly positive (or there are none).
    virtual bool nonnegative() const = 0;

    // RESCAL's predicate slot takes an indicator vector over predicate
    // ordinals instead of a latent vector.
    virtual bool indicator_slot(std::size_t /*slot*/) const { return false; }

    virtual double score(Inputs inputs) const = 0;

    // h such that score(inputs) == dot(inputs[slot], h) for every value of
    // inputs[slot]. inputs[slot] itself is ignored.
    virtual Vector slot_representation(std::size_t slot, Inputs inputs) const = 0;

    // Accumulates upstream * d(score) into input_grads (one vector per slot,
    // pre-sized) and param_grads (size of parameters()); returns the score.
    virtual double backward(Inputs inputs, double upstream, std::span<Vector> input_grads,
                            std::span<double> param_grads) const = 0;

    virtual std::span<double> parameters() = 0;
    virtual std::span<const double> parameters() const = 0;

    virtual void randomize(Rng& rng) = 0;

    virtual void save(std::ostream& os) const = 0;
    virtual void load(std::istream& is) = 0;
};

class ParafacModel final : public ScoringModel {
public:
    ParafacModel(std::size_t arity, std::size_t dim) : arity_(arity), dim_(dim) {}

    ModelFamily family() const override { return ModelFamily::Parafac; }
    std::size_t arity() const override { return arity_; }
    std::unique_ptr<ScoringModel> clone() const override;
    bool multilinear() const override { return true; }
    bool nonnegative() const override { return true; }
    double score(Inputs inputs) const override;
    Vector slot_representation(std::size_t slot, Inputs inputs) const override;
    double backward(Inputs inputs, double upstream, std::span<Vector> input_grads,
                    std::span<double> param_grads) const override;
    std::span<double> parameters() override { return {}; }
    std::span<const double> parameters() const override { return {}; }
    void randomize(Rng&) override {}
    void save(std::ostream& os) const override;
    void load(std::istream& is) override;

private:
    std::size_t arity_;
    std::size_t dim_;
};

class TuckerModel final : public ScoringModel {
public:
    explicit TuckerModel(CoreTensor core) : core_(std::move(core)) {}

    const CoreTensor& core() const noexcept { return core_; }
    CoreTensor& core() noexcept { return core_; }

    ModelFamily family() const override { return ModelFamily::Tucker; }
    std::size_t arity() const override { return core_.arity(); }
    std::unique_ptr<ScoringModel> clone() const override;
    bool multilinear() const override { return true; }
    bool nonnegative() const override { return core_.nonneg_mode(); }
    double score(Inputs inputs) const override;
    Vector slot_representation(std::size_t slot, Inputs inputs) const override;
    double backward(Inputs inputs, double upstream, std::span<Vector> input_grads,
                    std::span<double> param_grads) const override;
    std::span<double> parameters() override { return core_.stored(); }
    std::span<const double> parameters() const override { return core_.stored(); }
    void randomize(Rng& rng) override;
    void save(std::ostream& os) const override;
    void load(std::istream& is) override;

private:
    CoreTensor core_;
};

class RescalModel final : public ScoringModel {
public:
    explicit RescalModel(RescalCore core) : core_(std::move(core)) {}

    const RescalCore& core() const noexcept { return core_; }
    RescalCore& core() noexcept { return core_; }

    ModelFamily family() const override { return ModelFamily::Rescal; }
    std::size_t arity() const override { return 3; }
    std::unique_ptr<ScoringModel> clone() const override;
    bool multilinear() const override { return true; }
    bool nonnegative() const override { return core_.nonneg_mode(); }
    bool indicator_slot(std::size_t slot) const override { return slot == 1; }
    double score(Inputs inputs) const override;
    Vector slot_representation(std::size_t slot, Inputs inputs) const override;
    double backward(Inputs inputs, double upstream, std::span<Vector> input_grads,
                    std::span<double> param_grads) const override;
    std::span<double> parameters() override { return core_.stored(); }
    std::span<const double> parameters() const override { return core_.stored(); }
    void randomize(Rng& rng) override;
    void save(std::ostream& os) const override;
    void load(std::istream& is) override;

private:
    RescalCore core_;
};

// A multiway network used either as a direct scorer (no target slot) or as
// a representation predictor for one target slot, in which case
// score = dot(inputs[target], net(other inputs)).
class MultiwayModel final : public ScoringModel {
public:
    MultiwayModel(MultiwayNet net, std::optional<std::size_t> target_slot);

    const MultiwayNet& net() const noexcept { return net_; }
    MultiwayNet& net() noexcept { return net_; }
    std::optional<std::size_t> target_slot() const noexcept { return target_; }

    ModelFamily family() const override { return ModelFamily::Multiway; }
    std::size_t arity() const override { return target_ ? net_.inputs() + 1 : net_.inputs(); }
    std::unique_ptr<ScoringModel> clone() const override;
    bool multilinear() const override { return false; }
    bool nonnegative() const override { return false; }
    double score(Inputs inputs) const override;
    Vector slot_representation(std::size_t slot, Inputs inputs) const override;
    double backward(Inputs inputs, double upstream, std::span<Vector> input_grads,
                    std::span<double> param_grads) const override;
    std::span<double> parameters() override { return net_.parameters(); }
    std::span<const double> parameters() const override { return net_.parameters(); }
    void randomize(Rng& rng) override { net_.randomize(rng); }
    void save(std::ostream& os) const override;
    void load(std::istream& is) override;

private:
    std::vector<Vector> net_inputs(Inputs inputs) const;

    MultiwayNet net_;
    std::optional<std::size_t> target_;
};

// Representation-prediction forms for 3-way models.
Vector subject_representation(const ScoringModel& model, std::span<const double> a_p,
                              std::span<const double> a_o);
Vector predicate_representation(const ScoringModel& model, std::span<const double> a_s,
                                std::span<const double> a_o);
Vector object_representation(const ScoringModel& model, std::span<const double> a_s,
                             std::span<const double> a_p);

struct ModelSpec {
    ModelFamily family = ModelFamily::Tucker;
    std::size_t arity = 3;
    std::size_t dim = 8;
    bool nonneg_mode = false;
    std::size_t hidden = 64;
    std::size_t predicates = 0;  // RESCAL only
};

inline constexpr std::size_t kMaxTucker4Dim = 16;

std::unique_ptr<ScoringModel> make_model(const ModelSpec& spec);

// A scoring model bound to the entity kinds of its slots.
class Memory {
public:
    Memory(std::vector<EntityKind> slots, std::unique_ptr<ScoringModel> model);
    Memory(const Memory& other);
    Memory& operator=(const Memory& other);
    Memory(Memory&&) noexcept = default;
    Memory& operator=(Memory&&) noexcept = default;

    std::size_t arity() const noexcept { return slots_.size(); }
    EntityKind slot_kind(std::size_t slot) const { return slots_.at(slot); }
    const std::vector<EntityKind>& slots() const noexcept { return slots_; }

    const ScoringModel& model() const noexcept { return *model_; }
    ScoringModel& model() noexcept { return *model_; }

    // Keeps a RESCAL core in step with the number of registered predicates.
    void sync(const Registry& registry);

    const std::vector<EntityId>& support(const Registry& registry, std::size_t slot) const {
        return registry.ids(slots_.at(slot));
    }

    // Latent input for one id: its effective embedding, or a one-hot
    // predicate indicator for indicator slots.
    Vector input(const Registry& registry, std::size_t slot, EntityId id) const;
    // Sum of input() over `ids`: marginalizing a slot over a set of ids.
    Vector summed_input(const Registry& registry, std::size_t slot,
                        std::span<const EntityId> ids) const;
    std::vector<Vector> inputs(const Registry& registry, std::span<const EntityId> ids) const;

    double score(const Registry& registry, std::span<const EntityId> ids) const;

    // Pushes d(cost)/d(input) for slot/id into the embedding gradient.
    void scatter_input_gradient(const Registry& registry, std::size_t slot, EntityId id,
                                std::span<const double> d_input,
                                std::span<double> embedding_grad) const;

    // upstream * d(score) into both gradients; returns the score.
    double backward(const Registry& registry, std::span<const EntityId> ids, double upstream,
                    std::span<double> embedding_grad, std::span<double> param_grad) const;

private:
    void check_ids(const Registry& registry, std::span<const EntityId> ids) const;

    std::vector<EntityKind> slots_;
    std::unique_ptr<ScoringModel> model_;
};

}  // namespace tensormem
