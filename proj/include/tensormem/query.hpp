#pragma once
// Boltzmann query answering.
//
// For nonnegative multilinear models the unnormalized mass of a tuple is the
// model score itself, so conditionals and marginals are exact: marginalized
// slots receive the sum of their candidates' inputs (all index neurons
// active), the target slot is read off a single representation vector, and
// the inverse temperature is applied to the resulting mass afterwards,
//   P(target = e | ...) oc mass(e)^beta.
// General models are only queried with all non-target slots bound, through
// the energy form P oc exp(beta * score), or through learned sampler heads.

#include <array>
#include <map>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "tensormem/models.hpp"
#include "tensormem/registry.hpp"
#include "tensormem/stores.hpp"

namespace tensormem {

struct Distribution {
    std::vector<EntityId> support;
    std::vector<double> probabilities;
    // log of the sum of unnormalized weights (mass^beta, or exp(beta*score)).
    double log_partition = 0.0;

    std::size_t size() const noexcept { return support.size(); }
    double probability(EntityId id) const;
    // Highest probability; ties go to the lowest id.
    EntityId argmax() const;
    EntityId sample(Rng& rng) const;
};

// Normalizes log-weights with log-sum-exp.
Distribution normalize_log_weights(std::vector<EntityId> support, std::vector<double> log_weights);

namespace slot {
struct Free {};
struct Bound {
    EntityId id;
};
// Slot fed with an explicit latent vector (e.g. an encoded h_t).
struct Clamp {
    Vector input;
};
// Slot summed out; `subset` restricts the sum (default: every id of the kind).
struct Marginalize {
    std::optional<std::vector<EntityId>> subset;
};
}  // namespace slot

using SlotBinding = std::variant<slot::Free, slot::Bound, slot::Clamp, slot::Marginalize>;

// Exact conditional over the single Free slot of a nonnegative multilinear
// memory.
Distribution conditional_distribution(const Memory& memory, const Registry& registry,
                                      std::span<const SlotBinding> bindings, double beta);

// Exact marginal: every other slot summed out.
Distribution marginal_distribution(const Memory& memory, const Registry& registry,
                                   std::size_t slot, double beta);

// P(target = e) oc exp(beta * score) for any model family; every non-target
// slot must be Bound or Clamped.
Distribution energy_conditional(const Memory& memory, const Registry& registry,
                                std::span<const SlotBinding> bindings, double beta);

// Ancestral sampler over the slots listed in `order`: each slot is drawn from
// its conditional given the earlier draws with the later ones summed out.
// Slots outside `order` keep their binding from `fixed`.
class ChainSampler {
public:
    ChainSampler(const Memory& memory, const Registry& registry, std::vector<SlotBinding> fixed,
                 std::vector<std::size_t> order, double beta);

    // One draw; ids listed in the same order as `order`.
    std::vector<EntityId> sample(Rng& rng);

    // Probability of a full assignment under the chain (for oracle checks).
    double chain_probability(std::span<const EntityId> ids);

private:
    const Distribution& stage(std::span<const EntityId> prefix);

    const Memory& memory_;
    const Registry& registry_;
    std::vector<SlotBinding> fixed_;
    std::vector<std::size_t> order_;
    double beta_;
    std::map<std::vector<EntityId>, Distribution> cache_;
};

// s from P(s), p from P(p|s), o from P(o|s,p).
std::array<EntityId, 3> sample_triple(const Memory& memory, const Registry& registry, double beta,
                                      Rng& rng);

// P(s') oc exp(beta * <a_s, a_s'>) over all Entity ids.
Distribution association_distribution(const Registry& registry, EntityId entity, double beta,
                                      bool exclude_self = false);
EntityId sample_association(const Registry& registry, EntityId entity, double beta, Rng& rng,
                            bool exclude_self = false);

struct HeadTrainConfig {
    double learning_rate = 0.05;
    std::size_t epochs = 200;
    std::uint64_t seed = 0;
};

// Learned sampling heads for models without exact marginals:
//   P(s)     oc exp(beta * <a_s, h_subject>)
//   P(p|s)   oc exp(beta * <a_p, h_predicate(a_s)>)
//   P(o|s,p) oc exp(beta * <a_o, h_object(a_s, a_p)>)
class SamplerHeads {
public:
    SamplerHeads(std::size_t dim, std::size_t hidden);

    // Maximizes the log-softmax of the positive facts at every chain stage.
    // Embeddings stay fixed. Returns the final mean negative log-likelihood.
    double train(const Registry& registry, const TripleStore& store, const HeadTrainConfig& config);
    bool trained() const noexcept { return trained_; }

    Distribution subject_distribution(const Registry& registry, double beta) const;
    Distribution predicate_distribution(const Registry& registry, EntityId s, double beta) const;
    Distribution object_distribution(const Registry& registry, EntityId s, EntityId p,
                                     double beta) const;

    std::array<EntityId, 3> sample(const Registry& registry, double beta, Rng& rng) const;

private:
    void require_trained() const;

    MultiwayNet subject_;
    MultiwayNet predicate_;
    MultiwayNet object_;
    bool trained_ = false;
};

}  // namespace tensormem
