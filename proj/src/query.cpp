#include "tensormem/query.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tensormem/errors.hpp"

namespace tensormem {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_beta(double beta) {
    if (!(beta >= 0.0) || !std::isfinite(beta)) {
        throw UsageError("inverse temperature must be a finite non-negative number");
    }
}

std::size_t free_slot(std::span<const SlotBinding> bindings) {
    std::optional<std::size_t> target;
    for (std::size_t j = 0; j < bindings.size(); ++j) {
        if (std::holds_alternative<slot::Free>(bindings[j])) {
            if (target) throw UsageError("query must have exactly one free slot");
            target = j;
        }
    }
    if (!target) throw UsageError("query must have exactly one free slot");
    return *target;
}

// Latent inputs for every non-target slot.
std::vector<Vector> bound_inputs(const Memory& memory, const Registry& registry,
                                 std::span<const SlotBinding> bindings, bool allow_marginal) {
    std::vector<Vector> in(memory.arity());
    for (std::size_t j = 0; j < bindings.size(); ++j) {
        std::visit(
            [&](const auto& b) {
                using T = std::decay_t<decltype(b)>;
                if constexpr (std::is_same_v<T, slot::Bound>) {
                    in[j] = memory.input(registry, j, b.id);
                } else if constexpr (std::is_same_v<T, slot::Clamp>) {
                    if (b.input.size() != registry.dim() || memory.model().indicator_slot(j)) {
                        throw DimensionError("clamped input for slot " + std::to_string(j) +
                                             " must be a latent vector of length " +
                                             std::to_string(registry.dim()));
                    }
                    in[j] = b.input;
                } else if constexpr (std::is_same_v<T, slot::Marginalize>) {
                    if (!allow_marginal) {
                        throw UnsupportedError(
                            "marginalization needs a nonnegative multilinear model");
                    }
                    if (b.subset) {
                        for (auto id : *b.subset) registry.require_kind(id, memory.slot_kind(j));
                        in[j] = memory.summed_input(registry, j, *b.subset);
                    } else {
                        in[j] = memory.summed_input(registry, j, memory.support(registry, j));
                    }
                }
            },
            bindings[j]);
    }
    return in;
}

}  // namespace

double Distribution::probability(EntityId id) const {
    for (std::size_t i = 0; i < support.size(); ++i) {
        if (support[i] == id) return probabilities[i];
    }
    return 0.0;
}

EntityId Distribution::argmax() const {
    if (support.empty()) throw DataError("argmax of an empty distribution");
    std::size_t best = 0;
    for (std::size_t i = 1; i < support.size(); ++i) {
        if (probabilities[i] > probabilities[best] ||
            (probabilities[i] == probabilities[best] && support[i] < support[best])) {
            best = i;
        }
    }
    return support[best];
}

EntityId Distribution::sample(Rng& rng) const {
    if (support.empty()) throw DataError("cannot sample from an empty distribution");
    const double u = uniform01(rng);
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < support.size(); ++i) {
        if (probabilities[i] > 0.0) last_positive = i;
        acc += probabilities[i];
        if (u < acc) return support[i];
    }
    return support[last_positive];
}

Distribution normalize_log_weights(std::vector<EntityId> support, std::vector<double> log_weights) {
    if (support.empty()) throw DataError("distribution over an empty support");
    const double lse = log_sum_exp(log_weights);
    if (!std::isfinite(lse)) {
        throw NumericalError("all candidates carry zero (or non-finite) mass");
    }
    Distribution d;
    d.support = std::move(support);
    d.probabilities.resize(log_weights.size());
    for (std::size_t i = 0; i < log_weights.size(); ++i) {
        d.probabilities[i] = std::exp(log_weights[i] - lse);
    }
    d.log_partition = lse;
    return d;
}

Distribution conditional_distribution(const Memory& memory, const Registry& registry,
                                      std::span<const SlotBinding> bindings, double beta) {
    check_beta(beta);
    if (bindings.size() != memory.arity()) {
        throw DimensionError("expected " + std::to_string(memory.arity()) + " slot bindings");
    }
    const std::size_t target = free_slot(bindings);
    const auto& model = memory.model();
    if (!model.multilinear()) {
        throw UnsupportedError("exact conditionals need a multilinear model; use the energy form "
                               "or trained sampler heads");
    }
    const auto in = bound_inputs(memory, registry, bindings, true);
    const Vector h = model.slot_representation(target, in);
    const auto& support = memory.support(registry, target);
    std::vector<double> logw(support.size());
    for (std::size_t i = 0; i < support.size(); ++i) {
        const double mass = model.indicator_slot(target)
                                ? h[registry.ordinal(support[i])]
                                : dot(registry.embedding(support[i]), h);
        if (mass < 0.0 || !std::isfinite(mass)) {
            throw NumericalError("negative or non-finite mass " + format_double(mass) +
                                 " on the exact query path; the model is not nonnegative");
        }
        if (beta == 0.0) {
            logw[i] = 0.0;
        } else {
            logw[i] = mass > 0.0 ? beta * std::log(mass) : kNegInf;
        }
    }
    return normalize_log_weights(support, std::move(logw));
}

Distribution marginal_distribution(const Memory& memory, const Registry& registry,
                                   std::size_t slot, double beta) {
    if (slot >= memory.arity()) throw DimensionError("slot out of range");
    std::vector<SlotBinding> b(memory.arity(), slot::Marginalize{});
    b[slot] = slot::Free{};
    return conditional_distribution(memory, registry, b, beta);
}

Distribution energy_conditional(const Memory& memory, const Registry& registry,
                                std::span<const SlotBinding> bindings, double beta) {
    check_beta(beta);
    if (bindings.size() != memory.arity()) {
        throw DimensionError("expected " + std::to_string(memory.arity()) + " slot bindings");
    }
    const std::size_t target = free_slot(bindings);
    auto in = bound_inputs(memory, registry, bindings, false);
    const auto& support = memory.support(registry, target);
    std::vector<double> logw(support.size());
    for (std::size_t i = 0; i < support.size(); ++i) {
        in[target] = memory.input(registry, target, support[i]);
        const double s = memory.model().score(in);
        if (!std::isfinite(s)) throw NumericalError("non-finite score in energy query");
        logw[i] = beta * s;
    }
    return normalize_log_weights(support, std::move(logw));
}

// ---------------------------------------------------------------------------

ChainSampler::ChainSampler(const Memory& memory, const Registry& registry,
                           std::vector<SlotBinding> fixed, std::vector<std::size_t> order,
                           double beta)
    : memory_(memory), registry_(registry), fixed_(std::move(fixed)), order_(std::move(order)),
      beta_(beta) {
    check_beta(beta);
    if (fixed_.size() != memory.arity()) {
        throw DimensionError("expected " + std::to_string(memory.arity()) + " slot bindings");
    }
    if (order_.empty()) throw UsageError("chain sampler needs at least one slot to sample");
    for (auto s : order_) {
        if (s >= memory.arity()) throw DimensionError("chain slot out of range");
    }
}

const Distribution& ChainSampler::stage(std::span<const EntityId> prefix) {
    std::vector<EntityId> key(prefix.begin(), prefix.end());
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    std::vector<SlotBinding> b = fixed_;
    const std::size_t i = prefix.size();
    for (std::size_t k = 0; k < order_.size(); ++k) {
        if (k < i) {
            b[order_[k]] = slot::Bound{prefix[k]};
        } else if (k == i) {
            b[order_[k]] = slot::Free{};
        } else {
            b[order_[k]] = slot::Marginalize{};
        }
    }
    auto d = conditional_distribution(memory_, registry_, b, beta_);
    return cache_.emplace(std::move(key), std::move(d)).first->second;
}

std::vector<EntityId> ChainSampler::sample(Rng& rng) {
    std::vector<EntityId> ids;
    ids.reserve(order_.size());
    for (std::size_t k = 0; k < order_.size(); ++k) ids.push_back(stage(ids).sample(rng));
    return ids;
}

double ChainSampler::chain_probability(std::span<const EntityId> ids) {
    if (ids.size() != order_.size()) throw DimensionError("assignment length mismatch");
    double p = 1.0;
    for (std::size_t k = 0; k < ids.size(); ++k) p *= stage(ids.first(k)).probability(ids[k]);
    return p;
}

std::array<EntityId, 3> sample_triple(const Memory& memory, const Registry& registry, double beta,
                                      Rng& rng) {
    if (memory.arity() != 3) throw UnsupportedError("sample_triple needs a 3-way memory");
    ChainSampler chain(memory, registry, std::vector<SlotBinding>(3, slot::Free{}), {0, 1, 2}, beta);
    const auto ids = chain.sample(rng);
    return {ids[0], ids[1], ids[2]};
}

// ---------------------------------------------------------------------------

Distribution association_distribution(const Registry& registry, EntityId entity, double beta,
                                      bool exclude_self) {
    check_beta(beta);
    registry.require_kind(entity, EntityKind::Entity);
    const Vector a = registry.embedding(entity);
    std::vector<EntityId> support;
    std::vector<double> logw;
    for (auto id : registry.ids(EntityKind::Entity)) {
        if (exclude_self && id == entity) continue;
        support.push_back(id);
        logw.push_back(beta * dot(a, registry.embedding(id)));
    }
    return normalize_log_weights(std::move(support), std::move(logw));
}

EntityId sample_association(const Registry& registry, EntityId entity, double beta, Rng& rng,
                            bool exclude_self) {
    return association_distribution(registry, entity, beta, exclude_self).sample(rng);
}

// ---------------------------------------------------------------------------

namespace {

Distribution head_distribution(const Registry& registry, EntityKind kind, const Vector& h,
                               double beta) {
    const auto& support = registry.ids(kind);
    std::vector<double> logw(support.size());
    for (std::size_t i = 0; i < support.size(); ++i) {
        logw[i] = beta * dot(registry.embedding(support[i]), h);
    }
    return normalize_log_weights(support, std::move(logw));
}

// One softmax stage: returns -log p(target) and accumulates the head's
// parameter gradient.
double head_step(const MultiwayNet& net, const Registry& registry, EntityKind kind,
                 std::span<const Vector> inputs, EntityId target, std::span<double> grad) {
    const Vector h = net.forward(inputs);
    const auto d = head_distribution(registry, kind, h, 1.0);
    Vector d_h(h.size(), 0.0);
    const Vector a_target = registry.embedding(target);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const Vector a = registry.embedding(d.support[i]);
        for (std::size_t r = 0; r < h.size(); ++r) d_h[r] += d.probabilities[i] * a[r];
    }
    for (std::size_t r = 0; r < h.size(); ++r) d_h[r] -= a_target[r];
    net.backward(inputs, d_h, {}, grad);
    return -std::log(std::max(d.probability(target), std::numeric_limits<double>::min()));
}

}  // namespace

SamplerHeads::SamplerHeads(std::size_t dim, std::size_t hidden)
    : subject_(0, dim, hidden, dim), predicate_(1, dim, hidden, dim), object_(2, dim, hidden, dim) {}

double SamplerHeads::train(const Registry& registry, const TripleStore& store,
                           const HeadTrainConfig& config) {
    std::vector<TripleFact> positives;
    for (const auto& f : store.facts()) {
        if (f.value == 1.0) positives.push_back(f);
    }
    if (positives.empty()) throw DataError("sampler heads need at least one positive fact");
    Rng rng = make_rng(config.seed, "heads");
    subject_.randomize(rng);
    predicate_.randomize(rng);
    object_.randomize(rng);

    Vector gs(subject_.parameters().size()), gp(predicate_.parameters().size()),
        go(object_.parameters().size());
    double mean_nll = 0.0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        // Fisher-Yates with our own index draws keeps the order reproducible.
        for (std::size_t i = positives.size(); i > 1; --i) {
            std::swap(positives[i - 1], positives[uniform_index(rng, i)]);
        }
        double total = 0.0;
        for (const auto& f : positives) {
            std::fill(gs.begin(), gs.end(), 0.0);
            std::fill(gp.begin(), gp.end(), 0.0);
            std::fill(go.begin(), go.end(), 0.0);
            const Vector a_s = registry.embedding(f.s);
            const Vector a_p = registry.embedding(f.p);
            total += head_step(subject_, registry, EntityKind::Entity, {}, f.s, gs);
            const std::vector<Vector> in_p{a_s};
            total += head_step(predicate_, registry, EntityKind::Predicate, in_p, f.p, gp);
            const std::vector<Vector> in_o{a_s, a_p};
            total += head_step(object_, registry, EntityKind::Entity, in_o, f.o, go);
            auto apply = [&](MultiwayNet& net, const Vector& g) {
                auto w = net.parameters();
                for (std::size_t i = 0; i < w.size(); ++i) w[i] -= config.learning_rate * g[i];
            };
            apply(subject_, gs);
            apply(predicate_, gp);
            apply(object_, go);
        }
        mean_nll = total / static_cast<double>(positives.size());
        if (!std::isfinite(mean_nll)) throw DivergenceError("sampler head training diverged");
    }
    trained_ = true;
    return mean_nll;
}

void SamplerHeads::require_trained() const {
    if (!trained_) throw UnsupportedError("sampler heads have not been trained");
}

Distribution SamplerHeads::subject_distribution(const Registry& registry, double beta) const {
    require_trained();
    check_beta(beta);
    return head_distribution(registry, EntityKind::Entity, subject_.forward({}), beta);
}

Distribution SamplerHeads::predicate_distribution(const Registry& registry, EntityId s,
                                                  double beta) const {
    require_trained();
    check_beta(beta);
    registry.require_kind(s, EntityKind::Entity);
    const std::vector<Vector> in{registry.embedding(s)};
    return head_distribution(registry, EntityKind::Predicate, predicate_.forward(in), beta);
}

Distribution SamplerHeads::object_distribution(const Registry& registry, EntityId s, EntityId p,
                                               double beta) const {
    require_trained();
    check_beta(beta);
    registry.require_kind(s, EntityKind::Entity);
    registry.require_kind(p, EntityKind::Predicate);
    const std::vector<Vector> in{registry.embedding(s), registry.embedding(p)};
    return head_distribution(registry, EntityKind::Entity, object_.forward(in), beta);
}

std::array<EntityId, 3> SamplerHeads::sample(const Registry& registry, double beta,
                                             Rng& rng) const {
    const EntityId s = subject_distribution(registry, beta).sample(rng);
    const EntityId p = predicate_distribution(registry, s, beta).sample(rng);
    const EntityId o = object_distribution(registry, s, p, beta).sample(rng);
    return {s, p, o};
}

}  // namespace tensormem
