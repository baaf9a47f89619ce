#pragma once
// Small random worlds shared by the unit tests and the acceptance suite.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tensormem/models.hpp"
#include "tensormem/predict.hpp"
#include "tensormem/registry.hpp"
#include "tensormem/sensory.hpp"
#include "tensormem/stores.hpp"
#include "tensormem/training.hpp"

namespace fixture {

using namespace tensormem;

struct World {
    Registry registry;
    std::vector<EntityId> entities, predicates, times;
};

inline World make_world(std::size_t n_entities, std::size_t n_predicates, std::size_t n_times,
                        std::size_t dim, bool nonneg, std::uint64_t seed) {
    World w{Registry(dim, nonneg, seed), {}, {}, {}};
    for (std::size_t i = 0; i < n_entities; ++i)
        w.entities.push_back(w.registry.register_entity("e" + std::to_string(i), EntityKind::Entity));
    for (std::size_t i = 0; i < n_predicates; ++i)
        w.predicates.push_back(
            w.registry.register_entity("p" + std::to_string(i), EntityKind::Predicate));
    for (std::size_t i = 0; i < n_times; ++i)
        w.times.push_back(w.registry.register_entity("t" + std::to_string(i), EntityKind::Time));
    return w;
}

// Spreads the stored parameters so that distributions are far from uniform.
inline void scramble(std::span<double> params, Rng& rng, double sd) {
    for (auto& x : params) x = normal(rng, 0.0, sd);
}

inline Memory semantic_memory(ModelFamily family, const Registry& reg, bool nonneg,
                              std::size_t hidden = 6) {
    ModelSpec spec;
    spec.family = family;
    spec.arity = 3;
    spec.dim = reg.dim();
    spec.nonneg_mode = nonneg;
    spec.hidden = hidden;
    spec.predicates = reg.count(EntityKind::Predicate);
    return Memory({EntityKind::Entity, EntityKind::Predicate, EntityKind::Entity}, make_model(spec));
}

inline Memory episodic_memory(ModelFamily family, const Registry& reg, bool nonneg,
                              std::size_t hidden = 6) {
    ModelSpec spec;
    spec.family = family;
    spec.arity = 4;
    spec.dim = reg.dim();
    spec.nonneg_mode = nonneg;
    spec.hidden = hidden;
    return Memory({EntityKind::Entity, EntityKind::Predicate, EntityKind::Entity, EntityKind::Time},
                  make_model(spec));
}

// Every memory at once over one registry: semantic, episodic, sensory with an
// encoder, and a predictor (ARX or RNN). Random facts of both likelihoods.
struct CoupledWorld {
    World w;
    std::vector<EntityId> channels, positions;
    TripleStore triples;
    QuadStore quads;
    SensoryStore sensory_store{1};
    std::optional<Memory> semantic, episodic, sensory;
    std::optional<EncoderM> encoder;
    std::optional<ArxPredictor> arx;
    std::optional<RnnPredictor> rnn;
    std::size_t window = 2;

    CoupledModel model() {
        CoupledModel m;
        m.registry = &w.registry;
        m.semantic = &*semantic;
        m.triples = &triples;
        m.episodic = &*episodic;
        m.quads = &quads;
        m.sensory = &*sensory;
        m.sensory_store = &sensory_store;
        m.channels = channels.size();
        m.encoder = encoder ? &*encoder : nullptr;
        m.arx = arx ? &*arx : nullptr;
        m.rnn = rnn ? &*rnn : nullptr;
        m.window = window;
        m.individual = w.entities[0];
        return m;
    }
};

inline CoupledWorld make_coupled(bool nonneg, bool use_rnn, ModelFamily semantic_family,
                                 std::uint64_t seed, bool with_encoder = true) {
    const std::size_t dim = 2;
    CoupledWorld cw{make_world(3, 2, 4, dim, nonneg, seed)};
    Registry& reg = cw.w.registry;
    for (int q = 0; q < 2; ++q) cw.channels.push_back(reg.register_entity("q" + std::to_string(q), EntityKind::Channel));
    for (int g = 0; g < 2; ++g) cw.positions.push_back(reg.register_entity(std::to_string(g), EntityKind::BufferPos));
    Rng rng = make_rng(seed, "fixture");
    scramble(reg.stored(), rng, 0.5);

    // predicate 0 is Boolean, predicate 1 Gaussian
    cw.triples.likelihoods().declare(cw.w.predicates[1], Likelihood::Gaussian);
    cw.quads.likelihoods().declare(cw.w.predicates[1], Likelihood::Gaussian);
    for (auto s : cw.w.entities) {
        for (auto o : cw.w.entities) {
            cw.triples.insert(reg, {s, cw.w.predicates[0], o, static_cast<double>(uniform_index(rng, 2))});
            if (uniform_index(rng, 2)) cw.triples.insert(reg, {s, cw.w.predicates[1], o, normal(rng, 0, 1)});
            const EntityId t = cw.w.times[uniform_index(rng, cw.w.times.size())];
            cw.quads.insert(reg, {s, cw.w.predicates[0], o, t, static_cast<double>(uniform_index(rng, 2))});
            if (uniform_index(rng, 2)) cw.quads.insert(reg, {s, cw.w.predicates[1], o, t, normal(rng, 0, 1)});
        }
    }
    for (auto t : cw.w.times)
        for (auto q : cw.channels)
            for (auto g : cw.positions) cw.sensory_store.insert(reg, {q, g, t, normal(rng, 0, 1)});

    cw.semantic = semantic_memory(semantic_family, reg, nonneg, 3);
    cw.episodic = episodic_memory(ModelFamily::Tucker, reg, nonneg);
    ModelSpec spec{ModelFamily::Tucker, 3, dim, nonneg, 3, 0};
    cw.sensory = Memory({EntityKind::Channel, EntityKind::BufferPos, EntityKind::Time}, make_model(spec));
    for (Memory* m : {&*cw.semantic, &*cw.episodic, &*cw.sensory}) {
        m->model().randomize(rng);
        scramble(m->model().parameters(), rng, 0.5);
    }
    const std::size_t buffer = cw.channels.size() * cw.positions.size();
    if (with_encoder) {
        cw.encoder = EncoderM::single(buffer, dim, nonneg);
        cw.encoder->randomize(rng, 0.3);
    }
    if (use_rnn) {
        cw.rnn.emplace(dim, buffer);
        cw.rnn->randomize(rng, 0.3);
    } else {
        cw.arx.emplace(dim, cw.window, true);
        cw.arx->randomize(rng, 0.3);
    }
    return cw;
}

}  // namespace fixture
