#include "tensormem/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <thread>

#include "tensormem/errors.hpp"

namespace tensormem {

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw UsageError("learning_rate must be a finite non-negative number");
    }
    if (batch_size == 0) throw UsageError("batch_size must be positive");
    if (!(lambda_a >= 0.0) || !(lambda_w >= 0.0)) throw UsageError("regularization weights must be >= 0");
    if (!(sigma2 > 0.0)) throw UsageError("sigma2 must be positive");
    if (workers == 0) throw UsageError("workers must be positive");
    for (double w : {weights.semantic, weights.episodic, weights.sensory, weights.predict}) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw UsageError("cost weights must be >= 0");
    }
    if (weights.semantic + weights.episodic + weights.sensory + weights.predict <= 0.0) {
        throw UsageError("at least one cost weight must be positive");
    }
}

// ---------------------------------------------------------------------------
// Gradient bookkeeping

namespace {

std::size_t param_count(const Memory* m) { return m ? m->model().parameters().size() : 0; }

std::span<double> predictor_params(const CoupledModel& model) {
    if (model.arx) return model.arx->parameters();
    if (model.rnn) return model.rnn->parameters();
    return {};
}

const Registry& reg_of(const CoupledModel& model) {
    if (!model.registry) throw DataError("coupled model has no registry");
    return *model.registry;
}

}  // namespace

Gradients Gradients::zeros_like(const CoupledModel& model) {
    Gradients g;
    g.embeddings.assign(reg_of(model).stored().size(), 0.0);
    g.semantic.assign(param_count(model.semantic), 0.0);
    g.episodic.assign(param_count(model.episodic), 0.0);
    g.sensory.assign(param_count(model.sensory), 0.0);
    g.encoder.assign(model.encoder ? model.encoder->parameters().size() : 0, 0.0);
    g.predictor.assign(predictor_params(model).size(), 0.0);
    return g;
}

void Gradients::clear() {
    for (auto b : blocks()) std::fill(b.begin(), b.end(), 0.0);
}

void Gradients::add(const Gradients& other) {
    auto mine = blocks();
    auto theirs = other.blocks();
    for (std::size_t k = 0; k < mine.size(); ++k) {
        if (mine[k].size() != theirs[k].size()) throw DimensionError("gradient shape mismatch");
        for (std::size_t i = 0; i < mine[k].size(); ++i) mine[k][i] += theirs[k][i];
    }
}

std::vector<std::span<double>> Gradients::blocks() {
    return {embeddings, semantic, episodic, sensory, encoder, predictor};
}

std::vector<std::span<const double>> Gradients::blocks() const {
    return {embeddings, semantic, episodic, sensory, encoder, predictor};
}

std::vector<std::span<double>> parameter_blocks(const CoupledModel& model) {
    auto params = [](Memory* m) { return m ? m->model().parameters() : std::span<double>{}; };
    return {model.registry->stored(),
            params(model.semantic),
            params(model.episodic),
            params(model.sensory),
            model.encoder ? model.encoder->parameters() : std::span<double>{},
            predictor_params(model)};
}

// ---------------------------------------------------------------------------
// Likelihood helpers

Likelihood fact_likelihood(const PredicateLikelihoods& l, EntityId p) { return l.get(p); }

double fact_nll(Likelihood l, double value, double theta, double sigma2) {
    return l == Likelihood::Bernoulli ? bernoulli_nll(value, theta)
                                      : gaussian_nll(value, theta, sigma2);
}

double fact_nll_grad(Likelihood l, double value, double theta, double sigma2) {
    return l == Likelihood::Bernoulli ? bernoulli_nll_grad(value, theta)
                                      : gaussian_nll_grad(value, theta, sigma2);
}

// ---------------------------------------------------------------------------
// Cost terms

namespace {

template <typename Fact, std::size_t N>
double fact_cost(const Registry& registry, const Memory& memory, const PredicateLikelihoods& lik,
                 std::span<const Fact> facts, double sigma2, Vector* emb_grad, Vector* par_grad,
                 double weight, std::array<EntityId, N> (*key)(const Fact&)) {
    double total = 0.0;
    for (const auto& f : facts) {
        const auto ids = key(f);
        const Likelihood l = fact_likelihood(lik, f.p);
        if (emb_grad) {
            // Score first, then backprop the NLL slope through the model.
            const double theta = memory.score(registry, ids);
            total += fact_nll(l, f.value, theta, sigma2);
            const double d = weight * fact_nll_grad(l, f.value, theta, sigma2);
            memory.backward(registry, ids, d, *emb_grad, *par_grad);
        } else {
            total += fact_nll(l, f.value, memory.score(registry, ids), sigma2);
        }
    }
    return total;
}

std::array<EntityId, 3> triple_key(const TripleFact& f) { return {f.s, f.p, f.o}; }
std::array<EntityId, 4> quad_key(const QuadFact& f) { return {f.s, f.p, f.o, f.t}; }

// Buffers for a set of time ids in one pass over the store.
std::map<EntityId, Vector> gather_buffers(const CoupledModel& model,
                                          const std::set<EntityId>& times) {
    const auto& registry = reg_of(model);
    if (!model.sensory_store) throw DataError("sensory buffers need a sensory store");
    const std::size_t positions = model.sensory_store->buffer_length() + 1;
    std::map<EntityId, Vector> out;
    for (auto t : times) out.emplace(t, Vector(model.channels * positions, 0.0));
    for (const auto& e : model.sensory_store->entries()) {
        auto it = out.find(e.t);
        if (it == out.end()) continue;
        const auto q = registry.ordinal(e.q);
        if (q >= model.channels) throw DimensionError("channel index exceeds configured channels");
        it->second[q * positions + gamma_index(registry, e.gamma)] = e.value;
    }
    return out;
}

}  // namespace

double cost_semantic(const CoupledModel& model, std::span<const TripleFact> facts, double sigma2,
                     Gradients* grad, double weight) {
    if (!model.semantic || !model.triples) throw DataError("no semantic memory configured");
    if (facts.empty()) throw DataError("semantic cost over an empty training set");
    return fact_cost<TripleFact, 3>(reg_of(model), *model.semantic, model.triples->likelihoods(),
                                    facts, sigma2, grad ? &grad->embeddings : nullptr,
                                    grad ? &grad->semantic : nullptr, weight, &triple_key);
}

double cost_episodic(const CoupledModel& model, std::span<const QuadFact> facts, double sigma2,
                     Gradients* grad, double weight) {
    if (!model.episodic || !model.quads) throw DataError("no episodic memory configured");
    if (facts.empty()) throw DataError("episodic cost over an empty training set");
    return fact_cost<QuadFact, 4>(reg_of(model), *model.episodic, model.quads->likelihoods(), facts,
                                  sigma2, grad ? &grad->embeddings : nullptr,
                                  grad ? &grad->episodic : nullptr, weight, &quad_key);
}

double cost_sensory(const CoupledModel& model, std::span<const SensoryEntry> entries,
                    double sigma2, Gradients* grad, double weight) {
    if (!model.sensory || !model.sensory_store) throw DataError("no sensory memory configured");
    if (entries.empty()) throw DataError("sensory cost over an empty training set");
    const auto& registry = reg_of(model);
    const Memory& memory = *model.sensory;
    const std::size_t tslot = time_slot(memory);

    std::map<EntityId, Vector> buffers, encoded;
    if (model.encoder) {
        std::set<EntityId> times;
        for (const auto& e : entries) times.insert(e.t);
        buffers = gather_buffers(model, times);
        for (const auto& [t, u] : buffers) encoded.emplace(t, model.encoder->encode(u));
    }

    double total = 0.0;
    for (const auto& e : entries) {
        const std::array<EntityId, 3> ids{e.q, e.gamma, e.t};
        if (!model.encoder) {
            const double theta = memory.score(registry, ids);
            total += gaussian_nll(e.value, theta, sigma2);
            if (grad) {
                memory.backward(registry, ids, weight * gaussian_nll_grad(e.value, theta, sigma2),
                                grad->embeddings, grad->sensory);
            }
            continue;
        }
        std::vector<Vector> in(3);
        for (std::size_t j = 0; j < 3; ++j) {
            in[j] = j == tslot ? encoded.at(e.t) : memory.input(registry, j, ids[j]);
        }
        const double theta = memory.model().score(in);
        total += gaussian_nll(e.value, theta, sigma2);
        if (!grad) continue;
        const double d = weight * gaussian_nll_grad(e.value, theta, sigma2);
        std::vector<Vector> din(3);
        for (std::size_t j = 0; j < 3; ++j) din[j].assign(in[j].size(), 0.0);
        memory.model().backward(in, d, din, grad->sensory);
        for (std::size_t j = 0; j < 3; ++j) {
            if (j == tslot) {
                model.encoder->backward(buffers.at(e.t), din[j], grad->encoder);
            } else {
                memory.scatter_input_gradient(registry, j, ids[j], din[j], grad->embeddings);
            }
        }
    }
    return total;
}

std::vector<EntityId> time_sequence(const Registry& registry) {
    return registry.ids(EntityKind::Time);
}

std::vector<std::size_t> predict_steps(const CoupledModel& model) {
    if (!model.arx && !model.rnn) throw DataError("no predictor configured");
    const std::size_t W = model.arx ? model.arx->window() : model.window;
    const auto seq = time_sequence(reg_of(model));
    if (W == 0) throw DataError("prediction window must be positive");
    if (seq.size() < W + 1) {
        throw DataError("prediction needs at least " + std::to_string(W + 1) +
                        " time steps, have " + std::to_string(seq.size()));
    }
    std::vector<std::size_t> steps;
    for (std::size_t t = W; t < seq.size(); ++t) steps.push_back(t);
    return steps;
}

double cost_predict(const CoupledModel& model, std::span<const std::size_t> steps, Gradients* grad,
                    double weight) {
    const auto& registry = reg_of(model);
    if (!model.arx && !model.rnn) throw DataError("no predictor configured");
    const std::size_t W = model.arx ? model.arx->window() : model.window;
    const std::size_t r = registry.dim();
    const auto seq = time_sequence(registry);
    if (seq.size() < W + 1) {
        throw DataError("prediction needs at least " + std::to_string(W + 1) +
                        " time steps, have " + std::to_string(seq.size()));
    }
    const Vector a_ind =
        model.individual ? registry.embedding(*model.individual) : Vector(r, 0.0);
    if (model.individual) registry.require_kind(*model.individual, EntityKind::Entity);

    std::map<EntityId, Vector> buffers;
    if (model.rnn) {
        std::set<EntityId> times;
        for (auto t : steps) {
            for (std::size_t k = t - W + 1; k <= t; ++k) times.insert(seq.at(k));
        }
        buffers = gather_buffers(model, times);
    }

    double total = 0.0;
    Vector d_ind(r, 0.0);
    for (auto t : steps) {
        if (t < W || t >= seq.size()) throw DataError("prediction step out of range");
        const Vector target = registry.embedding(seq[t]);
        if (model.arx) {
            std::vector<Vector> history;
            for (std::size_t k = t - W; k < t; ++k) history.push_back(registry.embedding(seq[k]));
            const Vector y = model.arx->predict(history, a_ind);
            Vector d(r);
            for (std::size_t i = 0; i < r; ++i) {
                d[i] = weight * (y[i] - target[i]);
                total += 0.5 * (y[i] - target[i]) * (y[i] - target[i]);
            }
            if (!grad) continue;
            std::vector<Vector> d_hist(W, Vector(r, 0.0));
            model.arx->backward(history, a_ind, d, d_hist, d_ind, grad->predictor);
            for (std::size_t k = 0; k < W; ++k) {
                registry.backprop_row(seq[t - W + k], d_hist[k], grad->embeddings);
            }
            Vector d_target(r);
            for (std::size_t i = 0; i < r; ++i) d_target[i] = -d[i];
            registry.backprop_row(seq[t], d_target, grad->embeddings);
        } else {
            // Unroll W steps from a_{t-W}.
            std::vector<Vector> states{registry.embedding(seq[t - W])};
            for (std::size_t k = t - W + 1; k <= t; ++k) {
                states.push_back(model.rnn->step(buffers.at(seq[k]), states.back(), a_ind));
            }
            const Vector& y = states.back();
            Vector d(r);
            for (std::size_t i = 0; i < r; ++i) {
                d[i] = weight * (y[i] - target[i]);
                total += 0.5 * (y[i] - target[i]) * (y[i] - target[i]);
            }
            if (!grad) continue;
            Vector d_state = d;
            for (std::size_t k = W; k >= 1; --k) {
                Vector d_prev(r, 0.0);
                model.rnn->backward(buffers.at(seq[t - W + k]), states[k - 1], a_ind, d_state,
                                    d_prev, d_ind, grad->predictor);
                d_state = std::move(d_prev);
            }
            registry.backprop_row(seq[t - W], d_state, grad->embeddings);
            Vector d_target(r);
            for (std::size_t i = 0; i < r; ++i) d_target[i] = -d[i];
            registry.backprop_row(seq[t], d_target, grad->embeddings);
        }
    }
    if (grad && model.individual) registry.backprop_row(*model.individual, d_ind, grad->embeddings);
    return total;
}

double cost_predict(const CoupledModel& model, Gradients* grad, double weight) {
    const auto steps = predict_steps(model);
    return cost_predict(model, steps, grad, weight);
}

double regularizer(const CoupledModel& model, double lambda_a, double lambda_w, Gradients* grad,
                   double scale) {
    if (!(lambda_a >= 0.0) || !(lambda_w >= 0.0)) throw UsageError("regularization weights must be >= 0");
    const auto params = parameter_blocks(model);
    double total = 0.0;
    std::vector<std::span<double>> grads;
    if (grad) grads = grad->blocks();
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double lambda = k == 0 ? lambda_a : lambda_w;
        if (lambda == 0.0) continue;
        total += lambda * squared_norm(params[k]);
        if (grad) {
            for (std::size_t i = 0; i < params[k].size(); ++i) {
                grads[k][i] += scale * 2.0 * lambda * params[k][i];
            }
        }
    }
    return scale * total;
}

// ---------------------------------------------------------------------------
// Negatives

namespace {

// Callers skip positives whose every object is excluded.
EntityId draw_corruption(const std::vector<EntityId>& entities, const std::set<EntityId>& excluded,
                         Rng& rng) {
    while (true) {
        const EntityId o = entities[uniform_index(rng, entities.size())];
        if (!excluded.count(o)) return o;
    }
}

}  // namespace

std::vector<TripleFact> lcwa_negatives(const Registry& registry, const TripleStore& store,
                                       std::size_t ratio, Rng& rng, const TripleStore* known) {
    std::vector<TripleFact> out;
    if (ratio == 0) return out;
    const auto& entities = registry.ids(EntityKind::Entity);
    if (entities.size() < 2) throw DataError("negative sampling needs at least 2 entities");
    std::map<std::pair<EntityId, EntityId>, std::set<EntityId>> positives;
    const auto facts = store.facts();
    for (const TripleStore* src : {&store, known}) {
        if (!src) continue;
        for (const auto& f : src->facts()) {
            if (src->likelihoods().get(f.p) == Likelihood::Bernoulli && f.value == 1.0) {
                positives[{f.s, f.p}].insert(f.o);
            }
        }
    }
    for (const auto& f : facts) {
        if (store.likelihoods().get(f.p) != Likelihood::Bernoulli || f.value != 1.0) continue;
        const auto& excluded = positives.at({f.s, f.p});
        if (excluded.size() >= entities.size()) continue;
        for (std::size_t k = 0; k < ratio; ++k) {
            out.push_back({f.s, f.p, draw_corruption(entities, excluded, rng), 0.0});
        }
    }
    return out;
}

std::vector<QuadFact> lcwa_negatives(const Registry& registry, const QuadStore& store,
                                     std::size_t ratio, Rng& rng, const QuadStore* known) {
    std::vector<QuadFact> out;
    if (ratio == 0) return out;
    const auto& entities = registry.ids(EntityKind::Entity);
    if (entities.size() < 2) throw DataError("negative sampling needs at least 2 entities");
    std::map<std::array<EntityId, 3>, std::set<EntityId>> positives;
    const auto facts = store.facts();
    for (const QuadStore* src : {&store, known}) {
        if (!src) continue;
        for (const auto& f : src->facts()) {
            if (src->likelihoods().get(f.p) == Likelihood::Bernoulli && f.value == 1.0) {
                positives[{f.s, f.p, f.t}].insert(f.o);
            }
        }
    }
    for (const auto& f : facts) {
        if (store.likelihoods().get(f.p) != Likelihood::Bernoulli || f.value != 1.0) continue;
        const auto& excluded = positives.at({f.s, f.p, f.t});
        if (excluded.size() >= entities.size()) continue;
        for (std::size_t k = 0; k < ratio; ++k) {
            out.push_back({f.s, f.p, draw_corruption(entities, excluded, rng), f.t, 0.0});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Total cost and SGD

namespace {

struct ActiveTerms {
    bool semantic = false, episodic = false, sensory = false, predict = false;
};

ActiveTerms active_terms(const CoupledModel& m, const TrainConfig& c) {
    ActiveTerms a;
    a.semantic = c.weights.semantic > 0.0 && m.semantic && m.triples && !m.triples->empty();
    a.episodic = c.weights.episodic > 0.0 && m.episodic && m.quads && !m.quads->empty();
    a.sensory = c.weights.sensory > 0.0 && m.sensory && m.sensory_store && !m.sensory_store->empty();
    a.predict = c.weights.predict > 0.0 && (m.arx || m.rnn);
    return a;
}

void apply_freeze(const TrainConfig& config, Gradients& grad) {
    if (config.freeze_embeddings) std::fill(grad.embeddings.begin(), grad.embeddings.end(), 0.0);
    if (config.freeze_encoder) std::fill(grad.encoder.begin(), grad.encoder.end(), 0.0);
}

}  // namespace

TrainingSet build_training_set(const CoupledModel& model, const TrainConfig& config, Rng& rng) {
    const auto active = active_terms(model, config);
    const auto& registry = reg_of(model);
    TrainingSet set;
    if (active.semantic) {
        set.semantic = model.triples->facts();
        auto neg = lcwa_negatives(registry, *model.triples, config.negative_ratio, rng);
        set.semantic.insert(set.semantic.end(), neg.begin(), neg.end());
    }
    if (active.episodic) {
        set.episodic = model.quads->facts();
        auto neg = lcwa_negatives(registry, *model.quads, config.negative_ratio, rng);
        set.episodic.insert(set.episodic.end(), neg.begin(), neg.end());
    }
    if (active.sensory) set.sensory = model.sensory_store->entries();
    if (active.predict) set.predict = predict_steps(model);
    return set;
}

CostBreakdown total_cost(const CoupledModel& model, const TrainConfig& config,
                         const TrainingSet& set, Gradients* grad) {
    const auto& w = config.weights;
    CostBreakdown c;
    if (w.semantic > 0.0 && !set.semantic.empty()) {
        c.semantic = cost_semantic(model, set.semantic, config.sigma2, grad, w.semantic);
    }
    if (w.episodic > 0.0 && !set.episodic.empty()) {
        c.episodic = cost_episodic(model, set.episodic, config.sigma2, grad, w.episodic);
    }
    if (w.sensory > 0.0 && !set.sensory.empty()) {
        c.sensory = cost_sensory(model, set.sensory, config.sigma2, grad, w.sensory);
    }
    if (w.predict > 0.0 && !set.predict.empty()) {
        c.predict = cost_predict(model, set.predict, grad, w.predict);
    }
    c.reg = regularizer(model, config.lambda_a, config.lambda_w, grad);
    c.total = w.semantic * c.semantic + w.episodic * c.episodic + w.sensory * c.sensory +
              w.predict * c.predict + c.reg;
    if (grad) apply_freeze(config, *grad);
    return c;
}

namespace {

enum class ItemKind : std::uint8_t { Semantic, Episodic, Sensory, Predict };

struct Item {
    ItemKind kind;
    std::size_t index;
};

void item_gradients(const CoupledModel& model, const TrainConfig& config, const TrainingSet& set,
                    std::span<const Item> items, Gradients& grad) {
    // Group the batch by term so each cost function sees one contiguous span.
    TrainingSet part;
    for (const auto& it : items) {
        switch (it.kind) {
            case ItemKind::Semantic: part.semantic.push_back(set.semantic[it.index]); break;
            case ItemKind::Episodic: part.episodic.push_back(set.episodic[it.index]); break;
            case ItemKind::Sensory: part.sensory.push_back(set.sensory[it.index]); break;
            case ItemKind::Predict: part.predict.push_back(set.predict[it.index]); break;
        }
    }
    const auto& w = config.weights;
    if (!part.semantic.empty()) cost_semantic(model, part.semantic, config.sigma2, &grad, w.semantic);
    if (!part.episodic.empty()) cost_episodic(model, part.episodic, config.sigma2, &grad, w.episodic);
    if (!part.sensory.empty()) cost_sensory(model, part.sensory, config.sigma2, &grad, w.sensory);
    if (!part.predict.empty()) cost_predict(model, part.predict, &grad, w.predict);
}

bool all_finite(const Gradients& g) {
    for (auto b : g.blocks()) {
        for (double x : b) {
            if (!std::isfinite(x)) return false;
        }
    }
    return true;
}

}  // namespace

TrainingReport sgd_train(const CoupledModel& model, const TrainConfig& config) {
    config.validate();
    reg_of(model);
    if (model.semantic) model.semantic->sync(*model.registry);
    if (model.episodic) model.episodic->sync(*model.registry);
    const auto active = active_terms(model, config);
    if (!active.semantic && !active.episodic && !active.sensory && !active.predict) {
        throw DataError("nothing to train: every weighted store is empty or absent");
    }

    Rng train_rng = make_rng(config.seed, "train");
    Rng neg_rng = make_rng(config.seed, "negatives");

    TrainingReport report;
    TrainingSet set = build_training_set(model, config, neg_rng);
    report.initial_cost = total_cost(model, config, set).total;
    if (!std::isfinite(report.initial_cost)) throw DivergenceError("initial cost is not finite");

    Gradients grad = Gradients::zeros_like(model);
    std::vector<Gradients> worker_grads(config.workers > 1 ? config.workers : 0, grad);
    const auto params = parameter_blocks(model);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        if (epoch > 1) set = build_training_set(model, config, neg_rng);
        std::vector<Item> items;
        items.reserve(set.size());
        for (std::size_t i = 0; i < set.semantic.size(); ++i) items.push_back({ItemKind::Semantic, i});
        for (std::size_t i = 0; i < set.episodic.size(); ++i) items.push_back({ItemKind::Episodic, i});
        for (std::size_t i = 0; i < set.sensory.size(); ++i) items.push_back({ItemKind::Sensory, i});
        for (std::size_t i = 0; i < set.predict.size(); ++i) items.push_back({ItemKind::Predict, i});
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[uniform_index(train_rng, i)]);
        }

        const double n_items = static_cast<double>(items.size());
        for (std::size_t start = 0; start < items.size(); start += config.batch_size) {
            const std::size_t len = std::min(config.batch_size, items.size() - start);
            const std::span<const Item> batch(items.data() + start, len);
            grad.clear();
            if (config.workers > 1 && len >= config.workers) {
                std::vector<std::thread> pool;
                const std::size_t chunk = (len + config.workers - 1) / config.workers;
                for (std::size_t w = 0; w < config.workers; ++w) {
                    const std::size_t b = w * chunk;
                    if (b >= len) break;
                    worker_grads[w].clear();
                    pool.emplace_back([&, w, b] {
                        item_gradients(model, config, set, batch.subspan(b, std::min(chunk, len - b)),
                                       worker_grads[w]);
                    });
                }
                for (auto& t : pool) t.join();
                for (std::size_t w = 0; w < pool.size(); ++w) grad.add(worker_grads[w]);
            } else {
                item_gradients(model, config, set, batch, grad);
            }
            // The regularizer is spread over the batches of an epoch.
            regularizer(model, config.lambda_a, config.lambda_w, &grad,
                        static_cast<double>(len) / n_items);
            apply_freeze(config, grad);
            if (!all_finite(grad)) {
                throw DivergenceError("non-finite gradient in epoch " + std::to_string(epoch));
            }
            const double step = config.learning_rate / static_cast<double>(len);
            auto g = grad.blocks();
            for (std::size_t k = 0; k < params.size(); ++k) {
                for (std::size_t i = 0; i < params[k].size(); ++i) params[k][i] -= step * g[k][i];
            }
        }

        const CostBreakdown c = total_cost(model, config, set);
        if (!std::isfinite(c.total) || c.total > 1e6 * std::max(report.initial_cost, 1e-300)) {
            throw DivergenceError("training diverged in epoch " + std::to_string(epoch) +
                                  ": cost " + format_double(c.total) + " vs initial " +
                                  format_double(report.initial_cost));
        }
        report.epochs.push_back({epoch, c});
    }
    return report;
}

double roc_auc(std::span<const double> positive_scores, std::span<const double> negative_scores) {
    if (positive_scores.empty() || negative_scores.empty()) {
        throw DataError("AUC needs at least one positive and one negative");
    }
    // Rank-sum with midranks for ties.
    std::vector<std::pair<double, bool>> all;
    all.reserve(positive_scores.size() + negative_scores.size());
    for (double s : positive_scores) all.emplace_back(s, true);
    for (double s : negative_scores) all.emplace_back(s, false);
    std::sort(all.begin(), all.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        std::size_t pos = 0;
        while (j < all.size() && all[j].first == all[i].first) {
            pos += all[j].second;
            ++j;
        }
        const double mid = 0.5 * static_cast<double>(i + 1 + j);
        rank_sum += mid * static_cast<double>(pos);
        i = j;
    }
    const double np = static_cast<double>(positive_scores.size());
    const double nn = static_cast<double>(negative_scores.size());
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

void write_report(std::ostream& os, const TrainingReport& report) {
    os << "epoch\ttotal_cost\tsemantic\tepisodic\tsensory\tpredict\treg\n";
    for (const auto& e : report.epochs) {
        os << e.epoch << '\t' << format_double(e.cost.total) << '\t'
           << format_double(e.cost.semantic) << '\t' << format_double(e.cost.episodic) << '\t'
           << format_double(e.cost.sensory) << '\t' << format_double(e.cost.predict) << '\t'
           << format_double(e.cost.reg) << '\n';
    }
}

}  // namespace tensormem
