#pragma once
// Sparse observation stores for the semantic tensor X (triples), the
// episodic tensor Z (quadruples) and the sensory tensor U, plus the
// negative log-likelihoods that connect observed values to scores.

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tensormem/registry.hpp"

namespace tensormem {

enum class Likelihood { Bernoulli, Gaussian };

std::string_view to_string(Likelihood l);
Likelihood parse_likelihood(std::string_view text);

// -log P(x | theta) under the logistic link: log(1 + exp((1 - 2x) theta)).
double bernoulli_nll(double value, double theta);
// d bernoulli_nll / d theta.
double bernoulli_nll_grad(double value, double theta);
// (x - theta)^2 / (2 sigma2), constant dropped.
double gaussian_nll(double value, double theta, double sigma2);
double gaussian_nll_grad(double value, double theta, double sigma2);

struct TripleFact {
    EntityId s, p, o;
    double value;
};

struct QuadFact {
    EntityId s, p, o, t;
    double value;
};

struct SensoryEntry {
    EntityId q, gamma, t;
    double value;
};

// Per-predicate likelihood bookkeeping shared by the triple and quad stores.
// Undeclared predicates adopt the likelihood implied by their first value:
// 0/1 means Bernoulli, anything else Gaussian.
class PredicateLikelihoods {
public:
    void declare(EntityId p, Likelihood l) { declared_[p] = l; }
    Likelihood get(EntityId p) const;
    // Validates `value` against p's likelihood, fixing it on first use.
    void admit(EntityId p, double value, const Registry& registry);
    const std::map<EntityId, Likelihood>& all() const noexcept { return declared_; }

private:
    std::map<EntityId, Likelihood> declared_;
};

bool is_boolean_value(double v);

class TripleStore {
public:
    // Returns true if an existing value was replaced.
    bool insert(const Registry& registry, const TripleFact& fact);
    std::optional<double> lookup(EntityId s, EntityId p, EntityId o) const;
    bool contains(EntityId s, EntityId p, EntityId o) const { return lookup(s, p, o).has_value(); }
    std::vector<TripleFact> facts() const;
    std::size_t size() const noexcept { return facts_.size(); }
    bool empty() const noexcept { return facts_.empty(); }

    PredicateLikelihoods& likelihoods() noexcept { return likelihoods_; }
    const PredicateLikelihoods& likelihoods() const noexcept { return likelihoods_; }

private:
    std::map<std::array<EntityId, 3>, double> facts_;
    PredicateLikelihoods likelihoods_;
};

class QuadStore {
public:
    bool insert(const Registry& registry, const QuadFact& fact);
    std::optional<double> lookup(EntityId s, EntityId p, EntityId o, EntityId t) const;
    bool contains(EntityId s, EntityId p, EntityId o, EntityId t) const {
        return lookup(s, p, o, t).has_value();
    }
    std::vector<QuadFact> facts() const;
    std::size_t size() const noexcept { return facts_.size(); }
    bool empty() const noexcept { return facts_.empty(); }

    PredicateLikelihoods& likelihoods() noexcept { return likelihoods_; }
    const PredicateLikelihoods& likelihoods() const noexcept { return likelihoods_; }

private:
    std::map<std::array<EntityId, 4>, double> facts_;
    PredicateLikelihoods likelihoods_;
};

// The quadruples of one individual (the autobiographical sub-tensor).
QuadStore autobiographical_slice(const Registry& registry, const QuadStore& store,
                                 EntityId subject);

// Buffer position of a BufferPos entity: its label read as an integer.
std::size_t gamma_index(const Registry& registry, EntityId gamma);

class SensoryStore {
public:
    // gamma labels must be integers in [0, buffer_length].
    explicit SensoryStore(std::size_t buffer_length) : buffer_length_(buffer_length) {}

    bool insert(const Registry& registry, const SensoryEntry& entry);
    std::optional<double> lookup(EntityId q, EntityId gamma, EntityId t) const;
    std::vector<SensoryEntry> entries() const;
    // Entries grouped by time id, in registration order of the time ids.
    std::vector<EntityId> times() const;
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    std::size_t buffer_length() const noexcept { return buffer_length_; }

private:
    std::size_t buffer_length_;
    std::map<std::array<EntityId, 3>, double> entries_;  // keyed (t, q, gamma)
};

// ---------------------------------------------------------------------------
// TSV formats. Readers register unseen labels; `warnings` collects
// duplicate-key notices.

struct IngestWarnings {
    std::vector<std::string> messages;
};

// subject \t predicate \t object \t value
std::size_t read_triples(std::istream& in, Registry& registry, TripleStore& store,
                         IngestWarnings* warnings = nullptr);
void write_triples(std::ostream& out, const Registry& registry, const TripleStore& store);

// subject \t predicate \t object \t value \t time
std::size_t read_quads(std::istream& in, Registry& registry, QuadStore& store,
                       IngestWarnings* warnings = nullptr);
void write_quads(std::ostream& out, const Registry& registry, const QuadStore& store);

// time \t channel \t gamma \t value
std::size_t read_sensory(std::istream& in, Registry& registry, SensoryStore& store,
                         IngestWarnings* warnings = nullptr);
void write_sensory(std::ostream& out, const Registry& registry, const SensoryStore& store);

std::string format_value(double value, Likelihood l);

}  // namespace tensormem
