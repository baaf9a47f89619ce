#include "tensormem/stores.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>

#include "tensormem/errors.hpp"

namespace tensormem {

std::string_view to_string(Likelihood l) {
    return l == Likelihood::Bernoulli ? "bernoulli" : "gaussian";
}

Likelihood parse_likelihood(std::string_view text) {
    if (text == "bernoulli") return Likelihood::Bernoulli;
    if (text == "gaussian") return Likelihood::Gaussian;
    throw UsageError("unknown likelihood '" + std::string(text) + "'");
}

double bernoulli_nll(double value, double theta) {
    return softplus((1.0 - 2.0 * value) * theta);
}

double bernoulli_nll_grad(double value, double theta) {
    const double sign = 1.0 - 2.0 * value;
    return sign * sigmoid(sign * theta);
}

double gaussian_nll(double value, double theta, double sigma2) {
    if (!(sigma2 > 0.0)) throw DataError("Gaussian variance must be positive");
    const double d = value - theta;
    return d * d / (2.0 * sigma2);
}

double gaussian_nll_grad(double value, double theta, double sigma2) {
    if (!(sigma2 > 0.0)) throw DataError("Gaussian variance must be positive");
    return (theta - value) / sigma2;
}

bool is_boolean_value(double v) { return v == 0.0 || v == 1.0; }

Likelihood PredicateLikelihoods::get(EntityId p) const {
    auto it = declared_.find(p);
    return it == declared_.end() ? Likelihood::Bernoulli : it->second;
}

void PredicateLikelihoods::admit(EntityId p, double value, const Registry& registry) {
    if (!std::isfinite(value)) throw DataError("fact values must be finite");
    auto it = declared_.find(p);
    if (it == declared_.end()) {
        declared_.emplace(p, is_boolean_value(value) ? Likelihood::Bernoulli : Likelihood::Gaussian);
        return;
    }
    if (it->second == Likelihood::Bernoulli && !is_boolean_value(value)) {
        throw DataError("predicate '" + registry.entity(p).label +
                        "' is Bernoulli but received value " + format_double(value));
    }
}

// ---------------------------------------------------------------------------

bool TripleStore::insert(const Registry& registry, const TripleFact& f) {
    registry.require_kind(f.s, EntityKind::Entity);
    registry.require_kind(f.p, EntityKind::Predicate);
    registry.require_kind(f.o, EntityKind::Entity);
    likelihoods_.admit(f.p, f.value, registry);
    auto [it, inserted] = facts_.insert_or_assign({f.s, f.p, f.o}, f.value);
    return !inserted;
}

std::optional<double> TripleStore::lookup(EntityId s, EntityId p, EntityId o) const {
    auto it = facts_.find({s, p, o});
    if (it == facts_.end()) return std::nullopt;
    return it->second;
}

std::vector<TripleFact> TripleStore::facts() const {
    std::vector<TripleFact> out;
    out.reserve(facts_.size());
    for (const auto& [k, v] : facts_) out.push_back({k[0], k[1], k[2], v});
    return out;
}

bool QuadStore::insert(const Registry& registry, const QuadFact& f) {
    registry.require_kind(f.s, EntityKind::Entity);
    registry.require_kind(f.p, EntityKind::Predicate);
    registry.require_kind(f.o, EntityKind::Entity);
    registry.require_kind(f.t, EntityKind::Time);
    likelihoods_.admit(f.p, f.value, registry);
    auto [it, inserted] = facts_.insert_or_assign({f.s, f.p, f.o, f.t}, f.value);
    return !inserted;
}

std::optional<double> QuadStore::lookup(EntityId s, EntityId p, EntityId o, EntityId t) const {
    auto it = facts_.find({s, p, o, t});
    if (it == facts_.end()) return std::nullopt;
    return it->second;
}

std::vector<QuadFact> QuadStore::facts() const {
    std::vector<QuadFact> out;
    out.reserve(facts_.size());
    for (const auto& [k, v] : facts_) out.push_back({k[0], k[1], k[2], k[3], v});
    return out;
}

QuadStore autobiographical_slice(const Registry& registry, const QuadStore& store,
                                 EntityId subject) {
    registry.require_kind(subject, EntityKind::Entity);
    QuadStore slice;
    for (const auto& [p, l] : store.likelihoods().all()) slice.likelihoods().declare(p, l);
    for (const auto& f : store.facts()) {
        if (f.s == subject) slice.insert(registry, f);
    }
    return slice;
}

std::size_t gamma_index(const Registry& registry, EntityId gamma) {
    registry.require_kind(gamma, EntityKind::BufferPos);
    std::uint64_t g = 0;
    if (!parse_uint(registry.entity(gamma).label, g)) {
        throw DataError("buffer position label '" + registry.entity(gamma).label +
                        "' is not a non-negative integer");
    }
    return static_cast<std::size_t>(g);
}

bool SensoryStore::insert(const Registry& registry, const SensoryEntry& e) {
    registry.require_kind(e.q, EntityKind::Channel);
    registry.require_kind(e.t, EntityKind::Time);
    if (gamma_index(registry, e.gamma) > buffer_length_) {
        throw DataError("buffer position " + registry.entity(e.gamma).label +
                        " exceeds buffer length " + std::to_string(buffer_length_));
    }
    if (!std::isfinite(e.value)) throw DataError("sensory values must be finite");
    auto [it, inserted] = entries_.insert_or_assign({e.t, e.q, e.gamma}, e.value);
    return !inserted;
}

std::optional<double> SensoryStore::lookup(EntityId q, EntityId gamma, EntityId t) const {
    auto it = entries_.find({t, q, gamma});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::vector<SensoryEntry> SensoryStore::entries() const {
    std::vector<SensoryEntry> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back({k[1], k[2], k[0], v});
    return out;
}

std::vector<EntityId> SensoryStore::times() const {
    std::set<EntityId> seen;
    for (const auto& [k, v] : entries_) seen.insert(k[0]);
    return {seen.begin(), seen.end()};
}

// ---------------------------------------------------------------------------
// TSV

namespace {

template <typename Fn>
std::size_t for_each_record(std::istream& in, std::size_t columns, Fn&& fn) {
    std::string line;
    std::size_t lineno = 0, records = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty() || line.front() == '#') continue;
        auto cols = split_tabs(line);
        if (cols.size() != columns) {
            throw ParseError("expected " + std::to_string(columns) + " tab-separated columns, got " +
                                 std::to_string(cols.size()),
                             lineno);
        }
        for (auto& c : cols) {
            c = trim(c);
            if (c.empty()) throw ParseError("empty column", lineno);
        }
        try {
            fn(cols, lineno);
        } catch (const ParseError&) {
            throw;
        } catch (const DataError& e) {
            throw ParseError(e.what(), lineno);
        }
        ++records;
    }
    return records;
}

double parse_value(std::string_view text, std::size_t lineno) {
    double v = 0.0;
    if (!parse_double(text, v)) {
        throw ParseError("value '" + std::string(text) + "' is not a decimal literal", lineno);
    }
    return v;
}

void note_duplicate(IngestWarnings* w, std::size_t lineno, const std::string& key) {
    if (w) w->messages.push_back("line " + std::to_string(lineno) + ": duplicate " + key +
                                 ", last value wins");
}

}  // namespace

std::string format_value(double value, Likelihood l) {
    if (l == Likelihood::Bernoulli) return value == 0.0 ? "0" : "1";
    return format_double(value);
}

std::size_t read_triples(std::istream& in, Registry& registry, TripleStore& store,
                         IngestWarnings* warnings) {
    return for_each_record(in, 4, [&](const auto& c, std::size_t lineno) {
        const double value = parse_value(c[3], lineno);
        const TripleFact f{registry.register_entity(c[0], EntityKind::Entity),
                           registry.register_entity(c[1], EntityKind::Predicate),
                           registry.register_entity(c[2], EntityKind::Entity), value};
        if (store.insert(registry, f)) {
            note_duplicate(warnings, lineno,
                           "(" + std::string(c[0]) + ", " + std::string(c[1]) + ", " +
                               std::string(c[2]) + ")");
        }
    });
}

void write_triples(std::ostream& out, const Registry& registry, const TripleStore& store) {
    for (const auto& f : store.facts()) {
        out << registry.entity(f.s).label << '\t' << registry.entity(f.p).label << '\t'
            << registry.entity(f.o).label << '\t'
            << format_value(f.value, store.likelihoods().get(f.p)) << '\n';
    }
}

std::size_t read_quads(std::istream& in, Registry& registry, QuadStore& store,
                       IngestWarnings* warnings) {
    return for_each_record(in, 5, [&](const auto& c, std::size_t lineno) {
        const double value = parse_value(c[3], lineno);
        const QuadFact f{registry.register_entity(c[0], EntityKind::Entity),
                         registry.register_entity(c[1], EntityKind::Predicate),
                         registry.register_entity(c[2], EntityKind::Entity),
                         registry.register_entity(c[4], EntityKind::Time), value};
        if (store.insert(registry, f)) {
            note_duplicate(warnings, lineno,
                           "(" + std::string(c[0]) + ", " + std::string(c[1]) + ", " +
                               std::string(c[2]) + ", " + std::string(c[4]) + ")");
        }
    });
}

void write_quads(std::ostream& out, const Registry& registry, const QuadStore& store) {
    for (const auto& f : store.facts()) {
        out << registry.entity(f.s).label << '\t' << registry.entity(f.p).label << '\t'
            << registry.entity(f.o).label << '\t'
            << format_value(f.value, store.likelihoods().get(f.p)) << '\t'
            << registry.entity(f.t).label << '\n';
    }
}

std::size_t read_sensory(std::istream& in, Registry& registry, SensoryStore& store,
                         IngestWarnings* warnings) {
    return for_each_record(in, 4, [&](const auto& c, std::size_t lineno) {
        std::uint64_t gamma = 0;
        if (!parse_uint(c[2], gamma)) {
            throw ParseError("gamma '" + std::string(c[2]) + "' is not a non-negative integer",
                             lineno);
        }
        if (gamma > store.buffer_length()) {
            throw ParseError("gamma " + std::to_string(gamma) + " exceeds buffer length " +
                                 std::to_string(store.buffer_length()),
                             lineno);
        }
        const double value = parse_value(c[3], lineno);
        const SensoryEntry e{registry.register_entity(c[1], EntityKind::Channel),
                             registry.register_entity(std::to_string(gamma), EntityKind::BufferPos),
                             registry.register_entity(c[0], EntityKind::Time), value};
        if (store.insert(registry, e)) {
            note_duplicate(warnings, lineno,
                           "(" + std::string(c[0]) + ", " + std::string(c[1]) + ", " +
                               std::to_string(gamma) + ")");
        }
    });
}

void write_sensory(std::ostream& out, const Registry& registry, const SensoryStore& store) {
    for (const auto& e : store.entries()) {
        out << registry.entity(e.t).label << '\t' << registry.entity(e.q).label << '\t'
            << gamma_index(registry, e.gamma) << '\t' << format_double(e.value) << '\n';
    }
}

}  // namespace tensormem
