#include "tensormem/registry.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "tensormem/errors.hpp"

namespace tensormem {

std::string_view to_string(EntityKind kind) {
    switch (kind) {
        case EntityKind::Entity: return "entity";
        case EntityKind::Predicate: return "predicate";
        case EntityKind::Time: return "time";
        case EntityKind::Channel: return "channel";
        case EntityKind::BufferPos: return "bufferpos";
    }
    return "?";
}

EntityKind parse_kind(std::string_view text) {
    for (auto k : kAllKinds) {
        if (to_string(k) == text) return k;
    }
    throw DataError("unknown entity kind '" + std::string(text) + "'");
}

Registry::Registry(std::size_t dim, bool nonneg_mode, std::uint64_t seed)
    : dim_(dim), nonneg_(nonneg_mode), init_rng_(make_rng(seed, "init")) {
    if (dim == 0) throw DimensionError("latent dimension must be at least 1");
}

EntityId Registry::register_entity(std::string_view label, EntityKind kind) {
    if (label.empty()) throw DataError("entity label must be non-empty");
    if (auto hit = find(label, kind)) return *hit;
    const auto id = static_cast<EntityId>(entities_.size());
    entities_.push_back({id, std::string(label), kind});
    index_.emplace(std::make_pair(kind, std::string(label)), id);
    auto& bucket = by_kind_[static_cast<std::size_t>(kind)];
    ordinals_.push_back(bucket.size());
    bucket.push_back(id);
    append_row();
    return id;
}

void Registry::append_row() {
    const double stddev = 0.1 / std::sqrt(static_cast<double>(dim_));
    for (std::size_t r = 0; r < dim_; ++r) rows_.push_back(normal(init_rng_, 0.0, stddev));
}

std::optional<EntityId> Registry::find(std::string_view label, EntityKind kind) const {
    auto it = index_.find(std::make_pair(kind, std::string(label)));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

EntityId Registry::require(std::string_view label, EntityKind kind) const {
    if (auto hit = find(label, kind)) return *hit;
    throw UnknownIdError("unknown " + std::string(to_string(kind)) + " '" + std::string(label) +
                         "'");
}

const GeneralizedEntity& Registry::entity(EntityId id) const {
    if (!contains(id)) throw UnknownIdError("unknown id " + std::to_string(id));
    return entities_[id];
}

void Registry::require_kind(EntityId id, EntityKind kind) const {
    const auto& e = entity(id);
    if (e.kind != kind) {
        throw KindError("id " + std::to_string(id) + " ('" + e.label + "') is a " +
                        std::string(to_string(e.kind)) + ", expected " +
                        std::string(to_string(kind)));
    }
}

const std::vector<EntityId>& Registry::ids(EntityKind kind) const {
    return by_kind_[static_cast<std::size_t>(kind)];
}

std::size_t Registry::ordinal(EntityId id) const {
    entity(id);
    return ordinals_[id];
}

Vector Registry::embedding(EntityId id) const {
    auto row = stored_row(id);
    Vector out(row.begin(), row.end());
    if (nonneg_) {
        for (auto& x : out) x = std::exp(x);
    }
    return out;
}

void Registry::set_embedding(EntityId id, std::span<const double> effective) {
    if (effective.size() != dim_) {
        throw DimensionError("embedding length " + std::to_string(effective.size()) +
                             ", expected " + std::to_string(dim_));
    }
    auto row = stored_row(id);
    for (std::size_t r = 0; r < dim_; ++r) {
        if (nonneg_) {
            if (!(effective[r] > 0.0)) {
                throw NumericalError("nonnegative mode requires strictly positive embeddings");
            }
            row[r] = std::log(effective[r]);
        } else {
            row[r] = effective[r];
        }
    }
}

std::span<double> Registry::stored_row(EntityId id) {
    entity(id);
    return std::span<double>(rows_).subspan(static_cast<std::size_t>(id) * dim_, dim_);
}

std::span<const double> Registry::stored_row(EntityId id) const {
    entity(id);
    return std::span<const double>(rows_).subspan(static_cast<std::size_t>(id) * dim_, dim_);
}

void Registry::backprop_row(EntityId id, std::span<const double> d_effective,
                            std::span<double> grad) const {
    auto row = stored_row(id);
    auto out = grad.subspan(static_cast<std::size_t>(id) * dim_, dim_);
    for (std::size_t r = 0; r < dim_; ++r) {
        out[r] += nonneg_ ? d_effective[r] * std::exp(row[r]) : d_effective[r];
    }
}

void Registry::save(const std::filesystem::path& tsv, const std::filesystem::path& bin) const {
    std::ofstream text(tsv, std::ios::binary);
    if (!text) throw DataError("cannot write " + tsv.string());
    for (const auto& e : entities_) {
        text << e.id << '\t' << to_string(e.kind) << '\t' << e.label << '\n';
    }
    std::ofstream data(bin, std::ios::binary);
    if (!data) throw DataError("cannot write " + bin.string());
    write_u64(data, entities_.size());
    write_u64(data, dim_);
    write_f64s(data, rows_);
}

Registry Registry::load(const std::filesystem::path& tsv, const std::filesystem::path& bin,
                        bool nonneg_mode, std::uint64_t seed) {
    std::ifstream data(bin, std::ios::binary);
    if (!data) throw DataError("cannot read " + bin.string());
    const auto rows = read_u64(data);
    const auto dim = read_u64(data);
    Registry reg(dim, nonneg_mode, seed);

    std::ifstream text(tsv, std::ios::binary);
    if (!text) throw DataError("cannot read " + tsv.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(text, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cols = split_tabs(line);
        std::uint64_t id = 0;
        if (cols.size() != 3 || !parse_uint(cols[0], id)) {
            throw ParseError("malformed registry line", lineno);
        }
        if (id != reg.size()) throw ParseError("registry ids must be dense and ordered", lineno);
        reg.register_entity(cols[2], parse_kind(cols[1]));
    }
    if (reg.size() != rows) {
        throw DataError("registry has " + std::to_string(reg.size()) + " labels but " +
                        std::to_string(rows) + " embedding rows");
    }
    reg.rows_ = read_f64s(data, rows * dim);
    return reg;
}

}  // namespace tensormem
