#pragma once
// The universe of generalized entities and the shared latent matrix A.
//
// Every entity, predicate, time step, sensor channel and buffer position owns
// exactly one row of A, and every memory model reads the same row. In
// nonnegative mode the stored row is a free parameter and the effective
// embedding is its elementwise exp.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tensormem/common.hpp"

namespace tensormem {

enum class EntityKind : std::uint8_t { Entity = 0, Predicate, Time, Channel, BufferPos };

inline constexpr std::array<EntityKind, 5> kAllKinds = {
    EntityKind::Entity, EntityKind::Predicate, EntityKind::Time, EntityKind::Channel,
    EntityKind::BufferPos};

std::string_view to_string(EntityKind kind);
EntityKind parse_kind(std::string_view text);

using EntityId = std::uint32_t;

struct GeneralizedEntity {
    EntityId id;
    std::string label;
    EntityKind kind;
};

class Registry {
public:
    Registry(std::size_t dim, bool nonneg_mode, std::uint64_t seed);

    // Idempotent: (label, kind) pairs map to one id forever.
    EntityId register_entity(std::string_view label, EntityKind kind);

    std::optional<EntityId> find(std::string_view label, EntityKind kind) const;
    EntityId require(std::string_view label, EntityKind kind) const;

    const GeneralizedEntity& entity(EntityId id) const;
    bool contains(EntityId id) const noexcept { return id < entities_.size(); }
    void require_kind(EntityId id, EntityKind kind) const;

    std::size_t size() const noexcept { return entities_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    bool nonneg_mode() const noexcept { return nonneg_; }

    // Ids of one kind in registration order; ordinal() is the position in it.
    const std::vector<EntityId>& ids(EntityKind kind) const;
    std::size_t count(EntityKind kind) const { return ids(kind).size(); }
    std::size_t ordinal(EntityId id) const;

    Vector embedding(EntityId id) const;
    // Overwrites a row so that embedding(id) == effective afterwards. In
    // nonnegative mode every component must be strictly positive.
    void set_embedding(EntityId id, std::span<const double> effective);

    std::span<double> stored_row(EntityId id);
    std::span<const double> stored_row(EntityId id) const;
    std::span<double> stored() noexcept { return rows_; }
    std::span<const double> stored() const noexcept { return rows_; }

    // Chain rule from d(cost)/d(effective row) into d(cost)/d(stored row),
    // accumulated into the row-major gradient matrix `grad` (size() x dim()).
    void backprop_row(EntityId id, std::span<const double> d_effective,
                      std::span<double> grad) const;

    // Two-file snapshot: `id\tkind\tlabel` TSV and a little-endian f64 matrix
    // preceded by (rows, dim) as u64.
    void save(const std::filesystem::path& tsv, const std::filesystem::path& bin) const;
    static Registry load(const std::filesystem::path& tsv, const std::filesystem::path& bin,
                         bool nonneg_mode, std::uint64_t seed);

private:
    void append_row();

    std::size_t dim_;
    bool nonneg_;
    Rng init_rng_;
    std::vector<GeneralizedEntity> entities_;
    std::map<std::pair<EntityKind, std::string>, EntityId, std::less<>> index_;
    std::array<std::vector<EntityId>, kAllKinds.size()> by_kind_;
    std::vector<std::size_t> ordinals_;
    Vector rows_;
};

}  // namespace tensormem
