#pragma once
// Independent reference implementations used only by tests: explicit loops,
// exhaustive enumeration and central differences. None of these share code
// paths with the library beyond Memory::input and ScoringModel::score.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <variant>
#include <vector>

#include "tensormem/models.hpp"
#include "tensormem/query.hpp"
#include "tensormem/registry.hpp"

namespace oracle {

using tensormem::EntityId;
using tensormem::Vector;

inline double parafac(const Vector& a, const Vector& b, const Vector& c) {
    double s = 0.0;
    for (std::size_t r = 0; r < a.size(); ++r) s += a[r] * b[r] * c[r];
    return s;
}

// Nested-loop Tucker contraction for arity 3 and 4.
inline double tucker(const tensormem::CoreTensor& g, const std::vector<Vector>& f) {
    const std::size_t r = g.dim();
    double s = 0.0;
    if (g.arity() == 3) {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < r; ++j)
                for (std::size_t k = 0; k < r; ++k)
                    s += f[0][i] * f[1][j] * f[2][k] * g.effective((i * r + j) * r + k);
        return s;
    }
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j)
            for (std::size_t k = 0; k < r; ++k)
                for (std::size_t l = 0; l < r; ++l)
                    s += f[0][i] * f[1][j] * f[2][k] * f[3][l] *
                         g.effective(((i * r + j) * r + k) * r + l);
    return s;
}

inline double rescal(const tensormem::RescalCore& g, const Vector& a, std::size_t p, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.dim(); ++i)
        for (std::size_t j = 0; j < g.dim(); ++j) s += a[i] * b[j] * g.effective(i, j, p);
    return s;
}

// Candidate inputs of one slot under a binding.
inline std::vector<Vector> slot_candidates(const tensormem::Memory& m, const tensormem::Registry& reg,
                                           std::size_t j, const tensormem::SlotBinding& b,
                                           std::vector<EntityId>* free_support) {
    namespace slot = tensormem::slot;
    std::vector<Vector> out;
    if (auto* bound = std::get_if<slot::Bound>(&b)) {
        out.push_back(m.input(reg, j, bound->id));
    } else if (auto* clamp = std::get_if<slot::Clamp>(&b)) {
        out.push_back(clamp->input);
    } else if (auto* marg = std::get_if<slot::Marginalize>(&b)) {
        const auto ids = marg->subset ? *marg->subset : m.support(reg, j);
        for (auto id : ids) out.push_back(m.input(reg, j, id));
    } else {
        for (auto id : m.support(reg, j)) out.push_back(m.input(reg, j, id));
        if (free_support) *free_support = m.support(reg, j);
    }
    return out;
}

// Brute force: enumerate every tuple consistent with the bindings, add the
// score (the unnormalized mass at beta = 1) into the free slot's value, then
// raise to beta and normalize.
inline std::vector<double> conditional(const tensormem::Memory& m, const tensormem::Registry& reg,
                                       const std::vector<tensormem::SlotBinding>& bindings,
                                       double beta) {
    const std::size_t k = bindings.size();
    std::vector<std::vector<Vector>> cands(k);
    std::size_t free_slot = k;
    std::vector<EntityId> support;
    for (std::size_t j = 0; j < k; ++j) {
        if (std::holds_alternative<tensormem::slot::Free>(bindings[j])) free_slot = j;
        cands[j] = slot_candidates(m, reg, j, bindings[j], &support);
    }
    std::vector<double> mass(cands[free_slot].size(), 0.0);
    std::vector<std::size_t> idx(k, 0);
    std::vector<Vector> in(k);
    while (true) {
        for (std::size_t j = 0; j < k; ++j) in[j] = cands[j][idx[j]];
        mass[idx[free_slot]] += m.model().score(in);
        std::size_t j = 0;
        while (j < k && ++idx[j] == cands[j].size()) idx[j++] = 0;
        if (j == k) break;
    }
    std::vector<double> p(mass.size());
    double z = 0.0;
    for (std::size_t i = 0; i < mass.size(); ++i) {
        p[i] = beta == 0.0 ? 1.0 : std::pow(mass[i], beta);
        z += p[i];
    }
    for (auto& x : p) x /= z;
    return p;
}

// Full joint P(tuple) oc score^beta over every id combination.
inline std::map<std::vector<EntityId>, double> joint(const tensormem::Memory& m,
                                                     const tensormem::Registry& reg, double beta) {
    const std::size_t k = m.arity();
    std::vector<std::vector<EntityId>> sup(k);
    for (std::size_t j = 0; j < k; ++j) sup[j] = m.support(reg, j);
    std::map<std::vector<EntityId>, double> out;
    std::vector<std::size_t> idx(k, 0);
    double z = 0.0;
    while (true) {
        std::vector<EntityId> ids(k);
        for (std::size_t j = 0; j < k; ++j) ids[j] = sup[j][idx[j]];
        const double w = std::pow(m.score(reg, ids), beta);
        out[ids] = w;
        z += w;
        std::size_t j = 0;
        while (j < k && ++idx[j] == sup[j].size()) idx[j++] = 0;
        if (j == k) break;
    }
    for (auto& [key, w] : out) w /= z;
    return out;
}

// Central difference of f with respect to x[i].
inline double central_difference(const std::function<double()>& f, double& x, double h = 1e-5) {
    const double saved = x;
    x = saved + h;
    const double up = f();
    x = saved - h;
    const double down = f();
    x = saved;
    return (up - down) / (2.0 * h);
}

// |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-4) {
    return std::abs(analytic - numeric) /
           std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Worst relative error over every coordinate of `params`.
inline double gradient_check(const std::function<double()>& f, std::span<double> params,
                             std::span<const double> analytic, double h = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double n = central_difference(f, params[i], h);
        worst = std::max(worst, relative_error(analytic[i], n));
    }
    return worst;
}

inline double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

}  // namespace oracle
