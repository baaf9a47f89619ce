#include "tensormem/models.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "tensormem/errors.hpp"

namespace tensormem {

std::string_view to_string(ModelFamily family) {
    switch (family) {
        case ModelFamily::Parafac: return "parafac";
        case ModelFamily::Tucker: return "tucker";
        case ModelFamily::Rescal: return "rescal";
        case ModelFamily::Multiway: return "multiway";
    }
    return "?";
}

ModelFamily parse_family(std::string_view text) {
    for (auto f : {ModelFamily::Parafac, ModelFamily::Tucker, ModelFamily::Rescal,
                   ModelFamily::Multiway}) {
        if (to_string(f) == text) return f;
    }
    throw UsageError("unknown model family '" + std::string(text) + "'");
}

namespace {

void require_len(std::span<const double> v, std::size_t n, const char* what) {
    if (v.size() != n) {
        throw DimensionError(std::string(what) + ": length " + std::to_string(v.size()) +
                             ", expected " + std::to_string(n));
    }
}

void require_arity(Inputs inputs, std::size_t arity) {
    if (inputs.size() != arity) {
        throw DimensionError("expected " + std::to_string(arity) + " slot inputs, got " +
                             std::to_string(inputs.size()));
    }
}

void require_slot(std::size_t slot, std::size_t arity) {
    if (slot >= arity) {
        throw DimensionError("slot " + std::to_string(slot) + " out of range for arity " +
                             std::to_string(arity));
    }
}

std::size_t ipow(std::size_t base, std::size_t exp) {
    std::size_t r = 1;
    for (std::size_t i = 0; i < exp; ++i) r *= base;
    return r;
}

void check_header(std::istream& is, std::initializer_list<std::uint64_t> expected,
                  const char* what) {
    for (auto e : expected) {
        const auto got = read_u64(is);
        if (got != e) {
            throw DataError(std::string(what) + " file header does not match the configured model");
        }
    }
}

// One pass over every core entry. Accumulates:
//   score            += g * prod_j f_j[r_j]
//   slot_grads[j]    += upstream * g * prod_{i != j} f_i[r_i]   (if non-empty)
//   core_grad[flat]  += upstream * prod_j f_j[r_j] * dg/dstored (if non-empty)
double tucker_pass(const CoreTensor& core, Inputs f, double upstream,
                   std::span<Vector> slot_grads, std::span<double> core_grad) {
    const std::size_t k = core.arity();
    const std::size_t r = core.dim();
    std::vector<std::size_t> idx(k, 0);
    std::vector<double> prefix(k + 1), suffix(k + 1);
    double score = 0.0;
    for (std::size_t flat = 0; flat < core.size(); ++flat) {
        prefix[0] = 1.0;
        for (std::size_t j = 0; j < k; ++j) prefix[j + 1] = prefix[j] * f[j][idx[j]];
        suffix[k] = 1.0;
        for (std::size_t j = k; j-- > 0;) suffix[j] = suffix[j + 1] * f[j][idx[j]];
        const double g = core.effective(flat);
        const double prod = prefix[k];
        score += g * prod;
        if (!core_grad.empty()) {
            const double dg = core.nonneg_mode() ? g : 1.0;
            core_grad[flat] += upstream * prod * dg;
        }
        if (!slot_grads.empty()) {
            for (std::size_t j = 0; j < k; ++j) {
                slot_grads[j][idx[j]] += upstream * g * prefix[j] * suffix[j + 1];
            }
        }
        for (std::size_t j = k; j-- > 0;) {
            if (++idx[j] < r) break;
            idx[j] = 0;
        }
    }
    return score;
}

}  // namespace

// ---------------------------------------------------------------------------
// Cores

CoreTensor::CoreTensor(std::size_t arity, std::size_t dim, bool nonneg_mode)
    : arity_(arity), dim_(dim), nonneg_(nonneg_mode), stored_(ipow(dim, arity), 0.0) {
    if (arity < 1) throw DimensionError("core arity must be at least 1");
    if (dim < 1) throw DimensionError("core dimension must be at least 1");
}

double CoreTensor::effective(std::size_t flat) const {
    return nonneg_ ? std::exp(stored_[flat]) : stored_[flat];
}

void CoreTensor::set_effective(std::size_t flat, double value) {
    if (nonneg_ && !(value > 0.0)) {
        throw NumericalError("nonnegative core entries must be strictly positive");
    }
    stored_.at(flat) = nonneg_ ? std::log(value) : value;
}

RescalCore::RescalCore(std::size_t dim, std::size_t predicates, bool nonneg_mode)
    : dim_(dim), predicates_(predicates), nonneg_(nonneg_mode),
      stored_(dim * dim * predicates, 0.0) {
    if (dim < 1) throw DimensionError("core dimension must be at least 1");
}

double RescalCore::effective(std::size_t r1, std::size_t r2, std::size_t p) const {
    const double s = stored_[flat(r1, r2, p)];
    return nonneg_ ? std::exp(s) : s;
}

void RescalCore::set_effective(std::size_t r1, std::size_t r2, std::size_t p, double value) {
    if (p >= predicates_) throw UnknownIdError("unknown predicate index " + std::to_string(p));
    if (nonneg_ && !(value > 0.0)) {
        throw NumericalError("nonnegative core entries must be strictly positive");
    }
    stored_.at(flat(r1, r2, p)) = nonneg_ ? std::log(value) : value;
}

void RescalCore::resize_predicates(std::size_t predicates) {
    if (predicates < predicates_) throw DataError("RESCAL core cannot drop predicates");
    predicates_ = predicates;
    stored_.resize(dim_ * dim_ * predicates_, 0.0);
}

// ---------------------------------------------------------------------------
// Multiway network

MultiwayNet::MultiwayNet(std::size_t inputs, std::size_t in_dim, std::size_t hidden,
                         std::size_t out_dim)
    : inputs_(inputs), in_dim_(in_dim), hidden_(hidden), out_dim_(out_dim) {
    if (hidden == 0 || out_dim == 0) throw DimensionError("multiway net needs hidden and output units");
    params_.assign(inputs * hidden * in_dim + hidden + out_dim * hidden + out_dim, 0.0);
}

Vector MultiwayNet::hidden_activations(Inputs x) const {
    require_arity(x, inputs_);
    Vector pre(params_.begin() + hidden_bias_offset(),
               params_.begin() + hidden_bias_offset() + hidden_);
    for (std::size_t k = 0; k < inputs_; ++k) {
        require_len(x[k], in_dim_, "multiway input");
        const double* w = params_.data() + weight_offset(k);
        for (std::size_t j = 0; j < hidden_; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < in_dim_; ++i) s += w[j * in_dim_ + i] * x[k][i];
            pre[j] += s;
        }
    }
    for (auto& z : pre) z = std::tanh(z);
    return pre;
}

Vector MultiwayNet::forward(Inputs x) const {
    const Vector z = hidden_activations(x);
    const double* u = params_.data() + output_weight_offset();
    Vector out(params_.begin() + output_bias_offset(),
               params_.begin() + output_bias_offset() + out_dim_);
    for (std::size_t m = 0; m < out_dim_; ++m) {
        for (std::size_t j = 0; j < hidden_; ++j) out[m] += u[m * hidden_ + j] * z[j];
    }
    return out;
}

void MultiwayNet::backward(Inputs x, std::span<const double> d_out, std::span<Vector> d_inputs,
                           std::span<double> d_params) const {
    require_len(d_out, out_dim_, "multiway output gradient");
    require_len(d_params, params_.size(), "multiway parameter gradient");
    const Vector z = hidden_activations(x);
    const double* u = params_.data() + output_weight_offset();

    Vector d_pre(hidden_, 0.0);
    for (std::size_t m = 0; m < out_dim_; ++m) {
        d_params[output_bias_offset() + m] += d_out[m];
        for (std::size_t j = 0; j < hidden_; ++j) {
            d_params[output_weight_offset() + m * hidden_ + j] += d_out[m] * z[j];
            d_pre[j] += u[m * hidden_ + j] * d_out[m];
        }
    }
    for (std::size_t j = 0; j < hidden_; ++j) {
        d_pre[j] *= 1.0 - z[j] * z[j];
        d_params[hidden_bias_offset() + j] += d_pre[j];
    }
    for (std::size_t k = 0; k < inputs_; ++k) {
        const double* w = params_.data() + weight_offset(k);
        for (std::size_t j = 0; j < hidden_; ++j) {
            for (std::size_t i = 0; i < in_dim_; ++i) {
                d_params[weight_offset(k) + j * in_dim_ + i] += d_pre[j] * x[k][i];
                if (!d_inputs.empty()) d_inputs[k][i] += w[j * in_dim_ + i] * d_pre[j];
            }
        }
    }
}

void MultiwayNet::randomize(Rng& rng) {
    const double in_scale =
        1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(1, inputs_ * in_dim_)));
    const double out_scale = 1.0 / std::sqrt(static_cast<double>(hidden_));
    for (std::size_t i = 0; i < hidden_bias_offset(); ++i) params_[i] = normal(rng, 0.0, in_scale);
    for (std::size_t j = 0; j < hidden_; ++j) {
        params_[hidden_bias_offset() + j] = inputs_ == 0 ? normal(rng, 0.0, 1.0) : 0.0;
    }
    for (std::size_t i = output_weight_offset(); i < output_bias_offset(); ++i) {
        params_[i] = normal(rng, 0.0, out_scale);
    }
    for (std::size_t m = 0; m < out_dim_; ++m) params_[output_bias_offset() + m] = 0.0;
}

// ---------------------------------------------------------------------------
// Free scoring functions

double score_parafac(std::span<const double> a_s, std::span<const double> a_p,
                     std::span<const double> a_o) {
    require_len(a_p, a_s.size(), "PARAFAC predicate factor");
    require_len(a_o, a_s.size(), "PARAFAC object factor");
    double s = 0.0;
    for (std::size_t r = 0; r < a_s.size(); ++r) s += a_s[r] * a_p[r] * a_o[r];
    return s;
}

double score_tucker(const CoreTensor& core, Inputs factors) {
    require_arity(factors, core.arity());
    for (const auto& f : factors) require_len(f, core.dim(), "Tucker factor");
    return tucker_pass(core, factors, 0.0, {}, {});
}

double score_rescal(const RescalCore& core, std::span<const double> a_s, std::size_t p,
                    std::span<const double> a_o) {
    if (p >= core.predicates()) throw UnknownIdError("unknown predicate index " + std::to_string(p));
    require_len(a_s, core.dim(), "RESCAL subject factor");
    require_len(a_o, core.dim(), "RESCAL object factor");
    double s = 0.0;
    for (std::size_t r1 = 0; r1 < core.dim(); ++r1) {
        for (std::size_t r2 = 0; r2 < core.dim(); ++r2) {
            s += a_s[r1] * a_o[r2] * core.effective(r1, r2, p);
        }
    }
    return s;
}

double score_multiway(const MultiwayNet& net, Inputs inputs) {
    if (net.out_dim() != 1) throw UnsupportedError("score_multiway needs a scalar output head");
    return net.forward(inputs)[0];
}

// ---------------------------------------------------------------------------
// PARAFAC

std::unique_ptr<ScoringModel> ParafacModel::clone() const {
    return std::make_unique<ParafacModel>(*this);
}

double ParafacModel::score(Inputs inputs) const {
    require_arity(inputs, arity_);
    for (const auto& f : inputs) require_len(f, dim_, "PARAFAC factor");
    double s = 0.0;
    for (std::size_t r = 0; r < dim_; ++r) {
        double prod = 1.0;
        for (const auto& f : inputs) prod *= f[r];
        s += prod;
    }
    return s;
}

Vector ParafacModel::slot_representation(std::size_t slot, Inputs inputs) const {
    require_arity(inputs, arity_);
    require_slot(slot, arity_);
    Vector h(dim_, 1.0);
    for (std::size_t j = 0; j < arity_; ++j) {
        if (j == slot) continue;
        require_len(inputs[j], dim_, "PARAFAC factor");
        for (std::size_t r = 0; r < dim_; ++r) h[r] *= inputs[j][r];
    }
    return h;
}

double ParafacModel::backward(Inputs inputs, double upstream, std::span<Vector> input_grads,
                              std::span<double>) const {
    const double s = score(inputs);
    for (std::size_t j = 0; j < arity_; ++j) {
        const Vector h = slot_representation(j, inputs);
        for (std::size_t r = 0; r < dim_; ++r) input_grads[j][r] += upstream * h[r];
    }
    return s;
}

void ParafacModel::save(std::ostream& os) const {
    write_u64(os, arity_);
    write_u64(os, dim_);
}

void ParafacModel::load(std::istream& is) { check_header(is, {arity_, dim_}, "PARAFAC"); }

// ---------------------------------------------------------------------------
// Tucker

std::unique_ptr<ScoringModel> TuckerModel::clone() const {
    return std::make_unique<TuckerModel>(*this);
}

double TuckerModel::score(Inputs inputs) const { return score_tucker(core_, inputs); }

Vector TuckerModel::slot_representation(std::size_t slot, Inputs inputs) const {
    const std::size_t k = core_.arity();
    require_arity(inputs, k);
    require_slot(slot, k);
    // Substitute ones for the predicted slot and read its gradient.
    std::vector<Vector> f(inputs.begin(), inputs.end());
    f[slot].assign(core_.dim(), 1.0);
    for (const auto& v : f) require_len(v, core_.dim(), "Tucker factor");
    std::vector<Vector> grads(k);
    for (auto& g : grads) g.assign(core_.dim(), 0.0);
    tucker_pass(core_, f, 1.0, grads, {});
    return grads[slot];
}

double TuckerModel::backward(Inputs inputs, double upstream, std::span<Vector> input_grads,
                             std::span<double> param_grads) const {
    require_arity(inputs, core_.arity());
    for (const auto& f : inputs) require_len(f, core_.dim(), "Tucker factor");
    require_len(param_grads, core_.size(), "Tucker core gradient");
    return tucker_pass(core_, inputs, upstream, input_grads, param_grads);
}

void TuckerModel::randomize(Rng& rng) {
    // Nonnegative cores start near exp(0) = 1 so that every entry contributes.
    const double stddev = core_.nonneg_mode() ? 0.1 : 1.0;
    for (auto& g : core_.stored()) g = normal(rng, 0.0, stddev);
}

void TuckerModel::save(std::ostream& os) const {
    write_u64(os, core_.arity());
    write_u64(os, core_.dim());
    write_f64s(os, core_.stored());
}

void TuckerModel::load(std::istream& is) {
    check_header(is, {core_.arity(), core_.dim()}, "Tucker core");
    const Vector v = read_f64s(is, core_.size());
    std::copy(v.begin(), v.end(), core_.stored().begin());
}

// ---------------------------------------------------------------------------
// RESCAL

std::unique_ptr<ScoringModel> RescalModel::clone() const {
    return std::make_unique<RescalModel>(*this);
}

double RescalModel::score(Inputs inputs) const {
    require_arity(inputs, 3);
    const std::size_t r = core_.dim();
    require_len(inputs[0], r, "RESCAL subject factor");
    require_len(inputs[1], core_.predicates(), "RESCAL predicate indicator");
    require_len(inputs[2], r, "RESCAL object factor");
    double s = 0.0;
    for (std::size_t p = 0; p < core_.predicates(); ++p) {
        const double w = inputs[1][p];
        if (w == 0.0) continue;
        for (std::size_t r1 = 0; r1 < r; ++r1) {
            for (std::size_t r2 = 0; r2 < r; ++r2) {
                s += w * inputs[0][r1] * inputs[2][r2] * core_.effective(r1, r2, p);
            }
        }
    }
    return s;
}

Vector RescalModel::slot_representation(std::size_t slot, Inputs inputs) const {
    require_arity(inputs, 3);
    require_slot(slot, 3);
    const std::size_t r = core_.dim();
    const std::size_t P = core_.predicates();
    if (slot != 0) require_len(inputs[0], r, "RESCAL subject factor");
    if (slot != 1) require_len(inputs[1], P, "RESCAL predicate indicator");
    if (slot != 2) require_len(inputs[2], r, "RESCAL object factor");
    if (slot == 1) {
        Vector h(P, 0.0);
        for (std::size_t p = 0; p < P; ++p) {
            for (std::size_t r1 = 0; r1 < r; ++r1) {
                for (std::size_t r2 = 0; r2 < r; ++r2) {
                    h[p] += inputs[0][r1] * inputs[2][r2] * core_.effective(r1, r2, p);
                }
            }
        }
        return h;
    }
    Vector h(r, 0.0);
    for (std::size_t p = 0; p < P; ++p) {
        const double w = inputs[1][p];
        if (w == 0.0) continue;
        for (std::size_t r1 = 0; r1 < r; ++r1) {
            for (std::size_t r2 = 0; r2 < r; ++r2) {
                const double g = w * core_.effective(r1, r2, p);
                if (slot == 0) {
                    h[r1] += g * inputs[2][r2];
                } else {
                    h[r2] += g * inputs[0][r1];
                }
            }
        }
    }
    return h;
}

double RescalModel::backward(Inputs inputs, double upstream, std::span<Vector> input_grads,
                             std::span<double> param_grads) const {
    const double s = score(inputs);
    require_len(param_grads, core_.stored().size(), "RESCAL core gradient");
    for (std::size_t slot = 0; slot < 3; ++slot) {
        const Vector h = slot_representation(slot, inputs);
        for (std::size_t i = 0; i < h.size(); ++i) input_grads[slot][i] += upstream * h[i];
    }
    const std::size_t r = core_.dim();
    std::size_t flat = 0;
    for (std::size_t p = 0; p < core_.predicates(); ++p) {
        const double w = inputs[1][p];
        for (std::size_t r1 = 0; r1 < r; ++r1) {
            for (std::size_t r2 = 0; r2 < r; ++r2, ++flat) {
                if (w == 0.0) continue;
                const double dg = core_.nonneg_mode() ? core_.effective(r1, r2, p) : 1.0;
                param_grads[flat] += upstream * w * inputs[0][r1] * inputs[2][r2] * dg;
            }
        }
    }
    return s;
}

void RescalModel::randomize(Rng& rng) {
    const double stddev = core_.nonneg_mode() ? 0.1 : 1.0;
    for (auto& g : core_.stored()) g = normal(rng, 0.0, stddev);
}

void RescalModel::save(std::ostream& os) const {
    write_u64(os, core_.dim());
    write_u64(os, core_.dim());
    write_u64(os, core_.predicates());
    write_f64s(os, core_.stored());
}

void RescalModel::load(std::istream& is) {
    check_header(is, {core_.dim(), core_.dim(), core_.predicates()}, "RESCAL core");
    const Vector v = read_f64s(is, core_.stored().size());
    std::copy(v.begin(), v.end(), core_.stored().begin());
}

// ---------------------------------------------------------------------------
// Multiway

MultiwayModel::MultiwayModel(MultiwayNet net, std::optional<std::size_t> target_slot)
    : net_(std::move(net)), target_(target_slot) {
    if (target_) {
        if (*target_ > net_.inputs()) throw DimensionError("target slot out of range");
        if (net_.out_dim() != net_.in_dim()) {
            throw DimensionError("representation head must output a latent vector");
        }
    } else if (net_.out_dim() != 1) {
        throw DimensionError("scoring head must output a single value");
    }
}

std::unique_ptr<ScoringModel> MultiwayModel::clone() const {
    return std::make_unique<MultiwayModel>(*this);
}

std::vector<Vector> MultiwayModel::net_inputs(Inputs inputs) const {
    require_arity(inputs, arity());
    std::vector<Vector> x;
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        if (target_ && j == *target_) continue;
        x.push_back(inputs[j]);
    }
    return x;
}

double MultiwayModel::score(Inputs inputs) const {
    const auto x = net_inputs(inputs);
    const Vector out = net_.forward(x);
    if (!target_) return out[0];
    require_len(inputs[*target_], net_.in_dim(), "multiway target input");
    return dot(inputs[*target_], out);
}

Vector MultiwayModel::slot_representation(std::size_t slot, Inputs inputs) const {
    require_slot(slot, arity());
    if (!target_ || slot != *target_) {
        throw UnsupportedError("multiway network has no representation head for slot " +
                               std::to_string(slot));
    }
    return net_.forward(net_inputs(inputs));
}

double MultiwayModel::backward(Inputs inputs, double upstream, std::span<Vector> input_grads,
                               std::span<double> param_grads) const {
    const auto x = net_inputs(inputs);
    std::vector<Vector> dx(x.size(), Vector(net_.in_dim(), 0.0));
    Vector out = net_.forward(x);
    Vector d_out;
    double s;
    if (target_) {
        require_len(inputs[*target_], net_.in_dim(), "multiway target input");
        s = dot(inputs[*target_], out);
        d_out.resize(out.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            d_out[i] = upstream * inputs[*target_][i];
            input_grads[*target_][i] += upstream * out[i];
        }
    } else {
        s = out[0];
        d_out = {upstream};
    }
    net_.backward(x, d_out, dx, param_grads);
    std::size_t k = 0;
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        if (target_ && j == *target_) continue;
        for (std::size_t i = 0; i < dx[k].size(); ++i) input_grads[j][i] += dx[k][i];
        ++k;
    }
    return s;
}

void MultiwayModel::save(std::ostream& os) const {
    write_u64(os, net_.inputs());
    write_u64(os, net_.in_dim());
    write_u64(os, net_.hidden());
    write_u64(os, net_.out_dim());
    write_u64(os, target_ ? *target_ + 1 : 0);
    write_f64s(os, net_.parameters());
}

void MultiwayModel::load(std::istream& is) {
    check_header(is,
                 {net_.inputs(), net_.in_dim(), net_.hidden(), net_.out_dim(),
                  target_ ? *target_ + 1 : 0},
                 "multiway");
    const Vector v = read_f64s(is, net_.parameters().size());
    std::copy(v.begin(), v.end(), net_.parameters().begin());
}

// ---------------------------------------------------------------------------

namespace {
Vector three_slot_representation(const ScoringModel& model, std::size_t slot,
                                 std::span<const double> x, std::span<const double> y) {
    if (model.arity() != 3) throw UnsupportedError("representation forms need a 3-way model");
    std::vector<Vector> in(3);
    std::size_t k = 0;
    for (std::size_t j = 0; j < 3; ++j) {
        if (j == slot) continue;
        const auto src = k++ == 0 ? x : y;
        in[j].assign(src.begin(), src.end());
    }
    return model.slot_representation(slot, in);
}
}  // namespace

Vector subject_representation(const ScoringModel& model, std::span<const double> a_p,
                              std::span<const double> a_o) {
    return three_slot_representation(model, 0, a_p, a_o);
}

Vector predicate_representation(const ScoringModel& model, std::span<const double> a_s,
                                std::span<const double> a_o) {
    return three_slot_representation(model, 1, a_s, a_o);
}

Vector object_representation(const ScoringModel& model, std::span<const double> a_s,
                             std::span<const double> a_p) {
    return three_slot_representation(model, 2, a_s, a_p);
}

std::unique_ptr<ScoringModel> make_model(const ModelSpec& spec) {
    switch (spec.family) {
        case ModelFamily::Parafac:
            return std::make_unique<ParafacModel>(spec.arity, spec.dim);
        case ModelFamily::Tucker:
            if (spec.arity == 4 && spec.dim > kMaxTucker4Dim) {
                throw UsageError("4-way Tucker cores are limited to dimension " +
                                 std::to_string(kMaxTucker4Dim));
            }
            return std::make_unique<TuckerModel>(CoreTensor(spec.arity, spec.dim, spec.nonneg_mode));
        case ModelFamily::Rescal:
            if (spec.arity != 3) throw UsageError("RESCAL is a 3-way model");
            return std::make_unique<RescalModel>(
                RescalCore(spec.dim, spec.predicates, spec.nonneg_mode));
        case ModelFamily::Multiway:
            return std::make_unique<MultiwayModel>(
                MultiwayNet(spec.arity, spec.dim, spec.hidden, 1), std::nullopt);
    }
    throw UsageError("unknown model family");
}

// ---------------------------------------------------------------------------
// Memory

Memory::Memory(std::vector<EntityKind> slots, std::unique_ptr<ScoringModel> model)
    : slots_(std::move(slots)), model_(std::move(model)) {
    if (!model_) throw DataError("memory needs a scoring model");
    if (model_->arity() != slots_.size()) {
        throw DimensionError("model arity " + std::to_string(model_->arity()) + " vs " +
                             std::to_string(slots_.size()) + " slots");
    }
}

Memory::Memory(const Memory& other) : slots_(other.slots_), model_(other.model_->clone()) {}

Memory& Memory::operator=(const Memory& other) {
    if (this != &other) {
        slots_ = other.slots_;
        model_ = other.model_->clone();
    }
    return *this;
}

void Memory::sync(const Registry& registry) {
    if (auto* rescal = dynamic_cast<RescalModel*>(model_.get())) {
        const auto P = registry.count(slots_.at(1));
        if (P != rescal->core().predicates()) rescal->core().resize_predicates(P);
    }
}

void Memory::check_ids(const Registry& registry, std::span<const EntityId> ids) const {
    if (ids.size() != slots_.size()) {
        throw DimensionError("expected " + std::to_string(slots_.size()) + " ids, got " +
                             std::to_string(ids.size()));
    }
    for (std::size_t j = 0; j < ids.size(); ++j) registry.require_kind(ids[j], slots_[j]);
}

Vector Memory::input(const Registry& registry, std::size_t slot, EntityId id) const {
    registry.require_kind(id, slots_.at(slot));
    if (model_->indicator_slot(slot)) {
        Vector v(registry.count(slots_[slot]), 0.0);
        v[registry.ordinal(id)] = 1.0;
        return v;
    }
    return registry.embedding(id);
}

Vector Memory::summed_input(const Registry& registry, std::size_t slot,
                            std::span<const EntityId> ids) const {
    const std::size_t n =
        model_->indicator_slot(slot) ? registry.count(slots_.at(slot)) : registry.dim();
    Vector sum(n, 0.0);
    for (auto id : ids) {
        const Vector v = input(registry, slot, id);
        for (std::size_t i = 0; i < n; ++i) sum[i] += v[i];
    }
    return sum;
}

std::vector<Vector> Memory::inputs(const Registry& registry, std::span<const EntityId> ids) const {
    check_ids(registry, ids);
    std::vector<Vector> in;
    in.reserve(ids.size());
    for (std::size_t j = 0; j < ids.size(); ++j) in.push_back(input(registry, j, ids[j]));
    return in;
}

double Memory::score(const Registry& registry, std::span<const EntityId> ids) const {
    return model_->score(inputs(registry, ids));
}

void Memory::scatter_input_gradient(const Registry& registry, std::size_t slot, EntityId id,
                                    std::span<const double> d_input,
                                    std::span<double> embedding_grad) const {
    if (model_->indicator_slot(slot)) return;
    registry.backprop_row(id, d_input, embedding_grad);
}

double Memory::backward(const Registry& registry, std::span<const EntityId> ids, double upstream,
                        std::span<double> embedding_grad, std::span<double> param_grad) const {
    const auto in = inputs(registry, ids);
    std::vector<Vector> grads(in.size());
    for (std::size_t j = 0; j < in.size(); ++j) grads[j].assign(in[j].size(), 0.0);
    const double s = model_->backward(in, upstream, grads, param_grad);
    for (std::size_t j = 0; j < ids.size(); ++j) {
        scatter_input_gradient(registry, j, ids[j], grads[j], embedding_grad);
    }
    return s;
}

}  // namespace tensormem
