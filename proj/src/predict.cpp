#include "tensormem/predict.hpp"

#include <cmath>
#include <string>

#include "tensormem/errors.hpp"

namespace tensormem {

namespace {

void check_len(std::span<const double> v, std::size_t n, const char* what) {
    if (v.size() != n) {
        throw DimensionError(std::string(what) + ": length " + std::to_string(v.size()) +
                             ", expected " + std::to_string(n));
    }
}

// y += M x for a row-major n x m matrix.
void gemv_acc(std::span<const double> m, std::span<const double> x, std::span<double> y) {
    const std::size_t cols = x.size();
    for (std::size_t i = 0; i < y.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += m[i * cols + j] * x[j];
        y[i] += s;
    }
}

// d_m += d_y x^T and d_x += M^T d_y.
void gemv_back(std::span<const double> m, std::span<const double> x, std::span<const double> d_y,
               std::span<double> d_m, std::span<double> d_x) {
    const std::size_t cols = x.size();
    for (std::size_t i = 0; i < d_y.size(); ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            d_m[i * cols + j] += d_y[i] * x[j];
            if (!d_x.empty()) d_x[j] += m[i * cols + j] * d_y[i];
        }
    }
}

}  // namespace

ArxPredictor::ArxPredictor(std::size_t dim, std::size_t window, bool linear)
    : dim_(dim), window_(window), linear_(linear),
      params_((window + 1) * dim * dim + dim, 0.0) {
    if (window == 0) throw DimensionError("ARX window must be at least 1");
    if (dim == 0) throw DimensionError("latent dimension must be at least 1");
}

std::size_t ArxPredictor::lag_offset(std::size_t lag) const {
    if (lag < 1 || lag > window_) throw DimensionError("lag " + std::to_string(lag) + " out of range");
    return (lag - 1) * dim_ * dim_;
}

std::span<double> ArxPredictor::lag_matrix(std::size_t lag) {
    return std::span<double>(params_).subspan(lag_offset(lag), dim_ * dim_);
}

std::span<const double> ArxPredictor::lag_matrix(std::size_t lag) const {
    return std::span<const double>(params_).subspan(lag_offset(lag), dim_ * dim_);
}

std::span<double> ArxPredictor::individual_matrix() {
    return std::span<double>(params_).subspan(window_ * dim_ * dim_, dim_ * dim_);
}

std::span<double> ArxPredictor::bias() {
    return std::span<double>(params_).subspan((window_ + 1) * dim_ * dim_, dim_);
}

Vector ArxPredictor::affine(std::span<const Vector> history,
                            std::span<const double> individual) const {
    if (history.size() < window_) {
        throw DataError("ARX prediction needs " + std::to_string(window_) +
                        " past time representations, got " + std::to_string(history.size()));
    }
    check_len(individual, dim_, "individual embedding");
    const std::span<const double> p(params_);
    Vector out(p.begin() + (window_ + 1) * dim_ * dim_, p.end());
    for (std::size_t lag = 1; lag <= window_; ++lag) {
        const auto& a = history[history.size() - lag];
        check_len(a, dim_, "history entry");
        gemv_acc(lag_matrix(lag), a, out);
    }
    gemv_acc(p.subspan(window_ * dim_ * dim_, dim_ * dim_), individual, out);
    return out;
}

Vector ArxPredictor::predict(std::span<const Vector> history,
                             std::span<const double> individual) const {
    Vector out = affine(history, individual);
    if (!linear_) {
        for (auto& x : out) x = std::tanh(x);
    }
    return out;
}

void ArxPredictor::backward(std::span<const Vector> history, std::span<const double> individual,
                            std::span<const double> d_out, std::span<Vector> d_history,
                            std::span<double> d_individual, std::span<double> d_params) const {
    check_len(d_out, dim_, "ARX output gradient");
    check_len(d_params, params_.size(), "ARX parameter gradient");
    Vector d_pre(d_out.begin(), d_out.end());
    if (!linear_) {
        const Vector y = predict(history, individual);
        for (std::size_t i = 0; i < dim_; ++i) d_pre[i] *= 1.0 - y[i] * y[i];
    } else if (history.size() < window_) {
        throw DataError("ARX prediction needs " + std::to_string(window_) + " past time representations");
    }
    const std::span<const double> p(params_);
    for (std::size_t lag = 1; lag <= window_; ++lag) {
        const auto& a = history[history.size() - lag];
        std::span<double> dx;
        if (!d_history.empty()) dx = d_history[window_ - lag];
        gemv_back(lag_matrix(lag), a, d_pre, d_params.subspan(lag_offset(lag), dim_ * dim_), dx);
    }
    gemv_back(p.subspan(window_ * dim_ * dim_, dim_ * dim_), individual, d_pre,
              d_params.subspan(window_ * dim_ * dim_, dim_ * dim_), d_individual);
    auto d_bias = d_params.subspan((window_ + 1) * dim_ * dim_, dim_);
    for (std::size_t i = 0; i < dim_; ++i) d_bias[i] += d_pre[i];
}

void ArxPredictor::randomize(Rng& rng, double stddev) {
    for (auto& w : params_) w = normal(rng, 0.0, stddev);
}

// ---------------------------------------------------------------------------

RnnPredictor::RnnPredictor(std::size_t dim, std::size_t input_dim)
    : dim_(dim), input_dim_(input_dim), params_(dim * input_dim + 2 * dim * dim + dim, 0.0) {
    if (dim == 0) throw DimensionError("latent dimension must be at least 1");
}

std::span<double> RnnPredictor::input_matrix() {
    return std::span<double>(params_).subspan(0, dim_ * input_dim_);
}

std::span<double> RnnPredictor::recurrent_matrix() {
    return std::span<double>(params_).subspan(dim_ * input_dim_, dim_ * dim_);
}

std::span<double> RnnPredictor::individual_matrix() {
    return std::span<double>(params_).subspan(dim_ * input_dim_ + dim_ * dim_, dim_ * dim_);
}

std::span<double> RnnPredictor::bias() {
    return std::span<double>(params_).subspan(dim_ * input_dim_ + 2 * dim_ * dim_, dim_);
}

Vector RnnPredictor::pre_activation(std::span<const double> buffer, std::span<const double> prev,
                                    std::span<const double> individual) const {
    check_len(buffer, input_dim_, "RNN input buffer");
    check_len(prev, dim_, "RNN previous state");
    check_len(individual, dim_, "individual embedding");
    const std::span<const double> p(params_);
    const std::size_t rec = dim_ * input_dim_;
    const std::size_t ind = rec + dim_ * dim_;
    const std::size_t b = ind + dim_ * dim_;
    Vector out(p.begin() + b, p.end());
    gemv_acc(p.subspan(0, rec), buffer, out);
    gemv_acc(p.subspan(rec, dim_ * dim_), prev, out);
    gemv_acc(p.subspan(ind, dim_ * dim_), individual, out);
    return out;
}

Vector RnnPredictor::step(std::span<const double> buffer, std::span<const double> prev,
                          std::span<const double> individual) const {
    Vector out = pre_activation(buffer, prev, individual);
    for (auto& x : out) x = std::tanh(x);
    return out;
}

void RnnPredictor::backward(std::span<const double> buffer, std::span<const double> prev,
                            std::span<const double> individual, std::span<const double> d_out,
                            std::span<double> d_prev, std::span<double> d_individual,
                            std::span<double> d_params) const {
    check_len(d_out, dim_, "RNN output gradient");
    check_len(d_params, params_.size(), "RNN parameter gradient");
    const Vector y = step(buffer, prev, individual);
    Vector d_pre(dim_);
    for (std::size_t i = 0; i < dim_; ++i) d_pre[i] = d_out[i] * (1.0 - y[i] * y[i]);
    const std::span<const double> p(params_);
    const std::size_t rec = dim_ * input_dim_;
    const std::size_t ind = rec + dim_ * dim_;
    const std::size_t b = ind + dim_ * dim_;
    gemv_back(p.subspan(0, rec), buffer, d_pre, d_params.subspan(0, rec), {});
    gemv_back(p.subspan(rec, dim_ * dim_), prev, d_pre, d_params.subspan(rec, dim_ * dim_), d_prev);
    gemv_back(p.subspan(ind, dim_ * dim_), individual, d_pre, d_params.subspan(ind, dim_ * dim_),
              d_individual);
    for (std::size_t i = 0; i < dim_; ++i) d_params[b + i] += d_pre[i];
}

void RnnPredictor::randomize(Rng& rng, double stddev) {
    for (auto& w : params_) w = normal(rng, 0.0, stddev);
}

}  // namespace tensormem
