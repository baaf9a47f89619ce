#pragma once
// Prediction of the next latent time representation.
//
// ArxPredictor maps the last W time embeddings plus the individual's
// embedding to h_hat; RnnPredictor folds the current sensory buffer into a
// recurrent latent state.

#include <optional>
#include <span>

#include "tensormem/common.hpp"

namespace tensormem {

class ArxPredictor {
public:
    ArxPredictor(std::size_t dim, std::size_t window, bool linear = true);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t window() const noexcept { return window_; }
    bool linear() const noexcept { return linear_; }

    // Row-major r x r matrix applied to a_{t-lag}, lag in [1, W].
    std::span<double> lag_matrix(std::size_t lag);
    std::span<const double> lag_matrix(std::size_t lag) const;
    std::span<double> individual_matrix();
    std::span<double> bias();

    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }

    // history is ordered oldest to newest; only the last W entries are used.
    Vector predict(std::span<const Vector> history, std::span<const double> individual) const;

    // Accumulates d_out back into the last W history entries (d_history has
    // W entries, oldest first), the individual embedding and the parameters.
    void backward(std::span<const Vector> history, std::span<const double> individual,
                  std::span<const double> d_out, std::span<Vector> d_history,
                  std::span<double> d_individual, std::span<double> d_params) const;

    void randomize(Rng& rng, double stddev);

private:
    Vector affine(std::span<const Vector> history, std::span<const double> individual) const;
    std::size_t lag_offset(std::size_t lag) const;

    std::size_t dim_;
    std::size_t window_;
    bool linear_;
    Vector params_;  // [W lag matrices][individual matrix][bias]
};

class RnnPredictor {
public:
    RnnPredictor(std::size_t dim, std::size_t input_dim);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t input_dim() const noexcept { return input_dim_; }

    std::span<double> input_matrix();
    std::span<double> recurrent_matrix();
    std::span<double> individual_matrix();
    std::span<double> bias();

    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }

    // h_t = tanh(W_in u + W_rec h_{t-1} + W_ind a_ind + b)
    Vector step(std::span<const double> buffer, std::span<const double> prev,
                std::span<const double> individual) const;

    void backward(std::span<const double> buffer, std::span<const double> prev,
                  std::span<const double> individual, std::span<const double> d_out,
                  std::span<double> d_prev, std::span<double> d_individual,
                  std::span<double> d_params) const;

    void randomize(Rng& rng, double stddev);

private:
    Vector pre_activation(std::span<const double> buffer, std::span<const double> prev,
                          std::span<const double> individual) const;

    std::size_t dim_;
    std::size_t input_dim_;
    Vector params_;  // [input r x D][recurrent r x r][individual r x r][bias r]
};

// Sensory evidence, once available, replaces the prediction.
inline const Vector& arx_override(const std::optional<Vector>& encoded, const Vector& predicted) {
    return encoded ? *encoded : predicted;
}

}  // namespace tensormem
