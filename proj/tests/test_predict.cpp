#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "tensormem/errors.hpp"
#include "tensormem/predict.hpp"

using namespace tensormem;

namespace {

Vector random_vector(std::size_t n, Rng& rng, double sd = 1.0) {
    Vector v(n);
    for (auto& x : v) x = normal(rng, 0.0, sd);
    return v;
}

// y = M x for a row-major matrix.
Vector matvec(std::span<const double> m, const Vector& x) {
    Vector y(m.size() / x.size(), 0.0);
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) y[i] += m[i * x.size() + j] * x[j];
    return y;
}

Vector add(Vector a, const Vector& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

}  // namespace

TEST_SUITE("arx") {
    TEST_CASE("zero weights predict the bias") {
        ArxPredictor arx(3, 2);
        for (auto& x : arx.parameters()) x = 0.0;
        arx.bias()[0] = 1.0;
        arx.bias()[2] = -2.0;
        const std::vector<Vector> history{{1, 2, 3}, {4, 5, 6}};
        CHECK(arx.predict(history, Vector{7, 8, 9}) == Vector{1.0, 0.0, -2.0});
    }

    TEST_CASE("an identity lag-1 matrix copies the previous representation") {
        ArxPredictor arx(2, 1);
        for (auto& x : arx.parameters()) x = 0.0;
        arx.lag_matrix(1)[0] = arx.lag_matrix(1)[3] = 1.0;
        const std::vector<Vector> history{{0.5, -1.5}};
        CHECK(arx.predict(history, Vector{3, 3}) == Vector{0.5, -1.5});
    }

    TEST_CASE("a random instance matches the explicit affine map") {
        for (bool linear : {true, false}) {
            ArxPredictor arx(3, 3, linear);
            Rng rng(1);
            arx.randomize(rng, 0.5);
            std::vector<Vector> history;
            for (int i = 0; i < 4; ++i) history.push_back(random_vector(3, rng));
            const Vector ind = random_vector(3, rng);
            Vector ref(arx.bias().begin(), arx.bias().end());
            for (std::size_t lag = 1; lag <= 3; ++lag) ref = add(ref, matvec(arx.lag_matrix(lag), history[4 - lag]));
            ref = add(ref, matvec(arx.individual_matrix(), ind));
            if (!linear) for (auto& x : ref) x = std::tanh(x);
            const Vector got = arx.predict(history, ind);
            for (std::size_t i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-13));
        }
    }

    TEST_CASE("too short a history is a data error") {
        ArxPredictor arx(2, 3);
        const std::vector<Vector> history{{1, 2}, {3, 4}};
        CHECK_THROWS_AS(arx.predict(history, Vector{0, 0}), DataError);
        CHECK_THROWS_AS(ArxPredictor(2, 0), DimensionError);
    }

    TEST_CASE("property: only the last W entries matter") {
        ArxPredictor arx(2, 2);
        Rng rng(2);
        arx.randomize(rng, 0.5);
        for (int i = 0; i < 50; ++i) {
            const Vector a = random_vector(2, rng), b = random_vector(2, rng), ind = random_vector(2, rng);
            const std::vector<Vector> shortest{a, b};
            const std::vector<Vector> longer{random_vector(2, rng), random_vector(2, rng), a, b};
            CHECK(arx.predict(shortest, ind) == arx.predict(longer, ind));
        }
    }

    TEST_CASE("property: backward matches central differences") {
        for (bool linear : {true, false}) {
            ArxPredictor arx(2, 3, linear);
            Rng rng(3);
            arx.randomize(rng, 0.5);
            std::vector<Vector> history{random_vector(2, rng), random_vector(2, rng), random_vector(2, rng)};
            Vector ind = random_vector(2, rng);
            const Vector c = random_vector(2, rng);
            const auto f = [&] { return dot(c, arx.predict(history, ind)); };
            Vector d_params(arx.parameters().size(), 0.0), d_ind(2, 0.0);
            std::vector<Vector> d_hist(3, Vector(2, 0.0));
            arx.backward(history, ind, c, d_hist, d_ind, d_params);
            CHECK(oracle::gradient_check(f, arx.parameters(), d_params) < 1e-6);
            CHECK(oracle::gradient_check(f, ind, d_ind) < 1e-6);
            for (std::size_t k = 0; k < 3; ++k) CHECK(oracle::gradient_check(f, history[k], d_hist[k]) < 1e-6);
        }
    }
}

TEST_SUITE("rnn") {
    TEST_CASE("zero weights give tanh of the bias") {
        RnnPredictor rnn(2, 3);
        for (auto& x : rnn.parameters()) x = 0.0;
        rnn.bias()[0] = 0.5;
        rnn.bias()[1] = -2.0;
        const Vector h = rnn.step(Vector{1, 2, 3}, Vector{4, 5}, Vector{6, 7});
        CHECK(h[0] == doctest::Approx(std::tanh(0.5)));
        CHECK(h[1] == doctest::Approx(std::tanh(-2.0)));
    }

    TEST_CASE("zero input and recurrent matrices make the state independent of history") {
        RnnPredictor rnn(3, 2);
        Rng rng(4);
        rnn.randomize(rng, 0.7);
        for (auto& x : rnn.input_matrix()) x = 0.0;
        for (auto& x : rnn.recurrent_matrix()) x = 0.0;
        const Vector ind = random_vector(3, rng);
        const Vector a = rnn.step(random_vector(2, rng), random_vector(3, rng), ind);
        const Vector b = rnn.step(random_vector(2, rng), random_vector(3, rng), ind);
        CHECK(a == b);
    }

    TEST_CASE("a three-step unroll matches hand composition") {
        RnnPredictor rnn(2, 3);
        Rng rng(5);
        rnn.randomize(rng, 0.6);
        const Vector ind = random_vector(2, rng);
        Vector h = random_vector(2, rng), ref = h;
        for (int t = 0; t < 3; ++t) {
            const Vector u = random_vector(3, rng);
            h = rnn.step(u, h, ind);
            Vector z(rnn.bias().begin(), rnn.bias().end());
            z = add(add(add(z, matvec(rnn.input_matrix(), u)), matvec(rnn.recurrent_matrix(), ref)),
                    matvec(rnn.individual_matrix(), ind));
            for (auto& x : z) x = std::tanh(x);
            ref = z;
        }
        for (std::size_t i = 0; i < 2; ++i) CHECK(h[i] == doctest::Approx(ref[i]).epsilon(1e-13));
    }

    TEST_CASE("a mismatched buffer is a dimension error") {
        RnnPredictor rnn(2, 3);
        CHECK_THROWS_AS(rnn.step(Vector{1, 2}, Vector{0, 0}, Vector{0, 0}), DimensionError);
    }

    TEST_CASE("property: the state stays inside the open unit box") {
        RnnPredictor rnn(4, 3);
        Rng rng(6);
        rnn.randomize(rng, 0.5);
        Vector h(4, 0.0);
        const Vector ind = random_vector(4, rng);
        for (int t = 0; t < 1000; ++t) {
            h = rnn.step(random_vector(3, rng, 2.0), h, ind);
            for (double x : h) CHECK(std::abs(x) < 1.0);
        }
    }

    TEST_CASE("property: extreme weights saturate but never exceed the unit box") {
        // tanh rounds to exactly +-1 in double precision once |z| > 19
        RnnPredictor rnn(4, 3);
        Rng rng(6);
        rnn.randomize(rng, 3.0);
        Vector h(4, 0.0);
        const Vector ind = random_vector(4, rng);
        for (int t = 0; t < 1000; ++t) {
            h = rnn.step(random_vector(3, rng, 5.0), h, ind);
            for (double x : h) CHECK(std::abs(x) <= 1.0);
        }
    }

    TEST_CASE("property: backward matches central differences") {
        RnnPredictor rnn(3, 2);
        Rng rng(7);
        rnn.randomize(rng, 0.5);
        Vector u = random_vector(2, rng), prev = random_vector(3, rng), ind = random_vector(3, rng);
        const Vector c = random_vector(3, rng);
        const auto f = [&] { return dot(c, rnn.step(u, prev, ind)); };
        Vector d_params(rnn.parameters().size(), 0.0), d_prev(3, 0.0), d_ind(3, 0.0);
        rnn.backward(u, prev, ind, c, d_prev, d_ind, d_params);
        CHECK(oracle::gradient_check(f, rnn.parameters(), d_params) < 1e-6);
        CHECK(oracle::gradient_check(f, prev, d_prev) < 1e-6);
        CHECK(oracle::gradient_check(f, ind, d_ind) < 1e-6);
    }
}

TEST_SUITE("override") {
    TEST_CASE("sensory evidence replaces the prediction") {
        const Vector predicted{1, 2}, encoded{3, 4};
        CHECK(arx_override(encoded, predicted) == encoded);
        CHECK(arx_override(std::nullopt, predicted) == predicted);
        const Vector once = arx_override(encoded, predicted);
        CHECK(arx_override(once, arx_override(encoded, predicted)) == once);
    }
}
