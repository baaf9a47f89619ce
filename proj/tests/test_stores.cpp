#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "tensormem/errors.hpp"
#include "tensormem/stores.hpp"

using namespace tensormem;

TEST_SUITE("likelihoods") {
    TEST_CASE("bernoulli nll reference values") {
        CHECK(bernoulli_nll(1, 0.0) == doctest::Approx(0.693147).epsilon(1e-6));
        CHECK(bernoulli_nll(1, 50.0) < 1e-10);
        CHECK(bernoulli_nll(0, 3.0) == doctest::Approx(std::log1p(std::exp(3.0))).epsilon(1e-14));
        CHECK(bernoulli_nll(0, 3.0) == doctest::Approx(3.048587).epsilon(1e-6));
    }

    TEST_CASE("bernoulli nll is finite at extreme scores") {
        CHECK(bernoulli_nll(1, -1e4) == doctest::Approx(1e4));
        CHECK(bernoulli_nll(0, 1e4) == doctest::Approx(1e4));
        CHECK(std::isfinite(bernoulli_nll_grad(1, -1e4)));
    }

    TEST_CASE("gaussian nll reference values") {
        CHECK(gaussian_nll(0.3, 0.3, 1.0) == 0.0);
        CHECK(gaussian_nll(1.0, 0.0, 1.0) == 0.5);
        CHECK(gaussian_nll(2.0, -1.0, 0.5) == doctest::Approx(9.0).epsilon(1e-15));
        CHECK_THROWS_AS(gaussian_nll(1.0, 0.0, 0.0), DataError);
        CHECK_THROWS_AS(gaussian_nll(1.0, 0.0, -1.0), DataError);
    }

    TEST_CASE("property: the two bernoulli branches sum to at least 2 log 2") {
        Rng rng(1);
        for (int i = 0; i < 1000; ++i) {
            const double t = normal(rng, 0.0, 5.0);
            CHECK(bernoulli_nll(1, t) + bernoulli_nll(0, t) >= 2.0 * std::log(2.0) - 1e-15);
        }
        CHECK(bernoulli_nll(1, 0.0) + bernoulli_nll(0, 0.0) == doctest::Approx(2.0 * std::log(2.0)));
    }

    TEST_CASE("property: bernoulli nll is monotone in the score") {
        Rng rng(2);
        for (int i = 0; i < 1000; ++i) {
            const double a = normal(rng, 0.0, 5.0), b = a + std::abs(normal(rng, 0.0, 1.0)) + 1e-3;
            CHECK(bernoulli_nll(1, b) < bernoulli_nll(1, a));
            CHECK(bernoulli_nll(0, b) > bernoulli_nll(0, a));
        }
    }

    TEST_CASE("nll slopes match central differences") {
        Rng rng(3);
        for (int i = 0; i < 200; ++i) {
            const double t = normal(rng, 0.0, 3.0), h = 1e-5;
            for (double x : {0.0, 1.0}) {
                const double fd = (bernoulli_nll(x, t + h) - bernoulli_nll(x, t - h)) / (2 * h);
                CHECK(bernoulli_nll_grad(x, t) == doctest::Approx(fd).epsilon(1e-6));
            }
            const double v = normal(rng, 0.0, 2.0);
            const double fd = (gaussian_nll(v, t + h, 0.7) - gaussian_nll(v, t - h, 0.7)) / (2 * h);
            CHECK(gaussian_nll_grad(v, t, 0.7) == doctest::Approx(fd).epsilon(1e-6));
        }
    }

    TEST_CASE("names parse") {
        CHECK(parse_likelihood("bernoulli") == Likelihood::Bernoulli);
        CHECK(parse_likelihood("gaussian") == Likelihood::Gaussian);
        CHECK_THROWS_AS(parse_likelihood("poisson"), UsageError);
    }
}

TEST_SUITE("stores") {
    TEST_CASE("insert then lookup, and absent keys") {
        auto w = fixture::make_world(3, 2, 2, 2, false, 1);
        TripleStore ts;
        CHECK_FALSE(ts.insert(w.registry, {w.entities[0], w.predicates[0], w.entities[1], 1.0}));
        CHECK(ts.lookup(w.entities[0], w.predicates[0], w.entities[1]) == 1.0);
        CHECK(ts.lookup(w.entities[1], w.predicates[0], w.entities[0]) == std::nullopt);
        QuadStore qs;
        qs.insert(w.registry, {w.entities[0], w.predicates[0], w.entities[1], w.times[1], 0.0});
        CHECK(qs.lookup(w.entities[0], w.predicates[0], w.entities[1], w.times[1]) == 0.0);
        CHECK_FALSE(qs.contains(w.entities[0], w.predicates[0], w.entities[1], w.times[0]));
    }

    TEST_CASE("duplicate keys replace the value") {
        auto w = fixture::make_world(2, 1, 0, 2, false, 1);
        TripleStore ts;
        ts.insert(w.registry, {w.entities[0], w.predicates[0], w.entities[1], 1.0});
        CHECK(ts.insert(w.registry, {w.entities[0], w.predicates[0], w.entities[1], 0.0}));
        CHECK(ts.size() == 1);
        CHECK(ts.lookup(w.entities[0], w.predicates[0], w.entities[1]) == 0.0);
    }

    TEST_CASE("ids of the wrong kind are rejected") {
        auto w = fixture::make_world(2, 1, 1, 2, false, 1);
        TripleStore ts;
        CHECK_THROWS_AS(ts.insert(w.registry, {w.entities[0], w.entities[1], w.entities[1], 1.0}), KindError);
        QuadStore qs;
        CHECK_THROWS_AS(qs.insert(w.registry, {w.entities[0], w.predicates[0], w.entities[1], w.entities[0], 1.0}),
                        KindError);
    }

    TEST_CASE("a predicate keeps one likelihood") {
        auto w = fixture::make_world(2, 2, 0, 2, false, 1);
        TripleStore ts;
        ts.insert(w.registry, {w.entities[0], w.predicates[0], w.entities[1], 1.0});
        CHECK_THROWS_AS(ts.insert(w.registry, {w.entities[1], w.predicates[0], w.entities[0], 0.5}), DataError);
        ts.insert(w.registry, {w.entities[0], w.predicates[1], w.entities[1], 0.5});
        CHECK(ts.likelihoods().get(w.predicates[1]) == Likelihood::Gaussian);
        ts.insert(w.registry, {w.entities[1], w.predicates[1], w.entities[1], 1.0});
        CHECK(ts.likelihoods().get(w.predicates[1]) == Likelihood::Gaussian);
    }

    TEST_CASE("a declared Gaussian predicate accepts 0/1 values") {
        auto w = fixture::make_world(2, 1, 0, 2, false, 1);
        TripleStore ts;
        ts.likelihoods().declare(w.predicates[0], Likelihood::Gaussian);
        ts.insert(w.registry, {w.entities[0], w.predicates[0], w.entities[1], 1.0});
        ts.insert(w.registry, {w.entities[1], w.predicates[0], w.entities[0], 2.5});
        CHECK(ts.likelihoods().get(w.predicates[0]) == Likelihood::Gaussian);
    }

    TEST_CASE("autobiographical slice of an empty store is empty") {
        auto w = fixture::make_world(2, 1, 1, 2, false, 1);
        QuadStore qs;
        CHECK(autobiographical_slice(w.registry, qs, w.entities[0]).empty());
    }

    TEST_CASE("autobiographical slice keeps exactly one individual's events") {
        Registry reg(2, false, 1);
        const auto jack = reg.register_entity("Jack", EntityKind::Entity);
        const auto mary = reg.register_entity("Mary", EntityKind::Entity);
        const auto doc = reg.register_entity("Doctor", EntityKind::Entity);
        const auto sees = reg.register_entity("sees", EntityKind::Predicate);
        std::vector<EntityId> t;
        for (int i = 0; i < 3; ++i) t.push_back(reg.register_entity("t" + std::to_string(i), EntityKind::Time));
        QuadStore qs;
        for (int i = 0; i < 3; ++i) qs.insert(reg, {jack, sees, doc, t[i], 1.0});
        for (int i = 0; i < 2; ++i) qs.insert(reg, {mary, sees, doc, t[i], 1.0});
        const auto slice = autobiographical_slice(reg, qs, jack);
        CHECK(slice.size() == 3);
        for (const auto& f : slice.facts()) CHECK(f.s == jack);
        CHECK(qs.size() == 5);
        CHECK_THROWS_AS(autobiographical_slice(reg, qs, 99), UnknownIdError);
    }

    TEST_CASE("property: slices partition the store") {
        auto w = fixture::make_world(6, 3, 4, 2, false, 1);
        Rng rng(4);
        QuadStore qs;
        for (int i = 0; i < 200; ++i) {
            qs.insert(w.registry, {w.entities[uniform_index(rng, 6)], w.predicates[uniform_index(rng, 3)],
                                   w.entities[uniform_index(rng, 6)], w.times[uniform_index(rng, 4)], 1.0});
        }
        std::size_t total = 0;
        for (auto s : w.entities) {
            const auto slice = autobiographical_slice(w.registry, qs, s);
            total += slice.size();
            for (const auto& f : slice.facts()) CHECK(qs.lookup(f.s, f.p, f.o, f.t) == f.value);
        }
        CHECK(total == qs.size());
    }

    TEST_CASE("sensory positions are bounded by the buffer length") {
        Registry reg(2, false, 1);
        const auto q = reg.register_entity("hr", EntityKind::Channel);
        const auto g2 = reg.register_entity("2", EntityKind::BufferPos);
        const auto g5 = reg.register_entity("5", EntityKind::BufferPos);
        const auto t = reg.register_entity("t", EntityKind::Time);
        SensoryStore ss(3);
        ss.insert(reg, {q, g2, t, 0.5});
        CHECK(ss.lookup(q, g2, t) == 0.5);
        CHECK_THROWS_AS(ss.insert(reg, {q, g5, t, 0.5}), DataError);
        CHECK(gamma_index(reg, g5) == 5);
    }
}

TEST_SUITE("tsv") {
    TEST_CASE("triples parse, skip comments and register labels") {
        Registry reg(2, false, 1);
        TripleStore ts;
        std::istringstream in("# header\nJack\tlikes\tMary\t1\n\nMary\tage\tJack\t0.25\nJack\tknows\tMary\t0\n");
        CHECK(read_triples(in, reg, ts) == 3);
        CHECK(ts.size() == 3);
        CHECK(reg.count(EntityKind::Entity) == 2);
        CHECK(reg.count(EntityKind::Predicate) == 3);
        CHECK(ts.likelihoods().get(reg.require("age", EntityKind::Predicate)) == Likelihood::Gaussian);
    }

    TEST_CASE("malformed lines report their line number") {
        Registry reg(2, false, 1);
        TripleStore ts;
        std::istringstream in("a\tp\tb\t1\na\tp\tb\n");
        try {
            read_triples(in, reg, ts);
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(e.line() == 2);
        }
        std::istringstream bad_value("a\tp\tb\tyes\n");
        CHECK_THROWS_AS(read_triples(bad_value, reg, ts), ParseError);
        QuadStore qs;
        std::istringstream short_quad("a\tp\tb\t1\n");
        CHECK_THROWS_AS(read_quads(short_quad, reg, qs), ParseError);
    }

    TEST_CASE("duplicates warn and the last value wins") {
        Registry reg(2, false, 1);
        TripleStore ts;
        IngestWarnings warn;
        std::istringstream in("a\tp\tb\t1\na\tp\tb\t0\n");
        read_triples(in, reg, ts, &warn);
        CHECK(warn.messages.size() == 1);
        CHECK(ts.facts().front().value == 0.0);
    }

    TEST_CASE("label kind conflicts between slots are errors") {
        Registry reg(2, false, 1);
        TripleStore ts;
        std::istringstream in("a\tp\tb\t1\n");
        read_triples(in, reg, ts);
        SensoryStore ss(2);
        std::istringstream s("t1\thr\t7\t0.5\n");
        CHECK_THROWS_AS(read_sensory(s, reg, ss), DataError);
    }

    TEST_CASE("stores round-trip exactly through their formats") {
        Registry reg(2, false, 1);
        Rng rng(5);
        TripleStore ts;
        QuadStore qs;
        SensoryStore ss(4);
        std::ostringstream t_src, q_src, s_src;
        for (int i = 0; i < 50; ++i) {
            const auto s = "e" + std::to_string(uniform_index(rng, 5));
            const auto o = "e" + std::to_string(uniform_index(rng, 5));
            t_src << s << "\tb" << i % 3 << '\t' << o << '\t' << uniform_index(rng, 2) << '\n';
            t_src << s << "\tg" << i % 2 << '\t' << o << '\t' << format_double(normal(rng, 0, 1)) << '\n';
            q_src << s << "\tb0\t" << o << '\t' << uniform_index(rng, 2) << "\tt" << i % 4 << '\n';
            s_src << "t" << i % 4 << "\tch" << i % 3 << '\t' << uniform_index(rng, 5) << '\t'
                  << format_double(normal(rng, 0, 1)) << '\n';
        }
        std::istringstream ti(t_src.str()), qi(q_src.str()), si(s_src.str());
        read_triples(ti, reg, ts);
        read_quads(qi, reg, qs);
        read_sensory(si, reg, ss);

        std::ostringstream t1, q1, s1;
        write_triples(t1, reg, ts);
        write_quads(q1, reg, qs);
        write_sensory(s1, reg, ss);

        Registry reg2 = reg;
        TripleStore ts2;
        QuadStore qs2;
        SensoryStore ss2(4);
        std::istringstream ti2(t1.str()), qi2(q1.str()), si2(s1.str());
        read_triples(ti2, reg2, ts2);
        read_quads(qi2, reg2, qs2);
        read_sensory(si2, reg2, ss2);
        CHECK(reg2.size() == reg.size());
        std::ostringstream t2, q2, s2;
        write_triples(t2, reg2, ts2);
        write_quads(q2, reg2, qs2);
        write_sensory(s2, reg2, ss2);
        CHECK(t1.str() == t2.str());
        CHECK(q1.str() == q2.str());
        CHECK(s1.str() == s2.str());
        CHECK(ts2.size() == ts.size());
        for (const auto& f : ts.facts()) CHECK(ts2.lookup(f.s, f.p, f.o) == f.value);
    }

    TEST_CASE("an empty triples file holds nothing") {
        Registry reg(2, false, 1);
        TripleStore ts;
        std::istringstream in("");
        CHECK(read_triples(in, reg, ts) == 0);
        CHECK(ts.empty());
        CHECK(reg.size() == 0);
    }
}
