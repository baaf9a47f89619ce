#include "tensormem/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "tensormem/errors.hpp"
#include "tensormem/predict.hpp"
#include "tensormem/query.hpp"
#include "tensormem/sensory.hpp"

namespace fs = std::filesystem;

namespace tensormem {

// ---------------------------------------------------------------------------
// Configuration

namespace {

bool parse_bool(const std::string& key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw UsageError("config key '" + key + "' expects a boolean, got '" + std::string(v) + "'");
}

double parse_real(const std::string& key, std::string_view v) {
    double x = 0.0;
    if (!parse_double(v, x)) {
        throw UsageError("config key '" + key + "' expects a number, got '" + std::string(v) + "'");
    }
    return x;
}

std::uint64_t parse_count(const std::string& key, std::string_view v) {
    std::uint64_t x = 0;
    if (!parse_uint(v, x)) {
        throw UsageError("config key '" + key + "' expects a non-negative integer, got '" +
                         std::string(v) + "'");
    }
    return x;
}

std::string_view to_string(PredictorKind k) {
    switch (k) {
        case PredictorKind::None: return "none";
        case PredictorKind::Arx: return "arx";
        case PredictorKind::Rnn: return "rnn";
    }
    return "none";
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
    const std::string value(trim(raw));
    auto& t = train;
    if (key.rfind("likelihood.", 0) == 0) {
        const std::string label = key.substr(11);
        if (label.empty()) throw UsageError("likelihood key needs a predicate label");
        likelihoods[label] = parse_likelihood(lower(value));
    } else if (key == "dim") {
        dim = parse_count(key, value);
    } else if (key == "nonneg_mode") {
        nonneg_mode = parse_bool(key, value);
    } else if (key == "semantic_model") {
        semantic_model = parse_family(lower(value));
    } else if (key == "episodic_model") {
        episodic_model = parse_family(lower(value));
    } else if (key == "sensory_model") {
        sensory_model = parse_family(lower(value));
    } else if (key == "hidden") {
        hidden = parse_count(key, value);
    } else if (key == "channels") {
        channels = parse_count(key, value);
    } else if (key == "buffer_length") {
        buffer_length = parse_count(key, value);
    } else if (key == "encoder") {
        encoder = parse_bool(key, value);
    } else if (key == "learning_rate") {
        t.learning_rate = parse_real(key, value);
    } else if (key == "epochs") {
        t.epochs = parse_count(key, value);
    } else if (key == "batch_size") {
        t.batch_size = parse_count(key, value);
    } else if (key == "lambda_a") {
        t.lambda_a = parse_real(key, value);
    } else if (key == "lambda_w") {
        t.lambda_w = parse_real(key, value);
    } else if (key == "negative_ratio") {
        t.negative_ratio = parse_count(key, value);
    } else if (key == "weight_semantic") {
        t.weights.semantic = parse_real(key, value);
    } else if (key == "weight_episodic") {
        t.weights.episodic = parse_real(key, value);
    } else if (key == "weight_sensory") {
        t.weights.sensory = parse_real(key, value);
    } else if (key == "weight_predict") {
        t.weights.predict = parse_real(key, value);
    } else if (key == "sigma2") {
        t.sigma2 = parse_real(key, value);
    } else if (key == "seed") {
        t.seed = parse_count(key, value);
    } else if (key == "workers") {
        t.workers = parse_count(key, value);
    } else if (key == "freeze_embeddings") {
        t.freeze_embeddings = parse_bool(key, value);
    } else if (key == "freeze_encoder") {
        t.freeze_encoder = parse_bool(key, value);
    } else if (key == "beta") {
        beta = parse_real(key, value);
    } else if (key == "tau") {
        tau = parse_real(key, value);
    } else if (key == "window") {
        window = parse_count(key, value);
    } else if (key == "predictor") {
        const auto v = lower(value);
        if (v == "none") predictor = PredictorKind::None;
        else if (v == "arx") predictor = PredictorKind::Arx;
        else if (v == "rnn") predictor = PredictorKind::Rnn;
        else throw UsageError("predictor must be none, arx or rnn");
    } else if (key == "predictor_linear") {
        predictor_linear = parse_bool(key, value);
    } else if (key == "individual") {
        if (value.empty()) individual.reset();
        else individual = value;
    } else {
        throw UsageError("unknown config key '" + key + "'");
    }
}

void RunConfig::validate() const {
    if (dim == 0) throw UsageError("dim must be at least 1");
    if (episodic_model == ModelFamily::Tucker && dim > kMaxTucker4Dim) {
        throw UsageError("a 4-way Tucker episodic model needs dim <= " +
                         std::to_string(kMaxTucker4Dim));
    }
    if (episodic_model == ModelFamily::Rescal) throw UsageError("RESCAL cannot back the episodic memory");
    if (sensory_model == ModelFamily::Rescal) throw UsageError("RESCAL cannot back the sensory memory");
    if (hidden == 0) throw UsageError("hidden must be at least 1");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw UsageError("beta must be finite and >= 0");
    if (!(tau >= 0.0) || !std::isfinite(tau)) throw UsageError("tau must be finite and >= 0");
    if (window == 0) throw UsageError("window must be at least 1");
    if (channels && *channels == 0) throw UsageError("channels must be at least 1");
    train.validate();
}

std::string RunConfig::to_text() const {
    std::map<std::string, std::string> kv;
    auto b = [](bool x) { return std::string(x ? "true" : "false"); };
    kv["dim"] = std::to_string(dim);
    kv["nonneg_mode"] = b(nonneg_mode);
    kv["semantic_model"] = std::string(to_string(semantic_model));
    kv["episodic_model"] = std::string(to_string(episodic_model));
    kv["sensory_model"] = std::string(to_string(sensory_model));
    kv["hidden"] = std::to_string(hidden);
    if (channels) kv["channels"] = std::to_string(*channels);
    if (buffer_length) kv["buffer_length"] = std::to_string(*buffer_length);
    kv["encoder"] = b(encoder);
    kv["learning_rate"] = format_double(train.learning_rate);
    kv["epochs"] = std::to_string(train.epochs);
    kv["batch_size"] = std::to_string(train.batch_size);
    kv["lambda_a"] = format_double(train.lambda_a);
    kv["lambda_w"] = format_double(train.lambda_w);
    kv["negative_ratio"] = std::to_string(train.negative_ratio);
    kv["weight_semantic"] = format_double(train.weights.semantic);
    kv["weight_episodic"] = format_double(train.weights.episodic);
    kv["weight_sensory"] = format_double(train.weights.sensory);
    kv["weight_predict"] = format_double(train.weights.predict);
    kv["sigma2"] = format_double(train.sigma2);
    kv["seed"] = std::to_string(train.seed);
    kv["workers"] = std::to_string(train.workers);
    kv["freeze_embeddings"] = b(train.freeze_embeddings);
    kv["freeze_encoder"] = b(train.freeze_encoder);
    kv["beta"] = format_double(beta);
    kv["tau"] = format_double(tau);
    kv["window"] = std::to_string(window);
    kv["predictor"] = std::string(to_string(predictor));
    kv["predictor_linear"] = b(predictor_linear);
    if (individual) kv["individual"] = *individual;
    for (const auto& [label, l] : likelihoods) kv["likelihood." + label] = std::string(to_string(l));
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

void apply_config_text(RunConfig& config, std::istream& in) {
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        std::string_view body = line;
        if (auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
        body = trim(body);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) {
            throw UsageError("config line " + std::to_string(number) + ": expected 'key = value'");
        }
        const std::string key(trim(body.substr(0, eq)));
        try {
            config.set(key, std::string(trim(body.substr(eq + 1))));
        } catch (const UsageError& e) {
            throw UsageError("config line " + std::to_string(number) + ": " + e.what());
        }
    }
}

void apply_config_file(RunConfig& config, const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file '" + path.string() + "'");
    apply_config_text(config, in);
}

// ---------------------------------------------------------------------------
// Snapshot state

namespace {

constexpr const char* kConfigFile = "config.txt";
constexpr const char* kRegistryTsv = "registry.tsv";
constexpr const char* kEmbeddingsBin = "embeddings.bin";
constexpr const char* kTriplesTsv = "triples.tsv";
constexpr const char* kQuadsTsv = "quads.tsv";
constexpr const char* kSensoryTsv = "sensory.tsv";
constexpr const char* kSemanticModel = "semantic.model";
constexpr const char* kEpisodicModel = "episodic.model";
constexpr const char* kSensoryModel = "sensory.model";
constexpr const char* kEncoderBin = "encoder.bin";
constexpr const char* kPredictorBin = "predictor.bin";
constexpr const char* kReportTsv = "report.tsv";

std::ifstream open_in(const fs::path& path, bool binary = false) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return in;
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
    std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    return out;
}

void check_header(std::istream& in, std::initializer_list<std::uint64_t> expected,
                  const std::string& what) {
    for (auto want : expected) {
        if (read_u64(in) != want) throw DataError(what + " does not match the configuration");
    }
}

struct Overrides {
    std::vector<std::string> config_files;
    std::vector<std::string> settings;
};

void apply_overrides(RunConfig& config, const Overrides& o) {
    for (const auto& f : o.config_files) apply_config_file(config, f);
    for (const auto& s : o.settings) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
        config.set(std::string(trim(std::string_view(s).substr(0, eq))), s.substr(eq + 1));
    }
    config.validate();
}

struct State {
    RunConfig config;
    std::optional<Registry> registry;
    TripleStore triples;
    QuadStore quads;
    std::optional<SensoryStore> sensory_store;
    std::optional<Memory> semantic;
    std::optional<Memory> episodic;
    std::optional<Memory> sensory;
    std::optional<EncoderM> encoder;
    std::optional<ArxPredictor> arx;
    std::optional<RnnPredictor> rnn;
    bool trained = false;

    std::size_t channels() const {
        return config.channels.value_or(registry->count(EntityKind::Channel));
    }
    std::size_t buffer_size() const {
        return channels() * (sensory_store->buffer_length() + 1);
    }
};

void declare_likelihoods(State& st) {
    for (const auto& [label, l] : st.config.likelihoods) {
        const EntityId p = st.registry->register_entity(label, EntityKind::Predicate);
        st.triples.likelihoods().declare(p, l);
        st.quads.likelihoods().declare(p, l);
    }
}

// Records the likelihood every predicate ended up with.
void record_likelihoods(State& st) {
    for (const auto* l : {&st.triples.likelihoods(), &st.quads.likelihoods()}) {
        for (const auto& [p, lik] : l->all()) {
            const std::string& label = st.registry->entity(p).label;
            auto [it, inserted] = st.config.likelihoods.emplace(label, lik);
            if (!inserted && it->second != lik) {
                throw DataError("predicate '" + label +
                                "' has different likelihoods in the triple and quad files");
            }
        }
    }
}

void register_buffer_positions(Registry& registry, std::size_t n) {
    for (std::size_t g = 0; g <= n; ++g) {
        registry.register_entity(std::to_string(g), EntityKind::BufferPos);
    }
}

Memory fresh_memory(const State& st, std::vector<EntityKind> slots, ModelFamily family,
                    std::string_view stream) {
    ModelSpec spec;
    spec.family = family;
    spec.arity = slots.size();
    spec.dim = st.config.dim;
    spec.nonneg_mode = st.config.nonneg_mode;
    spec.hidden = st.config.hidden;
    spec.predicates = st.registry->count(EntityKind::Predicate);
    Memory m(std::move(slots), make_model(spec));
    Rng rng = make_rng(st.config.train.seed, std::string("init.") + std::string(stream));
    m.model().randomize(rng);
    return m;
}

void load_memory(std::optional<Memory>& m, const fs::path& path) {
    if (!fs::exists(path)) return;
    auto in = open_in(path, true);
    m->model().load(in);
}

void build_components(State& st, const fs::path& dir) {
    const auto& c = st.config;
    const std::vector<EntityKind> sem{EntityKind::Entity, EntityKind::Predicate, EntityKind::Entity};
    const std::vector<EntityKind> epi{EntityKind::Entity, EntityKind::Predicate, EntityKind::Entity,
                                      EntityKind::Time};
    const std::vector<EntityKind> sen{EntityKind::Channel, EntityKind::BufferPos, EntityKind::Time};

    if (!st.triples.empty() || fs::exists(dir / kSemanticModel)) {
        st.semantic = fresh_memory(st, sem, c.semantic_model, "semantic");
        load_memory(st.semantic, dir / kSemanticModel);
    }
    if (!st.quads.empty() || fs::exists(dir / kEpisodicModel)) {
        st.episodic = fresh_memory(st, epi, c.episodic_model, "episodic");
        load_memory(st.episodic, dir / kEpisodicModel);
    }
    if (st.sensory_store && !st.sensory_store->empty()) {
        st.sensory = fresh_memory(st, sen, c.sensory_model, "sensory");
        load_memory(st.sensory, dir / kSensoryModel);
        if (c.encoder) {
            st.encoder = EncoderM::single(st.buffer_size(), c.dim, c.nonneg_mode);
            Rng rng = make_rng(c.train.seed, "init.encoder");
            st.encoder->randomize(rng, 0.1 / std::sqrt(static_cast<double>(st.buffer_size())));
            if (fs::exists(dir / kEncoderBin)) {
                auto in = open_in(dir / kEncoderBin, true);
                check_header(in, {st.encoder->input_dim(), st.encoder->output_dim(),
                                  std::uint64_t{c.nonneg_mode}},
                             "encoder file");
                const Vector v = read_f64s(in, st.encoder->parameters().size());
                std::copy(v.begin(), v.end(), st.encoder->parameters().begin());
            }
        }
    }
    const double init_sd = 0.1 / std::sqrt(static_cast<double>(c.dim));
    if (c.predictor == PredictorKind::Arx) {
        st.arx.emplace(c.dim, c.window, c.predictor_linear);
        Rng rng = make_rng(c.train.seed, "init.predictor");
        st.arx->randomize(rng, init_sd);
        if (fs::exists(dir / kPredictorBin)) {
            auto in = open_in(dir / kPredictorBin, true);
            check_header(in, {1, c.dim, c.window, std::uint64_t{c.predictor_linear}},
                         "predictor file");
            const Vector v = read_f64s(in, st.arx->parameters().size());
            std::copy(v.begin(), v.end(), st.arx->parameters().begin());
        }
    } else if (c.predictor == PredictorKind::Rnn) {
        if (!st.sensory_store || st.sensory_store->empty()) {
            throw DataError("the rnn predictor needs sensory buffers");
        }
        st.rnn.emplace(c.dim, st.buffer_size());
        Rng rng = make_rng(c.train.seed, "init.predictor");
        st.rnn->randomize(rng, init_sd);
        if (fs::exists(dir / kPredictorBin)) {
            auto in = open_in(dir / kPredictorBin, true);
            check_header(in, {2, c.dim, st.buffer_size()}, "predictor file");
            const Vector v = read_f64s(in, st.rnn->parameters().size());
            std::copy(v.begin(), v.end(), st.rnn->parameters().begin());
        }
    }
    st.trained = fs::exists(dir / kReportTsv);
}

State load_snapshot(const fs::path& dir, const Overrides& overrides) {
    if (!fs::exists(dir / kConfigFile)) {
        throw DataError("'" + dir.string() + "' is not a snapshot (no " + kConfigFile + ")");
    }
    State st;
    apply_config_file(st.config, dir / kConfigFile);
    apply_overrides(st.config, overrides);
    const auto& c = st.config;
    st.registry = Registry::load(dir / kRegistryTsv, dir / kEmbeddingsBin, c.nonneg_mode,
                                 c.train.seed);
    if (st.registry->dim() != c.dim) throw DataError("snapshot dimension differs from config dim");
    const std::size_t before = st.registry->size();
    declare_likelihoods(st);
    if (fs::exists(dir / kTriplesTsv)) {
        auto in = open_in(dir / kTriplesTsv);
        read_triples(in, *st.registry, st.triples);
    }
    if (fs::exists(dir / kQuadsTsv)) {
        auto in = open_in(dir / kQuadsTsv);
        read_quads(in, *st.registry, st.quads);
    }
    if (c.buffer_length) {
        st.sensory_store.emplace(*c.buffer_length);
        if (fs::exists(dir / kSensoryTsv)) {
            auto in = open_in(dir / kSensoryTsv);
            read_sensory(in, *st.registry, *st.sensory_store);
        }
    }
    if (st.registry->size() != before) throw DataError("snapshot stores reference unregistered labels");
    build_components(st, dir);
    return st;
}

std::optional<EntityId> individual_id(const State& st) {
    if (!st.config.individual) return std::nullopt;
    return st.registry->require(*st.config.individual, EntityKind::Entity);
}

CoupledModel coupled(State& st) {
    CoupledModel m;
    m.registry = &*st.registry;
    if (st.semantic) {
        m.semantic = &*st.semantic;
        m.triples = &st.triples;
    }
    if (st.episodic) {
        m.episodic = &*st.episodic;
        m.quads = &st.quads;
    }
    if (st.sensory) {
        m.sensory = &*st.sensory;
        m.sensory_store = &*st.sensory_store;
        m.channels = st.channels();
        if (st.encoder) m.encoder = &*st.encoder;
    }
    if (st.arx) m.arx = &*st.arx;
    if (st.rnn) m.rnn = &*st.rnn;
    m.window = st.config.window;
    m.individual = individual_id(st);
    return m;
}

void save_model(const Memory& m, const fs::path& path) {
    auto out = open_out(path, true);
    m.model().save(out);
}

void save_snapshot(const State& st, const fs::path& dir, const TrainingReport* report) {
    fs::create_directories(dir);
    {
        auto out = open_out(dir / kConfigFile);
        out << st.config.to_text();
    }
    st.registry->save(dir / kRegistryTsv, dir / kEmbeddingsBin);
    {
        auto out = open_out(dir / kTriplesTsv);
        write_triples(out, *st.registry, st.triples);
    }
    {
        auto out = open_out(dir / kQuadsTsv);
        write_quads(out, *st.registry, st.quads);
    }
    if (st.sensory_store) {
        auto out = open_out(dir / kSensoryTsv);
        write_sensory(out, *st.registry, *st.sensory_store);
    }
    if (!report) return;
    if (st.semantic) save_model(*st.semantic, dir / kSemanticModel);
    if (st.episodic) save_model(*st.episodic, dir / kEpisodicModel);
    if (st.sensory) save_model(*st.sensory, dir / kSensoryModel);
    if (st.encoder) {
        auto out = open_out(dir / kEncoderBin, true);
        write_u64(out, st.encoder->input_dim());
        write_u64(out, st.encoder->output_dim());
        write_u64(out, st.encoder->nonneg_mode());
        write_f64s(out, st.encoder->parameters());
    }
    if (st.arx) {
        auto out = open_out(dir / kPredictorBin, true);
        write_u64(out, 1);
        write_u64(out, st.arx->dim());
        write_u64(out, st.arx->window());
        write_u64(out, st.arx->linear());
        write_f64s(out, st.arx->parameters());
    } else if (st.rnn) {
        auto out = open_out(dir / kPredictorBin, true);
        write_u64(out, 2);
        write_u64(out, st.rnn->dim());
        write_u64(out, st.rnn->input_dim());
        write_f64s(out, st.rnn->parameters());
    }
    auto out = open_out(dir / kReportTsv);
    write_report(out, *report);
}

// Writes to `path` when given, else to `fallback`.
template <typename Fn>
void emit(const std::string& path, std::ostream& fallback, Fn&& fn) {
    if (path.empty()) {
        fn(fallback);
        return;
    }
    auto out = open_out(path);
    fn(out);
}

std::vector<std::string> split_pattern(const std::vector<std::string>& tokens) {
    std::vector<std::string> out;
    for (const auto& t : tokens) {
        std::istringstream ss(t);
        std::string w;
        while (ss >> w) out.push_back(w);
    }
    return out;
}

// Counts of sampled ids, most frequent first, ties by lowest id.
template <typename Key>
std::vector<std::pair<Key, std::size_t>> ranked_counts(const std::map<Key, std::size_t>& counts) {
    std::vector<std::pair<Key, std::size_t>> v(counts.begin(), counts.end());
    std::stable_sort(v.begin(), v.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return v;
}

// ---------------------------------------------------------------------------
// Commands

struct IngestArgs {
    Overrides overrides;
    std::string triples, quads, sensory, out;
};

int cmd_ingest(const IngestArgs& a, std::ostream& out, std::ostream& err) {
    State st;
    apply_overrides(st.config, a.overrides);
    const auto& c = st.config;
    st.registry.emplace(c.dim, c.nonneg_mode, c.train.seed);
    declare_likelihoods(st);
    IngestWarnings warnings;
    std::size_t n_triples = 0, n_quads = 0, n_sensory = 0;
    if (!a.triples.empty()) {
        auto in = open_in(a.triples);
        n_triples = read_triples(in, *st.registry, st.triples, &warnings);
    }
    if (!a.quads.empty()) {
        auto in = open_in(a.quads);
        n_quads = read_quads(in, *st.registry, st.quads, &warnings);
    }
    if (!a.sensory.empty()) {
        if (!c.buffer_length) throw UsageError("sensory ingestion needs buffer_length (N)");
        st.sensory_store.emplace(*c.buffer_length);
        register_buffer_positions(*st.registry, *c.buffer_length);
        auto in = open_in(a.sensory);
        n_sensory = read_sensory(in, *st.registry, *st.sensory_store, &warnings);
        if (c.channels && st.registry->count(EntityKind::Channel) > *c.channels) {
            throw DataError("sensory file has more channels than the configured " +
                            std::to_string(*c.channels));
        }
    } else if (c.buffer_length) {
        st.sensory_store.emplace(*c.buffer_length);
    }
    record_likelihoods(st);
    save_snapshot(st, a.out, nullptr);

    for (const auto& w : warnings.messages) err << "warning: " << w << '\n';
    out << "store\tlines\tfacts\n";
    out << "triples\t" << n_triples << '\t' << st.triples.size() << '\n';
    out << "quads\t" << n_quads << '\t' << st.quads.size() << '\n';
    out << "sensory\t" << n_sensory << '\t'
        << (st.sensory_store ? st.sensory_store->size() : 0) << '\n';
    out << "kind\tcount\n";
    for (auto k : kAllKinds) out << to_string(k) << '\t' << st.registry->count(k) << '\n';
    return 0;
}

struct TrainArgs {
    Overrides overrides;
    std::string snapshot, out;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    State st = load_snapshot(a.snapshot, a.overrides);
    auto model = coupled(st);
    const TrainingReport report = sgd_train(model, st.config.train);
    save_snapshot(st, a.out.empty() ? a.snapshot : a.out, &report);
    out << "initial_cost\t" << format_double(report.initial_cost) << '\n';
    if (!report.epochs.empty()) {
        out << "final_cost\t" << format_double(report.epochs.back().cost.total) << '\n';
    }
    out << "epochs\t" << report.epochs.size() << '\n';
    return 0;
}

struct QueryArgs {
    Overrides overrides;
    std::string snapshot, out;
    std::vector<std::string> pattern;
    std::string associate;
    bool exclude_self = false;
    bool exact = false;
    std::optional<double> beta;
    std::size_t n = 10;
};

// The pattern is already validated.
Distribution pattern_distribution(const QueryArgs& a, State& st, double beta) {
    const auto tokens = split_pattern(a.pattern);
    std::optional<Memory>& mem = tokens.size() == 3 ? st.semantic : st.episodic;
    if (!mem) {
        throw DataError(std::string("snapshot has no ") +
                        (tokens.size() == 3 ? "semantic" : "episodic") + " memory");
    }
    mem->sync(*st.registry);
    std::vector<SlotBinding> bindings;
    for (std::size_t j = 0; j < tokens.size(); ++j) {
        if (tokens[j] == "?") bindings.emplace_back(slot::Free{});
        else if (tokens[j] == "*") bindings.emplace_back(slot::Marginalize{});
        else bindings.emplace_back(slot::Bound{st.registry->require(tokens[j], mem->slot_kind(j))});
    }
    if (a.exact || (mem->model().multilinear() && mem->model().nonnegative())) {
        return conditional_distribution(*mem, *st.registry, bindings, beta);
    }
    return energy_conditional(*mem, *st.registry, bindings, beta);
}

int cmd_query(const QueryArgs& a, std::ostream& out) {
    if (a.associate.empty() == a.pattern.empty()) {
        throw UsageError("give either a query pattern or --associate LABEL");
    }
    if (a.exclude_self && a.associate.empty()) throw UsageError("--exclude-self needs --associate");
    if (a.associate.empty()) {
        const auto tokens = split_pattern(a.pattern);
        if (tokens.size() != 3 && tokens.size() != 4) {
            throw UsageError("a query pattern has 3 slots (s p o) or 4 slots (s p o t)");
        }
        if (std::count(tokens.begin(), tokens.end(), "?") != 1) {
            throw UsageError("a query pattern needs exactly one '?' slot");
        }
    }
    State st = load_snapshot(a.snapshot, a.overrides);
    const double beta = a.beta.value_or(st.config.beta);
    const Distribution dist =
        a.associate.empty()
            ? pattern_distribution(a, st, beta)
            : association_distribution(*st.registry, st.registry->require(a.associate, EntityKind::Entity), beta,
                                       a.exclude_self);
    const auto& reg = *st.registry;
    emit(a.out, out, [&](std::ostream& os) {
        if (a.exact) {
            std::vector<std::size_t> order(dist.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
                return dist.probabilities[x] > dist.probabilities[y];
            });
            os << "label\tprobability\n";
            for (auto i : order) {
                os << reg.entity(dist.support[i]).label << '\t'
                   << format_double(dist.probabilities[i]) << '\n';
            }
            return;
        }
        Rng rng = make_rng(st.config.train.seed, "sampler");
        std::map<EntityId, std::size_t> counts;
        for (std::size_t i = 0; i < a.n; ++i) ++counts[dist.sample(rng)];
        os << "label\tcount\n";
        for (const auto& [id, n] : ranked_counts(counts)) {
            os << reg.entity(id).label << '\t' << n << '\n';
        }
    });
    return 0;
}

struct DecodeArgs {
    Overrides overrides;
    std::string snapshot, out, sensory, episodes;
    std::vector<std::string> times;
    std::optional<double> beta;
    std::size_t n = 100;
};

void write_scene(std::ostream& os, const Registry& reg, const std::string& time,
                 const std::vector<std::array<EntityId, 3>>& samples) {
    std::map<std::array<EntityId, 3>, std::size_t> counts;
    for (const auto& s : samples) ++counts[s];
    for (const auto& [k, n] : ranked_counts(counts)) {
        os << time << '\t' << reg.entity(k[0]).label << '\t' << reg.entity(k[1]).label << '\t'
           << reg.entity(k[2]).label << "\t1\t" << n << '\n';
    }
}

int cmd_decode(const DecodeArgs& a, std::ostream& out) {
    if (a.sensory.empty() == a.times.empty()) {
        throw UsageError("decode takes either --sensory or --time");
    }
    State st = load_snapshot(a.snapshot, a.overrides);
    if (!st.episodic) throw DataError("snapshot has no episodic memory");
    const double beta = a.beta.value_or(st.config.beta);
    auto& reg = *st.registry;
    Rng rng = make_rng(st.config.train.seed, "sampler");

    std::vector<std::pair<std::string, Vector>> scenes;
    std::ostringstream episodes;
    if (!a.times.empty()) {
        for (const auto& label : a.times) {
            scenes.emplace_back(label, reg.embedding(reg.require(label, EntityKind::Time)));
        }
    } else {
        if (!st.encoder) throw DataError("decoding sensory buffers needs a trained encoder");
        SensoryStore buffers(st.sensory_store->buffer_length());
        auto in = open_in(a.sensory);
        // New time labels are registered in this process only.
        read_sensory(in, reg, buffers);
        std::vector<Vector> history;
        episodes << "time\tnovelty\tepisode\n";
        for (auto t : buffers.times()) {
            const SensoryBuffer buf = buffer_at(reg, buffers, t, st.channels());
            std::optional<Vector> predicted;
            if (st.arx && history.size() >= st.arx->window()) {
                const std::size_t r = reg.dim();
                const Vector ind = individual_id(st) ? reg.embedding(*individual_id(st)) : Vector(r, 0.0);
                predicted = st.arx->predict(history, ind);
            }
            const Vector h = st.encoder->encode(buf);
            const double nov = predicted ? novelty(*predicted, h)
                                         : std::numeric_limits<double>::infinity();
            episodes << reg.entity(t).label << '\t' << format_double(nov) << '\t'
                     << (nov >= st.config.tau ? 1 : 0) << '\n';
            history.push_back(h);
            scenes.emplace_back(reg.entity(t).label, h);
        }
    }
    emit(a.out, out, [&](std::ostream& os) {
        os << "time\tsubject\tpredicate\tobject\tvalue\tcount\n";
        for (const auto& [label, h] : scenes) {
            write_scene(os, reg, label, decode_scene(*st.episodic, reg, h, beta, a.n, rng));
        }
    });
    if (!a.episodes.empty()) {
        auto f = open_out(a.episodes);
        f << episodes.str();
    }
    return 0;
}

struct PredictArgs {
    Overrides overrides;
    std::string snapshot, out, decode;
    std::vector<std::string> history;
    std::size_t steps = 1;
    std::optional<double> beta;
    std::size_t n = 100;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
    State st = load_snapshot(a.snapshot, a.overrides);
    if (!st.arx) throw DataError("prediction from time labels needs predictor = arx");
    auto& reg = *st.registry;
    std::vector<Vector> history;
    for (const auto& item : split_pattern(a.history)) {
        std::string_view rest = item;
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            const auto label = trim(rest.substr(0, comma));
            if (!label.empty()) history.push_back(reg.embedding(reg.require(label, EntityKind::Time)));
            rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        }
    }
    const std::size_t W = st.arx->window();
    if (history.size() < W) {
        throw DataError("history has " + std::to_string(history.size()) +
                        " time steps, the predictor needs W = " + std::to_string(W));
    }
    if (a.steps == 0) throw UsageError("--steps must be at least 1");
    const std::size_t r = reg.dim();
    const auto ind_id = individual_id(st);
    const Vector ind = ind_id ? reg.embedding(*ind_id) : Vector(r, 0.0);
    std::vector<Vector> predicted;
    for (std::size_t k = 0; k < a.steps; ++k) {
        predicted.push_back(st.arx->predict(history, ind));
        history.push_back(predicted.back());
    }
    emit(a.out, out, [&](std::ostream& os) {
        os << "step";
        for (std::size_t i = 0; i < r; ++i) os << "\th" << i;
        os << '\n';
        for (std::size_t k = 0; k < predicted.size(); ++k) {
            os << k + 1;
            for (double x : predicted[k]) os << '\t' << format_double(x);
            os << '\n';
        }
    });
    if (!a.decode.empty()) {
        if (!st.episodic) throw DataError("snapshot has no episodic memory");
        const double beta = a.beta.value_or(st.config.beta);
        Rng rng = make_rng(st.config.train.seed, "sampler");
        auto f = open_out(a.decode);
        f << "time\tsubject\tpredicate\tobject\tvalue\tcount\n";
        for (std::size_t k = 0; k < predicted.size(); ++k) {
            write_scene(f, reg, "step" + std::to_string(k + 1),
                        decode_scene(*st.episodic, reg, predicted[k], beta, a.n, rng));
        }
    }
    return 0;
}

struct EvalArgs {
    Overrides overrides;
    std::string snapshot, out, heldout;
    bool quads = false;
};

struct Scored {
    double theta;
    double value;
    Likelihood l;
};

void write_metrics(std::ostream& os, const std::vector<Scored>& items, double sigma2) {
    std::vector<double> pos, neg;
    double nll = 0.0;
    for (const auto& s : items) {
        nll += fact_nll(s.l, s.value, s.theta, sigma2);
        if (s.l == Likelihood::Bernoulli) (s.value == 1.0 ? pos : neg).push_back(s.theta);
    }
    os << "metric\tvalue\n";
    os << "facts\t" << items.size() << '\n';
    os << "positives\t" << pos.size() << '\n';
    os << "negatives\t" << neg.size() << '\n';
    if (!pos.empty() && !neg.empty()) os << "auc\t" << format_double(roc_auc(pos, neg)) << '\n';
    else os << "auc\tnan\n";
    os << "mean_nll\t"
       << format_double(items.empty() ? 0.0 : nll / static_cast<double>(items.size())) << '\n';
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    State st = load_snapshot(a.snapshot, a.overrides);
    Registry& reg = *st.registry;
    const std::size_t before = reg.size();
    Rng rng = make_rng(st.config.train.seed, "eval");
    std::vector<Scored> items;
    const double sigma2 = st.config.train.sigma2;
    auto in = open_in(a.heldout);
    if (!a.quads) {
        if (!st.semantic) throw DataError("snapshot has no semantic memory");
        TripleStore held;
        for (const auto& [p, l] : st.triples.likelihoods().all()) held.likelihoods().declare(p, l);
        read_triples(in, reg, held);
        if (reg.size() != before) throw DataError("held-out file references labels unseen in training");
        st.semantic->sync(reg);
        auto facts = held.facts();
        const bool has_zero = std::any_of(facts.begin(), facts.end(),
                                          [](const TripleFact& f) { return f.value == 0.0; });
        if (!has_zero) {
            const auto neg = lcwa_negatives(reg, held, st.config.train.negative_ratio, rng, &st.triples);
            facts.insert(facts.end(), neg.begin(), neg.end());
        }
        for (const auto& f : facts) {
            const std::array<EntityId, 3> ids{f.s, f.p, f.o};
            items.push_back({st.semantic->score(reg, ids), f.value, held.likelihoods().get(f.p)});
        }
    } else {
        if (!st.episodic) throw DataError("snapshot has no episodic memory");
        QuadStore held;
        for (const auto& [p, l] : st.quads.likelihoods().all()) held.likelihoods().declare(p, l);
        read_quads(in, reg, held);
        if (reg.size() != before) throw DataError("held-out file references labels unseen in training");
        auto facts = held.facts();
        const bool has_zero = std::any_of(facts.begin(), facts.end(),
                                          [](const QuadFact& f) { return f.value == 0.0; });
        if (!has_zero) {
            const auto neg = lcwa_negatives(reg, held, st.config.train.negative_ratio, rng, &st.quads);
            facts.insert(facts.end(), neg.begin(), neg.end());
        }
        for (const auto& f : facts) {
            const std::array<EntityId, 4> ids{f.s, f.p, f.o, f.t};
            items.push_back({st.episodic->score(reg, ids), f.value, held.likelihoods().get(f.p)});
        }
    }
    emit(a.out, out, [&](std::ostream& os) { write_metrics(os, items, sigma2); });
    return 0;
}

void add_overrides(CLI::App* cmd, Overrides& o) {
    cmd->add_option("-c,--config", o.config_files, "config file(s) of key = value lines");
    cmd->add_option("-s,--set", o.settings, "config override key=value (repeatable)");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"tensormem: coupled tensor memories over shared latent representations"};
    app.require_subcommand(1);

    IngestArgs ingest;
    auto* c_ingest = app.add_subcommand("ingest", "load TSV files into a new snapshot");
    add_overrides(c_ingest, ingest.overrides);
    c_ingest->add_option("--triples", ingest.triples, "triples TSV (s p o value)");
    c_ingest->add_option("--quads", ingest.quads, "quadruples TSV (s p o value time)");
    c_ingest->add_option("--sensory", ingest.sensory, "sensory TSV (time channel gamma value)");
    c_ingest->add_option("-o,--out", ingest.out, "snapshot directory")->required();

    TrainArgs train;
    auto* c_train = app.add_subcommand("train", "train every configured memory");
    add_overrides(c_train, train.overrides);
    c_train->add_option("snapshot", train.snapshot, "snapshot directory")->required();
    c_train->add_option("-o,--out", train.out, "output snapshot (default: in place)");

    QueryArgs query;
    auto* c_query = app.add_subcommand("query", "answer a pattern such as 'Jack likes ?'");
    add_overrides(c_query, query.overrides);
    c_query->add_option("snapshot", query.snapshot, "snapshot directory")->required();
    c_query->add_option("pattern", query.pattern, "slots: label, ? (free) or * (summed out)");
    c_query->add_option("--associate", query.associate, "sample entities associated with this one");
    c_query->add_flag("--exclude-self", query.exclude_self, "never return the --associate entity itself");
    c_query->add_flag("--exact", query.exact, "print the exact conditional distribution");
    c_query->add_option("-b,--beta", query.beta, "inverse temperature");
    c_query->add_option("-n,--samples", query.n, "number of samples");
    c_query->add_option("-o,--out", query.out, "output file");

    DecodeArgs decode;
    auto* c_decode = app.add_subcommand("decode", "decode sensory buffers or time steps into triples");
    add_overrides(c_decode, decode.overrides);
    c_decode->add_option("snapshot", decode.snapshot, "snapshot directory")->required();
    c_decode->add_option("--sensory", decode.sensory, "sensory TSV to encode and decode");
    c_decode->add_option("--time", decode.times, "registered time label(s) to decode");
    c_decode->add_option("-b,--beta", decode.beta, "inverse temperature");
    c_decode->add_option("-n,--samples", decode.n, "samples per time step");
    c_decode->add_option("-o,--out", decode.out, "output file");
    c_decode->add_option("--episodes", decode.episodes, "write per-buffer novelty to this file");

    PredictArgs predict;
    auto* c_predict = app.add_subcommand("predict", "predict the next latent time representations");
    add_overrides(c_predict, predict.overrides);
    c_predict->add_option("snapshot", predict.snapshot, "snapshot directory")->required();
    c_predict->add_option("--history", predict.history, "time labels, oldest first")->required();
    c_predict->add_option("--steps", predict.steps, "number of steps to roll forward");
    c_predict->add_option("--decode", predict.decode, "also decode predictions into this file");
    c_predict->add_option("-b,--beta", predict.beta, "inverse temperature for decoding");
    c_predict->add_option("-n,--samples", predict.n, "decoded samples per step");
    c_predict->add_option("-o,--out", predict.out, "output file");

    EvalArgs eval;
    auto* c_eval = app.add_subcommand("eval", "held-out AUC and mean NLL");
    add_overrides(c_eval, eval.overrides);
    c_eval->add_option("snapshot", eval.snapshot, "snapshot directory")->required();
    c_eval->add_option("--heldout", eval.heldout, "held-out TSV")->required();
    c_eval->add_flag("--quads", eval.quads, "held-out file holds quadruples");
    c_eval->add_option("-o,--out", eval.out, "output file");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
        if (c_ingest->parsed()) return cmd_ingest(ingest, out, err);
        if (c_train->parsed()) return cmd_train(train, out);
        if (c_query->parsed()) return cmd_query(query, out);
        if (c_decode->parsed()) return cmd_decode(decode, out);
        if (c_predict->parsed()) return cmd_predict(predict, out);
        if (c_eval->parsed()) return cmd_eval(eval, out);
        return 1;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace tensormem
