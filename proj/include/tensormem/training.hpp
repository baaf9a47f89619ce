#pragma once
// Coupled training of every memory function.
//
// The total cost is a weighted sum of negative log-likelihood terms (semantic
// triples, episodic quadruples, sensory entries, latent-time prediction) plus
// a Frobenius regularizer. All terms read the same registry rows, so
// gradients from different memories accumulate into the same embeddings.

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "tensormem/models.hpp"
#include "tensormem/predict.hpp"
#include "tensormem/registry.hpp"
#include "tensormem/sensory.hpp"
#include "tensormem/stores.hpp"

namespace tensormem {

struct CostWeights {
    double semantic = 1.0;
    double episodic = 1.0;
    double sensory = 1.0;
    double predict = 1.0;
};

struct TrainConfig {
    double learning_rate = 0.05;
    std::size_t epochs = 10;
    std::size_t batch_size = 128;
    double lambda_a = 0.0;
    double lambda_w = 0.0;
    std::size_t negative_ratio = 5;
    CostWeights weights;
    double sigma2 = 1.0;
    std::uint64_t seed = 0;
    bool freeze_embeddings = false;
    bool freeze_encoder = false;
    std::size_t workers = 1;

    void validate() const;
};

// Non-owning view of everything the cost reads and SGD writes. Absent parts
// are null.
struct CoupledModel {
    Registry* registry = nullptr;

    Memory* semantic = nullptr;
    const TripleStore* triples = nullptr;

    Memory* episodic = nullptr;
    const QuadStore* quads = nullptr;

    // Sensory memory over (channel, buffer position, time). With an encoder
    // the time slot reads encode(u_t) instead of the time embedding.
    Memory* sensory = nullptr;
    const SensoryStore* sensory_store = nullptr;
    std::size_t channels = 0;
    EncoderM* encoder = nullptr;

    // At most one predictor. The RNN is unrolled `window` steps.
    ArxPredictor* arx = nullptr;
    RnnPredictor* rnn = nullptr;
    std::size_t window = 5;
    std::optional<EntityId> individual;
};

// Gradient blocks in the order: embeddings, semantic, episodic, sensory,
// encoder, predictor.
struct Gradients {
    Vector embeddings;
    Vector semantic;
    Vector episodic;
    Vector sensory;
    Vector encoder;
    Vector predictor;

    static Gradients zeros_like(const CoupledModel& model);
    void clear();
    void add(const Gradients& other);
    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;
};

// Parameter spans aligned with Gradients::blocks(); absent parts are empty.
std::vector<std::span<double>> parameter_blocks(const CoupledModel& model);

// Likelihood used for a fact of predicate p.
Likelihood fact_likelihood(const PredicateLikelihoods& l, EntityId p);
double fact_nll(Likelihood l, double value, double theta, double sigma2);
double fact_nll_grad(Likelihood l, double value, double theta, double sigma2);

// Each cost term sums the NLL over `facts`; with `grad` set it also
// accumulates weight * d(term) into it. An empty fact set is an error.
double cost_semantic(const CoupledModel& model, std::span<const TripleFact> facts, double sigma2,
                     Gradients* grad = nullptr, double weight = 1.0);
double cost_episodic(const CoupledModel& model, std::span<const QuadFact> facts, double sigma2,
                     Gradients* grad = nullptr, double weight = 1.0);
// Gaussian NLL over sensory entries.
double cost_sensory(const CoupledModel& model, std::span<const SensoryEntry> entries,
                    double sigma2, Gradients* grad = nullptr, double weight = 1.0);

// Time-ordered ids of the registered Time entities.
std::vector<EntityId> time_sequence(const Registry& registry);
// Prediction steps t = W .. T-1 over the time sequence (T >= W + 1).
std::vector<std::size_t> predict_steps(const CoupledModel& model);
// sum over steps of 1/2 ||a_t - f_predict(history, a_individual)||^2.
double cost_predict(const CoupledModel& model, std::span<const std::size_t> steps,
                    Gradients* grad = nullptr, double weight = 1.0);
double cost_predict(const CoupledModel& model, Gradients* grad = nullptr, double weight = 1.0);

// lambda_A ||A||_F^2 + lambda_W ||W||_F^2 over stored parameters; `scale`
// multiplies both value and gradient.
double regularizer(const CoupledModel& model, double lambda_a, double lambda_w,
                   Gradients* grad = nullptr, double scale = 1.0);

// For every Boolean positive (s, p, o; 1): `ratio` corruptions (s, p, o'; 0)
// with o' uniform over the entities that are not known positives of (s, p).
// Positives of `known`, if given, are excluded as well. A positive whose
// every object is excluded gets no corruptions.
std::vector<TripleFact> lcwa_negatives(const Registry& registry, const TripleStore& store,
                                       std::size_t ratio, Rng& rng,
                                       const TripleStore* known = nullptr);
std::vector<QuadFact> lcwa_negatives(const Registry& registry, const QuadStore& store,
                                     std::size_t ratio, Rng& rng, const QuadStore* known = nullptr);

struct TrainingSet {
    std::vector<TripleFact> semantic;
    std::vector<QuadFact> episodic;
    std::vector<SensoryEntry> sensory;
    std::vector<std::size_t> predict;

    std::size_t size() const {
        return semantic.size() + episodic.size() + sensory.size() + predict.size();
    }
};

// Observed facts of every active term plus freshly drawn negatives.
TrainingSet build_training_set(const CoupledModel& model, const TrainConfig& config, Rng& rng);

struct CostBreakdown {
    double semantic = 0.0;
    double episodic = 0.0;
    double sensory = 0.0;
    double predict = 0.0;
    double reg = 0.0;
    double total = 0.0;  // weighted sum plus reg
};

// Weighted total over a training set. Terms with zero weight are skipped.
// Frozen parameter groups report zero gradient.
CostBreakdown total_cost(const CoupledModel& model, const TrainConfig& config,
                         const TrainingSet& set, Gradients* grad = nullptr);

struct EpochReport {
    std::size_t epoch;
    CostBreakdown cost;
};

struct TrainingReport {
    double initial_cost = 0.0;
    std::vector<EpochReport> epochs;
};

// Minibatch SGD with constant step size; negatives are redrawn every epoch.
// Throws DivergenceError when the cost turns non-finite or exceeds 1e6 times
// its initial value.
TrainingReport sgd_train(const CoupledModel& model, const TrainConfig& config);

// Probability that a random positive outscores a random negative; ties count
// one half.
double roc_auc(std::span<const double> positive_scores, std::span<const double> negative_scores);

// epoch \t total_cost \t semantic \t episodic \t sensory \t predict \t reg
void write_report(std::ostream& os, const TrainingReport& report);

}  // namespace tensormem
