#pragma once
// Command-line front end: ingest, train, query, decode, predict, eval.
//
// A snapshot directory holds the whole state of a run (resolved config,
// registry, stores, trained parameters, training report). Every command reads
// one and the mutating ones write one.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tensormem/models.hpp"
#include "tensormem/stores.hpp"
#include "tensormem/training.hpp"

namespace tensormem {

enum class PredictorKind { None, Arx, Rnn };

struct RunConfig {
    std::size_t dim = 8;
    bool nonneg_mode = false;
    ModelFamily semantic_model = ModelFamily::Tucker;
    ModelFamily episodic_model = ModelFamily::Tucker;
    ModelFamily sensory_model = ModelFamily::Tucker;
    std::size_t hidden = 64;
    std::map<std::string, Likelihood> likelihoods;  // by predicate label

    std::optional<std::size_t> channels;  // Q; defaults to the channel count
    std::optional<std::size_t> buffer_length;  // N
    bool encoder = false;

    TrainConfig train;
    double beta = 1.0;
    double tau = 0.1;
    std::size_t window = 5;
    PredictorKind predictor = PredictorKind::None;
    bool predictor_linear = true;
    std::optional<std::string> individual;

    // Applies one `key = value` setting.
    void set(const std::string& key, const std::string& value);
    void validate() const;

    // Canonical `key = value` text, one entry per line, keys sorted.
    std::string to_text() const;
};

// Reads `key = value` lines; `#` starts a comment. Errors carry line numbers.
void apply_config_text(RunConfig& config, std::istream& in);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

// Runs one command line (without the program name). Returns the exit code:
// 0 success, 1 usage error, 2 data error, 3 numerical failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tensormem
