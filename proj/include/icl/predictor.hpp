#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "icl/core.hpp"
#include "icl/tasks.hpp"

namespace icl::bridge {

enum class Mode { InProcess, Subprocess, PredictionFile };
enum class Concurrency { Serial, ConcurrentSafe };

std::string to_string(Mode m);
std::string to_string(Concurrency c);

/// Failure of a predictor; `request` echoes the offending request.
struct PredictorError : std::runtime_error {
    PredictorError(const std::string& what, nlohmann::json request = {})
        : std::runtime_error(what), request(std::move(request)) {}
    nlohmann::json request;
};

/// Identifies one prediction: prompt, prefix length and query slot.
struct QueryKey {
    std::string prompt_id;
    Eigen::Index k = 0;
    Eigen::Index query_index = 0;

    auto operator<=>(const QueryKey&) const = default;
    std::string str() const;
};

struct PredictionRecord {
    QueryKey key;
    double prediction = 0.0;

    nlohmann::json to_json() const;
    static PredictionRecord from_json(const nlohmann::json& j);
};

/// Wire request: {"id", "xs", "ys", "query"}.
nlohmann::json make_request(const std::string& id, const Mat& xs, const Vec& ys, const Vec& query);
struct Request {
    std::string id;
    Mat xs;
    Vec ys;
    Vec query;
};
Request parse_request(const nlohmann::json& j);

/// One JSON object per line; write sorts by key and rejects duplicates.
void write_records(std::ostream& out, std::vector<PredictionRecord> records);
void write_records(const std::string& path, std::vector<PredictionRecord> records);
std::vector<PredictionRecord> read_records(std::istream& in);
std::vector<PredictionRecord> read_records(const std::string& path);

/// Predictor implementation. Serial predictors are called one request at a time.
class Predictor {
public:
    virtual ~Predictor() = default;
    /// `key` is provided when the caller knows which prompt slot is queried.
    virtual double predict(const Mat& xs, const Vec& ys, const Vec& query, const QueryKey* key) = 0;
};

class PredictorHandle {
public:
    PredictorHandle(std::string name, Mode mode, Concurrency concurrency, std::shared_ptr<Predictor> impl);

    const std::string& name() const { return name_; }
    Mode mode() const { return mode_; }
    Concurrency concurrency() const { return concurrency_; }
    /// Copy sharing the same implementation under another name.
    PredictorHandle with_name(std::string name) const {
        PredictorHandle h = *this;
        h.name_ = std::move(name);
        return h;
    }

    /// Checks shapes, serializes serial handles and rejects non-finite replies.
    double predict(const Mat& xs, const Vec& ys, const Vec& query, const QueryKey* key = nullptr) const;

private:
    std::string name_;
    Mode mode_;
    Concurrency concurrency_;
    std::shared_ptr<Predictor> impl_;
    std::shared_ptr<std::mutex> serial_lock_;
};

using PredictFn = std::function<double(const Mat& xs, const Vec& ys, const Vec& query)>;

PredictorHandle in_process(std::string name, PredictFn fn, Concurrency concurrency = Concurrency::ConcurrentSafe);

/// Predictor that fits a weight vector from the context, then returns phi(query)^T w.
using WeightEstimator = std::function<Vec(const Mat& features, const Vec& ys)>;
PredictorHandle linear_in_features(std::string name, WeightEstimator estimator, FeatureMap phi);

struct SubprocessOptions {
    std::chrono::milliseconds timeout{60000};
};

/// Spawns `/bin/sh -c command` and speaks newline-delimited JSON over its
/// standard streams, one request in flight at a time.
PredictorHandle subprocess(std::string name, const std::string& command, SubprocessOptions options = {});

/// Serves stored records; queries must carry a key.
PredictorHandle prediction_file(std::string name, const std::vector<PredictionRecord>& records);
PredictorHandle prediction_file(std::string name, const std::string& path);

enum class QueryMode { NextTarget, ProbeQueries };

struct Failure {
    QueryKey key;
    std::string error;
    nlohmann::json to_json() const;
};

struct BatchResult {
    std::vector<PredictionRecord> records;  // sorted by key
    std::vector<Failure> failures;          // sorted by key
};

/// Context for slot (prompt, k): the first k pairs. NextTarget queries xs[k];
/// ProbeQueries queries every row of query_xs.
BatchResult run_batch(const PredictorHandle& handle, const std::vector<Prompt>& prompts,
                      const std::vector<Eigen::Index>& k_range, QueryMode mode, int workers = 1);

void write_failure_manifest(const std::string& path, const std::vector<Failure>& failures);

}  // namespace icl::bridge
