#include "icl/predictor.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

namespace icl::bridge {

using nlohmann::json;

std::string to_string(Mode m) {
    switch (m) {
        case Mode::InProcess: return "in-process";
        case Mode::Subprocess: return "subprocess";
        case Mode::PredictionFile: return "prediction-file";
    }
    return "?";
}

std::string to_string(Concurrency c) { return c == Concurrency::Serial ? "serial" : "concurrent-safe"; }

std::string QueryKey::str() const {
    return prompt_id + "/" + std::to_string(k) + "/" + std::to_string(query_index);
}

json PredictionRecord::to_json() const {
    return {{"prompt_id", key.prompt_id}, {"k", key.k}, {"query_index", key.query_index}, {"prediction", prediction}};
}

PredictionRecord PredictionRecord::from_json(const json& j) {
    PredictionRecord r;
    r.key.prompt_id = j.at("prompt_id").get<std::string>();
    r.key.k = j.at("k").get<Eigen::Index>();
    r.key.query_index = j.at("query_index").get<Eigen::Index>();
    const auto& p = j.at("prediction");
    if (!p.is_number()) throw PredictorError("prediction record " + r.key.str() + " is not numeric", j);
    r.prediction = p.get<double>();
    if (!std::isfinite(r.prediction)) throw PredictorError("prediction record " + r.key.str() + " is not finite", j);
    if (r.key.k < 0 || r.key.query_index < 0) throw PredictorError("negative index in record " + r.key.str(), j);
    return r;
}

json make_request(const std::string& id, const Mat& xs, const Vec& ys, const Vec& query) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < xs.cols(); ++j) row.push_back(xs(i, j));
        rows.push_back(std::move(row));
    }
    json yv = json::array();
    for (Eigen::Index i = 0; i < ys.size(); ++i) yv.push_back(ys[i]);
    json q = json::array();
    for (Eigen::Index i = 0; i < query.size(); ++i) q.push_back(query[i]);
    return {{"id", id}, {"xs", std::move(rows)}, {"ys", std::move(yv)}, {"query", std::move(q)}};
}

Request parse_request(const json& j) {
    Request r;
    r.id = j.at("id").get<std::string>();
    const auto& q = j.at("query");
    r.query.resize(static_cast<Eigen::Index>(q.size()));
    for (std::size_t i = 0; i < q.size(); ++i) r.query[static_cast<Eigen::Index>(i)] = q[i].get<double>();
    const auto& rows = j.at("xs");
    const auto& ys = j.at("ys");
    if (rows.size() != ys.size()) throw ShapeError("request " + r.id + ": xs and ys lengths differ");
    const Eigen::Index d = r.query.size();
    r.xs.resize(static_cast<Eigen::Index>(rows.size()), d);
    r.ys.resize(static_cast<Eigen::Index>(ys.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<Eigen::Index>(rows[i].size()) != d)
            throw ShapeError("request " + r.id + ": row " + std::to_string(i) + " has wrong dimension");
        for (Eigen::Index c = 0; c < d; ++c)
            r.xs(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<std::size_t>(c)].get<double>();
        r.ys[static_cast<Eigen::Index>(i)] = ys[i].get<double>();
    }
    return r;
}

namespace {

void sort_unique(std::vector<PredictionRecord>& records) {
    std::sort(records.begin(), records.end(),
              [](const PredictionRecord& a, const PredictionRecord& b) { return a.key < b.key; });
    for (std::size_t i = 1; i < records.size(); ++i)
        if (records[i].key == records[i - 1].key)
            throw ConfigError("duplicate prediction record " + records[i].key.str());
}

}  // namespace

void write_records(std::ostream& out, std::vector<PredictionRecord> records) {
    sort_unique(records);
    for (const auto& r : records) {
        if (!std::isfinite(r.prediction)) throw NumericError("non-finite prediction for " + r.key.str());
        out << r.to_json().dump() << '\n';
    }
}

void write_records(const std::string& path, std::vector<PredictionRecord> records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write_records(out, std::move(records));
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<PredictionRecord> read_records(std::istream& in) {
    std::vector<PredictionRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            records.push_back(PredictionRecord::from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ConfigError("prediction file line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    auto sorted = records;
    sort_unique(sorted);
    return records;
}

std::vector<PredictionRecord> read_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_records(in);
}

PredictorHandle::PredictorHandle(std::string name, Mode mode, Concurrency concurrency, std::shared_ptr<Predictor> impl)
    : name_(std::move(name)),
      mode_(mode),
      concurrency_(concurrency),
      impl_(std::move(impl)),
      serial_lock_(std::make_shared<std::mutex>()) {
    if (!impl_) throw ConfigError("predictor handle " + name_ + " has no implementation");
}

double PredictorHandle::predict(const Mat& xs, const Vec& ys, const Vec& query, const QueryKey* key) const {
    const std::string id = key ? key->str() : std::string("adhoc");
    if (xs.rows() != ys.size())
        throw ShapeError("predictor " + name_ + ": context has " + std::to_string(xs.rows()) + " inputs and " +
                         std::to_string(ys.size()) + " outputs");
    if (xs.cols() != query.size())
        throw ShapeError("predictor " + name_ + ": query dimension " + std::to_string(query.size()) +
                         " does not match context dimension " + std::to_string(xs.cols()));
    double value;
    try {
        if (concurrency_ == Concurrency::Serial) {
            std::lock_guard<std::mutex> lock(*serial_lock_);
            value = impl_->predict(xs, ys, query, key);
        } else {
            value = impl_->predict(xs, ys, query, key);
        }
    } catch (const PredictorError&) {
        throw;
    } catch (const std::exception& e) {
        throw PredictorError("predictor " + name_ + " failed on " + id + ": " + e.what(),
                             make_request(id, xs, ys, query));
    }
    if (!std::isfinite(value))
        throw PredictorError("predictor " + name_ + " returned a non-finite value on " + id,
                             make_request(id, xs, ys, query));
    return value;
}

namespace {

class FunctionPredictor : public Predictor {
public:
    explicit FunctionPredictor(PredictFn fn) : fn_(std::move(fn)) {}
    double predict(const Mat& xs, const Vec& ys, const Vec& query, const QueryKey*) override {
        return fn_(xs, ys, query);
    }

private:
    PredictFn fn_;
};

class FilePredictor : public Predictor {
public:
    explicit FilePredictor(const std::vector<PredictionRecord>& records) {
        for (const auto& r : records)
            if (!table_.emplace(r.key, r.prediction).second)
                throw ConfigError("duplicate prediction record " + r.key.str());
    }
    double predict(const Mat& xs, const Vec& ys, const Vec& query, const QueryKey* key) override {
        if (!key) throw PredictorError("prediction-file handle needs a query key", make_request("?", xs, ys, query));
        auto it = table_.find(*key);
        if (it == table_.end())
            throw PredictorError("no stored prediction for " + key->str(), make_request(key->str(), xs, ys, query));
        return it->second;
    }

private:
    std::map<QueryKey, double> table_;
};

/// Child process speaking the line protocol over a Unix socket pair.
class SubprocessPredictor : public Predictor {
public:
    SubprocessPredictor(std::string command, SubprocessOptions options)
        : command_(std::move(command)), options_(options) {
        spawn();
    }
    ~SubprocessPredictor() override { shutdown(); }

    double predict(const Mat& xs, const Vec& ys, const Vec& query, const QueryKey* key) override {
        const std::string id = key ? key->str() : "req" + std::to_string(counter_++);
        json request = make_request(id, xs, ys, query);
        if (pid_ <= 0) spawn();
        const std::string line = request.dump() + "\n";
        send_all(line, request);
        const std::string reply = read_line(request);
        json response;
        try {
            response = json::parse(reply);
        } catch (const json::exception&) {
            throw PredictorError("protocol violation: unparseable reply '" + reply + "'", request);
        }
        if (!response.is_object()) throw PredictorError("protocol violation: reply is not an object", request);
        if (!response.contains("id") || response["id"] != id)
            throw PredictorError("protocol violation: reply id does not match request " + id, request);
        if (response.contains("error"))
            throw PredictorError("predictor process reported: " + response["error"].dump(), request);
        if (!response.contains("prediction") || !response["prediction"].is_number())
            throw PredictorError("protocol violation: reply has no numeric prediction", request);
        const double value = response["prediction"].get<double>();
        if (!std::isfinite(value)) throw PredictorError("non-finite prediction", request);
        return value;
    }

private:
    void spawn() {
        int fds[2];
        if (socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0)
            throw PredictorError(std::string("socketpair failed: ") + std::strerror(errno));
        const pid_t pid = fork();
        if (pid < 0) {
            close(fds[0]);
            close(fds[1]);
            throw PredictorError(std::string("fork failed: ") + std::strerror(errno));
        }
        if (pid == 0) {
            dup2(fds[1], STDIN_FILENO);
            dup2(fds[1], STDOUT_FILENO);
            execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
            _exit(127);
        }
        close(fds[1]);
        fd_ = fds[0];
        pid_ = pid;
        buffer_.clear();
    }

    void shutdown() {
        if (fd_ >= 0) {
            ::shutdown(fd_, SHUT_WR);  // EOF on the child's stdin
            close(fd_);
            fd_ = -1;
        }
        if (pid_ > 0) {
            for (int i = 0; i < 50; ++i) {
                if (waitpid(pid_, nullptr, WNOHANG) == pid_) {
                    pid_ = -1;
                    return;
                }
                std::this_thread::sleep_for(std::chrono::milliseconds(10));
            }
            kill(pid_, SIGKILL);
            waitpid(pid_, nullptr, 0);
            pid_ = -1;
        }
    }

    [[noreturn]] void fail(const std::string& what, const json& request) {
        shutdown();  // the next request starts a fresh process
        throw PredictorError(what, request);
    }

    void send_all(const std::string& data, const json& request) {
        std::size_t off = 0;
        while (off < data.size()) {
            const ssize_t n = send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                fail(std::string("cannot write to predictor process: ") + std::strerror(errno), request);
            }
            off += static_cast<std::size_t>(n);
        }
    }

    std::string read_line(const json& request) {
        const auto deadline = std::chrono::steady_clock::now() + options_.timeout;
        for (;;) {
            if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return line;
            }
            const auto left =
                std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0)
                fail("predictor process timed out after " + std::to_string(options_.timeout.count()) + " ms", request);
            pollfd p{fd_, POLLIN, 0};
            const int r = poll(&p, 1, static_cast<int>(left.count()));
            if (r < 0) {
                if (errno == EINTR) continue;
                fail(std::string("poll failed: ") + std::strerror(errno), request);
            }
            if (r == 0) continue;
            char chunk[4096];
            const ssize_t n = recv(fd_, chunk, sizeof chunk, 0);
            if (n < 0) {
                if (errno == EINTR) continue;
                fail(std::string("cannot read from predictor process: ") + std::strerror(errno), request);
            }
            if (n == 0) fail("predictor process closed its output", request);
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    std::string command_;
    SubprocessOptions options_;
    int fd_ = -1;
    pid_t pid_ = -1;
    std::string buffer_;
    std::uint64_t counter_ = 0;
};

}  // namespace

PredictorHandle in_process(std::string name, PredictFn fn, Concurrency concurrency) {
    return PredictorHandle(std::move(name), Mode::InProcess, concurrency,
                           std::make_shared<FunctionPredictor>(std::move(fn)));
}

PredictorHandle linear_in_features(std::string name, WeightEstimator estimator, FeatureMap phi) {
    return in_process(std::move(name), [estimator = std::move(estimator), phi = std::move(phi)](
                                           const Mat& xs, const Vec& ys, const Vec& query) {
        const Vec w = estimator(phi.expand(xs), ys);
        return phi(query).dot(w);
    });
}

PredictorHandle subprocess(std::string name, const std::string& command, SubprocessOptions options) {
    return PredictorHandle(std::move(name), Mode::Subprocess, Concurrency::Serial,
                           std::make_shared<SubprocessPredictor>(command, options));
}

PredictorHandle prediction_file(std::string name, const std::vector<PredictionRecord>& records) {
    return PredictorHandle(std::move(name), Mode::PredictionFile, Concurrency::ConcurrentSafe,
                           std::make_shared<FilePredictor>(records));
}

PredictorHandle prediction_file(std::string name, const std::string& path) {
    return prediction_file(std::move(name), read_records(path));
}

json Failure::to_json() const { return {{"prompt_id", key.prompt_id}, {"k", key.k}, {"error", error}}; }

BatchResult run_batch(const PredictorHandle& handle, const std::vector<Prompt>& prompts,
                      const std::vector<Eigen::Index>& k_range, QueryMode mode, int workers) {
    if (workers < 1) throw ConfigError("workers must be >= 1");
    struct Job {
        const Prompt* prompt;
        QueryKey key;
    };
    std::vector<Job> jobs;
    for (const auto& prompt : prompts) {
        for (Eigen::Index k : k_range) {
            if (k < 0) throw ConfigError("negative prefix length");
            if (mode == QueryMode::NextTarget) {
                if (k >= prompt.length())
                    throw ConfigError("prompt " + prompt.id + " has " + std::to_string(prompt.length()) +
                                      " pairs; next-target query at k = " + std::to_string(k) + " needs k + 1");
                jobs.push_back({&prompt, {prompt.id, k, 0}});
            } else {
                if (k > prompt.length())
                    throw ConfigError("prompt " + prompt.id + " is shorter than k = " + std::to_string(k));
                for (Eigen::Index q = 0; q < prompt.query_xs.rows(); ++q) jobs.push_back({&prompt, {prompt.id, k, q}});
            }
        }
    }

    std::vector<std::optional<double>> values(jobs.size());
    std::vector<std::string> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const Job& job = jobs[i];
            const Prompt& p = *job.prompt;
            const Eigen::Index k = job.key.k;
            const Vec query = mode == QueryMode::NextTarget ? Vec(p.xs.row(k).transpose())
                                                            : Vec(p.query_xs.row(job.key.query_index).transpose());
            try {
                values[i] = handle.predict(p.xs.topRows(k), p.ys.head(k), query, &job.key);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const int n_threads = std::min<int>(workers, static_cast<int>(std::max<std::size_t>(jobs.size(), 1)));
    if (n_threads == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    BatchResult result;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (values[i])
            result.records.push_back({jobs[i].key, *values[i]});
        else
            result.failures.push_back({jobs[i].key, errors[i]});
    }
    std::sort(result.records.begin(), result.records.end(),
              [](const PredictionRecord& a, const PredictionRecord& b) { return a.key < b.key; });
    std::sort(result.failures.begin(), result.failures.end(),
              [](const Failure& a, const Failure& b) { return a.key < b.key; });
    return result;
}

void write_failure_manifest(const std::string& path, const std::vector<Failure>& failures) {
    json arr = json::array();
    for (const auto& f : failures) arr.push_back(f.to_json());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << arr.dump(2) << '\n';
}

}  // namespace icl::bridge
