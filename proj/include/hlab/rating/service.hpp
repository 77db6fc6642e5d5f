// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hlab/common/error.hpp"

namespace hlab::rating {

inline constexpr int kSchemaVersion = 1;

/// Carries the HTTP status the failure maps to (400, 404 or 409).
class RequestError : public Error {
 public:
  RequestError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct Stimulus {
  std::string id;
  std::string condition;  // "noisy" or "alpha=<a>"
  std::filesystem::path wav_path;
  std::string clip;
};

/// Reads <dir>/stimuli.json as written by the sweep; every file must exist.
std::vector<Stimulus> load_stimuli(const std::filesystem::path& dir);

/// Up to `per_condition` stimuli from each of at most `max_conditions`
/// conditions: noisy first, then alphas in descending order. The defaults
/// give 15 files for a sweep with four or more alphas.
std::vector<Stimulus> default_playlist(const std::vector<Stimulus>& all, int per_condition = 3,
                                       int max_conditions = 5);

struct Rating {
  std::string session_id;
  std::string stimulus_id;
  int sig = 0;
  int bak = 0;
  int ovrl = 0;
  std::int64_t timestamp = 0;  // unix seconds
};

struct Session {
  std::string id;
  std::vector<std::string> stimuli;
};

struct ScaleStats {
  double mean = 0.0;
  double std = 0.0;  // population
};

struct ConditionRow {
  std::string condition;
  ScaleStats sig, bak, ovrl;
  int count = 0;
};

struct AggregateTable {
  std::vector<ConditionRow> rows;
  int total = 0;
};

nlohmann::json to_json(const AggregateTable& table);

/// Session and rating state over an append-only JSON-lines log. Every write
/// is fsynced before the call returns; the log is replayed on construction.
class RatingService {
 public:
  RatingService(std::vector<Stimulus> stimuli, std::filesystem::path log_path, std::uint64_t seed = 0);
  ~RatingService();
  RatingService(const RatingService&) = delete;
  RatingService& operator=(const RatingService&) = delete;

  Session create_session();
  /// Throws RequestError: 400 bad scores, 404 unknown session or stimulus,
  /// 409 a rating for the pair already exists.
  void submit(const Rating& r);
  AggregateTable aggregate() const;

  const Stimulus* find_stimulus(const std::string& id) const;
  std::size_t rating_count() const;

 private:
  void append(const nlohmann::json& record);

  std::vector<Stimulus> stimuli_;
  std::map<std::string, std::size_t> by_id_;
  std::filesystem::path log_path_;
  std::uint64_t seed_;
  mutable std::mutex mu_;
  int fd_ = -1;
  std::uint64_t next_session_ = 1;
  std::map<std::string, std::set<std::string>> sessions_;
  std::set<std::pair<std::string, std::string>> rated_;
  std::vector<std::pair<Rating, std::string>> ratings_;  // with the condition at rating time
};

/// Parses a POST /api/rating body; throws RequestError(400).
Rating parse_rating(const std::string& body);

struct ServeConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path stimuli_dir;
  std::filesystem::path ratings_log;
  std::filesystem::path ui_dir;  // served at / when it exists
  std::uint64_t seed = 0;
};

/// HTTP front end over a RatingService.
class HttpServer {
 public:
  HttpServer(RatingService& service, std::filesystem::path ui_dir);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws IoError.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void run();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Loads the stimuli and log, binds and blocks. Throws IoError when the port
/// is taken.
void serve(const ServeConfig& cfg);

}  // namespace hlab::rating
