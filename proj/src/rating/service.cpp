// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/rating/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <httplib.h>

#include "hlab/common/random.hpp"
#include "hlab/common/stats.hpp"

namespace hlab::rating {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Sort key placing noisy first, then alphas from high to low, then the rest.
std::tuple<int, double, std::string> condition_key(const std::string& c) {
  if (c == "noisy") return {0, 0.0, c};
  if (c.rfind("alpha=", 0) == 0) {
    try {
      return {1, -std::stod(c.substr(6)), c};
    } catch (const std::exception&) {
    }
  }
  return {2, 0.0, c};
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int score_field(const json& j, const char* name) {
  if (!j.contains(name) || !j[name].is_number_integer()) {
    throw RequestError(400, fmt::format("'{}' must be an integer", name));
  }
  const auto v = j[name].get<std::int64_t>();
  if (v < 1 || v > 5) throw RequestError(400, fmt::format("'{}' must be in 1..5, got {}", name, v));
  return static_cast<int>(v);
}

std::string string_field(const json& j, const char* name) {
  if (!j.contains(name) || !j[name].is_string()) {
    throw RequestError(400, fmt::format("'{}' must be a string", name));
  }
  return j[name].get<std::string>();
}

ScaleStats stats_of(const std::vector<double>& v) { return {mean(v), population_std(v)}; }

}  // namespace

std::vector<Stimulus> load_stimuli(const fs::path& dir) {
  const fs::path index = dir / "stimuli.json";
  json doc;
  try {
    doc = json::parse(read_file(index));
  } catch (const json::exception& e) {
    throw DataError(index.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw DataError(index.string() + ": expected an array");
  std::vector<Stimulus> out;
  std::set<std::string> ids;
  for (const auto& e : doc) {
    Stimulus s;
    try {
      s.id = e.at("id").get<std::string>();
      s.condition = e.at("condition").get<std::string>();
      s.wav_path = dir / e.at("wav").get<std::string>();
      s.clip = e.value("clip", std::string());
    } catch (const json::exception& ex) {
      throw DataError(index.string() + ": " + ex.what());
    }
    if (!ids.insert(s.id).second) throw DataError("duplicate stimulus id " + s.id);
    if (!fs::is_regular_file(s.wav_path)) throw DataError("missing stimulus file " + s.wav_path.string());
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Stimulus> default_playlist(const std::vector<Stimulus>& all, int per_condition, int max_conditions) {
  std::vector<std::string> conditions;
  for (const auto& s : all) {
    if (std::find(conditions.begin(), conditions.end(), s.condition) == conditions.end()) {
      conditions.push_back(s.condition);
    }
  }
  std::stable_sort(conditions.begin(), conditions.end(),
                   [](const auto& a, const auto& b) { return condition_key(a) < condition_key(b); });
  if (static_cast<int>(conditions.size()) > max_conditions) conditions.resize(std::max(0, max_conditions));
  std::vector<Stimulus> out;
  for (const auto& c : conditions) {
    int taken = 0;
    for (const auto& s : all) {
      if (s.condition == c && taken < per_condition) {
        out.push_back(s);
        ++taken;
      }
    }
  }
  return out;
}

json to_json(const AggregateTable& table) {
  json rows = json::array();
  for (const auto& r : table.rows) {
    auto scale = [](const ScaleStats& s) { return json{{"mean", s.mean}, {"std", s.std}}; };
    rows.push_back({{"condition", r.condition},
                    {"sig", scale(r.sig)},
                    {"bak", scale(r.bak)},
                    {"ovrl", scale(r.ovrl)},
                    {"count", r.count}});
  }
  return {{"empty", table.rows.empty()}, {"total", table.total}, {"std", "population"}, {"rows", rows}};
}

RatingService::RatingService(std::vector<Stimulus> stimuli, fs::path log_path, std::uint64_t seed)
    : stimuli_(std::move(stimuli)), log_path_(std::move(log_path)), seed_(seed) {
  if (stimuli_.empty()) throw DataError("rating: the stimulus set is empty");
  for (std::size_t i = 0; i < stimuli_.size(); ++i) {
    if (!by_id_.emplace(stimuli_[i].id, i).second) throw DataError("rating: duplicate stimulus " + stimuli_[i].id);
  }
  if (log_path_.has_parent_path()) fs::create_directories(log_path_.parent_path());
  if (fs::exists(log_path_)) {
    std::istringstream lines(read_file(log_path_));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
      ++lineno;
      if (line.empty()) continue;
      json rec;
      try {
        rec = json::parse(line);
      } catch (const json::exception&) {
        // A torn final line is an unacknowledged write; anything earlier is corruption.
        if (lines.peek() == EOF) break;
        throw DataError(fmt::format("{}:{}: malformed record", log_path_.string(), lineno));
      }
      if (rec.value("v", 0) != kSchemaVersion) {
        throw DataError(fmt::format("{}:{}: unsupported schema version", log_path_.string(), lineno));
      }
      const auto type = rec.value("type", std::string());
      if (type == "session") {
        const auto id = rec.at("session_id").get<std::string>();
        sessions_[id] = rec.at("stimuli").get<std::set<std::string>>();
        next_session_ = std::max(next_session_, rec.at("seq").get<std::uint64_t>() + 1);
      } else if (type == "rating") {
        Rating r{rec.at("session_id"), rec.at("stimulus_id"), rec.at("sig"), rec.at("bak"),
                 rec.at("ovrl"), rec.at("timestamp")};
        rated_.emplace(r.session_id, r.stimulus_id);
        ratings_.emplace_back(std::move(r), rec.at("condition").get<std::string>());
      }
    }
  }
  fd_ = ::open(log_path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IoError("cannot open " + log_path_.string() + ": " + std::strerror(errno));
}

RatingService::~RatingService() {
  if (fd_ >= 0) ::close(fd_);
}

void RatingService::append(const json& record) {
  // One write(2) per record on an O_APPEND descriptor keeps lines whole.
  const std::string line = record.dump() + "\n";
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("write failed for " + log_path_.string() + ": " + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) throw IoError("fsync failed for " + log_path_.string() + ": " + std::strerror(errno));
}

Session RatingService::create_session() {
  std::lock_guard lock(mu_);
  const std::uint64_t seq = next_session_;
  Session s;
  s.id = fmt::format("s{:06d}", seq);
  for (const auto& st : stimuli_) s.stimuli.push_back(st.id);
  Rng rng = Rng::derive(seed_, seq);
  for (std::size_t i = s.stimuli.size(); i > 1; --i) std::swap(s.stimuli[i - 1], s.stimuli[rng.below(i)]);
  append({{"v", kSchemaVersion}, {"type", "session"}, {"seq", seq}, {"session_id", s.id}, {"stimuli", s.stimuli}});
  ++next_session_;
  sessions_[s.id] = std::set<std::string>(s.stimuli.begin(), s.stimuli.end());
  return s;
}

void RatingService::submit(const Rating& r) {
  for (int v : {r.sig, r.bak, r.ovrl}) {
    if (v < 1 || v > 5) throw RequestError(400, fmt::format("score {} outside 1..5", v));
  }
  std::lock_guard lock(mu_);
  const auto sess = sessions_.find(r.session_id);
  if (sess == sessions_.end()) throw RequestError(404, "unknown session " + r.session_id);
  const auto st = by_id_.find(r.stimulus_id);
  if (st == by_id_.end() || !sess->second.count(r.stimulus_id)) {
    throw RequestError(404, "unknown stimulus " + r.stimulus_id + " for session " + r.session_id);
  }
  if (rated_.count({r.session_id, r.stimulus_id})) {
    throw RequestError(409, "stimulus " + r.stimulus_id + " already rated in session " + r.session_id);
  }
  const auto& condition = stimuli_[st->second].condition;
  append({{"v", kSchemaVersion},
          {"type", "rating"},
          {"session_id", r.session_id},
          {"stimulus_id", r.stimulus_id},
          {"condition", condition},
          {"sig", r.sig},
          {"bak", r.bak},
          {"ovrl", r.ovrl},
          {"timestamp", r.timestamp}});
  rated_.emplace(r.session_id, r.stimulus_id);
  ratings_.emplace_back(r, condition);
}

AggregateTable RatingService::aggregate() const {
  std::lock_guard lock(mu_);
  struct Acc {
    std::vector<double> sig, bak, ovrl;
  };
  std::map<std::string, Acc> by_condition;
  for (const auto& [r, c] : ratings_) {
    auto& a = by_condition[c];
    a.sig.push_back(r.sig);
    a.bak.push_back(r.bak);
    a.ovrl.push_back(r.ovrl);
  }
  AggregateTable t;
  for (const auto& [c, a] : by_condition) {
    t.rows.push_back({c, stats_of(a.sig), stats_of(a.bak), stats_of(a.ovrl), static_cast<int>(a.sig.size())});
    t.total += t.rows.back().count;
  }
  std::stable_sort(t.rows.begin(), t.rows.end(), [](const auto& a, const auto& b) {
    return condition_key(a.condition) < condition_key(b.condition);
  });
  return t;
}

const Stimulus* RatingService::find_stimulus(const std::string& id) const {
  const auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &stimuli_[it->second];
}

std::size_t RatingService::rating_count() const {
  std::lock_guard lock(mu_);
  return ratings_.size();
}

Rating parse_rating(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    throw RequestError(400, "malformed JSON");
  }
  if (!j.is_object()) throw RequestError(400, "expected a JSON object");
  Rating r;
  r.session_id = string_field(j, "session_id");
  r.stimulus_id = string_field(j, "stimulus_id");
  r.sig = score_field(j, "sig");
  r.bak = score_field(j, "bak");
  r.ovrl = score_field(j, "ovrl");
  r.timestamp = std::chrono::duration_cast<std::chrono::seconds>(
                    std::chrono::system_clock::now().time_since_epoch())
                    .count();
  return r;
}

struct HttpServer::Impl {
  httplib::Server server;
};

namespace {

void send_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", message}}.dump(), "application/json");
}

}  // namespace

HttpServer::HttpServer(RatingService& service, fs::path ui_dir) : impl_(std::make_unique<Impl>()) {
  auto& srv = impl_->server;
  // httplib's default also sets SO_REUSEPORT, which would let a second
  // server share a busy port instead of failing.
  srv.set_socket_options([](int sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  srv.Get("/api/session", [&service](const httplib::Request&, httplib::Response& res) {
    const auto s = service.create_session();
    res.set_content(json{{"session_id", s.id}, {"stimuli", s.stimuli}}.dump(), "application/json");
  });
  srv.Get(R"(/api/stimulus/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
    const Stimulus* s = service.find_stimulus(req.matches[1]);
    if (!s) return send_error(res, 404, "unknown stimulus");
    try {
      res.set_content(read_file(s->wav_path), "audio/wav");
    } catch (const IoError& e) {
      send_error(res, 500, e.what());
    }
  });
  srv.Post("/api/rating", [&service](const httplib::Request& req, httplib::Response& res) {
    try {
      service.submit(parse_rating(req.body));
      res.set_content(R"({"ok":true})", "application/json");
    } catch (const RequestError& e) {
      send_error(res, e.status(), e.what());
    } catch (const IoError& e) {
      send_error(res, 500, e.what());
    }
  });
  srv.Get("/api/results", [&service](const httplib::Request&, httplib::Response& res) {
    res.set_content(to_json(service.aggregate()).dump(), "application/json");
  });
  if (!ui_dir.empty() && fs::is_directory(ui_dir)) {
    srv.set_mount_point("/", ui_dir.string());
  } else {
    srv.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("<!doctype html><title>hlab rating</title><p>No rating UI bundle installed. "
                      "The JSON API is under /api.</p>\n",
                      "text/html");
    });
  }
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  if (port == 0) {
    const int p = srv.bind_to_any_port(host);
    if (p < 0) throw IoError("cannot bind " + host);
    return p;
  }
  if (!srv.bind_to_port(host, port)) throw IoError(fmt::format("cannot bind {}:{} (port busy?)", host, port));
  return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }
void HttpServer::stop() { impl_->server.stop(); }
void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

void serve(const ServeConfig& cfg) {
  RatingService service(default_playlist(load_stimuli(cfg.stimuli_dir)),
                        cfg.ratings_log.empty() ? cfg.stimuli_dir / "ratings.jsonl" : cfg.ratings_log, cfg.seed);
  HttpServer server(service, cfg.ui_dir);
  const int port = server.bind(cfg.host, cfg.port);
  fmt::print("serving on http://{}:{}/\n", cfg.host, port);
  std::fflush(stdout);
  server.run();
}

}  // namespace hlab::rating
