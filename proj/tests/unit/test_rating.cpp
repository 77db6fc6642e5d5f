// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "hlab/dsp/wav_io.hpp"
#include "hlab/rating/service.hpp"

using namespace hlab;
using namespace hlab::rating;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kConditions{"alpha=0.00", "noisy", "alpha=1.00", "alpha=0.50", "alpha=0.20",
                                           "alpha=0.10"};

// Stimulus directory with `clips` files per condition.
fs::path make_stimuli(const std::string& name, int clips = 4) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir / "wav");
  json list = json::array();
  for (const auto& c : kConditions) {
    for (int i = 0; i < clips; ++i) {
      const std::string id = c + "-" + std::to_string(i);
      std::string file = id;
      std::replace(file.begin(), file.end(), '=', '_');
      dsp::write_wav(dir / "wav" / (file + ".wav"), dsp::Waveform(std::vector<double>(160, 0.01 * (i + 1)), 16000));
      list.push_back({{"id", id}, {"condition", c}, {"wav", "wav/" + file + ".wav"}, {"clip", std::to_string(i)}});
    }
  }
  std::ofstream(dir / "stimuli.json") << list.dump();
  return dir;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream is(p);
  return static_cast<std::size_t>(std::count(std::istreambuf_iterator<char>(is), {}, '\n'));
}

int expect_status(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const RequestError& e) {
    return e.status();
  }
  return 200;
}

}  // namespace

TEST_CASE("default playlist has three files from each of five conditions") {
  const auto dir = make_stimuli("hlab_rating_pl");
  const auto all = load_stimuli(dir);
  CHECK(all.size() == 24);
  const auto pl = default_playlist(all);
  REQUIRE(pl.size() == 15);
  CHECK(pl[0].condition == "noisy");
  CHECK(pl[3].condition == "alpha=1.00");
  CHECK(pl[6].condition == "alpha=0.50");
  CHECK(pl[9].condition == "alpha=0.20");
  CHECK(pl[12].condition == "alpha=0.10");
  fs::remove_all(dir);
}

TEST_CASE("stimulus loading rejects missing files") {
  const auto dir = make_stimuli("hlab_rating_missing", 1);
  fs::remove(dir / "wav" / "noisy-0.wav");
  CHECK_THROWS_AS(load_stimuli(dir), DataError);
  CHECK_THROWS_AS(RatingService({}, dir / "r.jsonl"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("sessions, validation, aggregation and durability") {
  const auto dir = make_stimuli("hlab_rating_svc");
  const auto log = dir / "ratings.jsonl";
  const auto stimuli = default_playlist(load_stimuli(dir));
  std::string first_id;
  {
    RatingService svc(stimuli, log, 7);
    CHECK(svc.aggregate().rows.empty());
    CHECK(to_json(svc.aggregate())["empty"] == true);
    const auto a = svc.create_session();
    const auto b = svc.create_session();
    first_id = a.id;
    CHECK(a.stimuli.size() == 15);
    CHECK(a.id != b.id);
    auto sa = a.stimuli, sb = b.stimuli;
    CHECK(sa != sb);
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    CHECK(sa == sb);

    const auto lines = line_count(log);
    CHECK(expect_status([&] { svc.submit({a.id, a.stimuli[0], 6, 3, 4}); }) == 400);
    CHECK(expect_status([&] { svc.submit({a.id, a.stimuli[0], 4, 0, 4}); }) == 400);
    CHECK(line_count(log) == lines);
    CHECK(expect_status([&] { svc.submit({"s999999", a.stimuli[0], 4, 3, 4}); }) == 404);
    CHECK(expect_status([&] { svc.submit({a.id, "nope", 4, 3, 4}); }) == 404);

    const std::string noisy0 = "noisy-0", noisy1 = "noisy-1";
    svc.submit({a.id, noisy0, 4, 3, 4});
    CHECK(line_count(log) == lines + 1);
    CHECK(expect_status([&] { svc.submit({a.id, noisy0, 1, 1, 1}); }) == 409);
    CHECK(line_count(log) == lines + 1);
    svc.submit({b.id, noisy0, 5, 5, 5});
    svc.submit({a.id, noisy1, 5, 1, 3});
    svc.submit({a.id, "alpha=1.00-0", 5, 5, 5});

    const auto t = svc.aggregate();
    REQUIRE(t.rows.size() == 2);
    CHECK(t.total == 4);
    CHECK(t.rows[0].condition == "noisy");
    CHECK(t.rows[0].count == 3);
    CHECK(t.rows[0].sig.mean == doctest::Approx(14.0 / 3));
    CHECK(t.rows[1].condition == "alpha=1.00");
    CHECK(t.rows[1].sig.mean == 5.0);
    CHECK(t.rows[1].sig.std == 0.0);
  }
  // Restart: everything acknowledged is still there, ids keep counting.
  RatingService again(stimuli, log, 7);
  CHECK(again.rating_count() == 4);
  CHECK(again.aggregate().total == 4);
  const auto c = again.create_session();
  CHECK(c.id != first_id);
  CHECK(c.id == "s000003");
  CHECK(expect_status([&] { again.submit({first_id, "noisy-0", 2, 2, 2}); }) == 409);
  fs::remove_all(dir);
}

TEST_CASE("population std") {
  const auto dir = make_stimuli("hlab_rating_std");
  RatingService svc(default_playlist(load_stimuli(dir)), dir / "r.jsonl");
  const auto a = svc.create_session();
  svc.submit({a.id, "noisy-0", 4, 4, 4});
  svc.submit({a.id, "noisy-1", 5, 4, 4});
  const auto row = svc.aggregate().rows.at(0);
  CHECK(row.sig.mean == 4.5);
  CHECK(row.sig.std == 0.5);
  CHECK(row.bak.std == 0.0);
  fs::remove_all(dir);
}

TEST_CASE("torn final log line is ignored") {
  const auto dir = make_stimuli("hlab_rating_torn");
  const auto stimuli = default_playlist(load_stimuli(dir));
  {
    RatingService svc(stimuli, dir / "r.jsonl");
    const auto a = svc.create_session();
    svc.submit({a.id, "noisy-0", 4, 4, 4});
  }
  std::ofstream(dir / "r.jsonl", std::ios::app) << R"({"v":1,"type":"rat)";
  RatingService svc(stimuli, dir / "r.jsonl");
  CHECK(svc.rating_count() == 1);
  fs::remove_all(dir);
}

TEST_CASE("concurrent submissions are all recorded") {
  const auto dir = make_stimuli("hlab_rating_conc");
  RatingService svc(default_playlist(load_stimuli(dir)), dir / "r.jsonl");
  std::atomic<int> acks{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      const auto s = svc.create_session();
      for (const auto& id : s.stimuli) {
        svc.submit({s.id, id, 3, 3, 3});
        ++acks;
      }
    });
  }
  for (auto& t : threads) t.join();
  CHECK(acks == 60);
  CHECK(svc.aggregate().total == 60);
  RatingService reread(default_playlist(load_stimuli(dir)), dir / "r.jsonl");
  CHECK(reread.rating_count() == 60);
  fs::remove_all(dir);
}

TEST_CASE("http flow with a scripted rater") {
  const auto dir = make_stimuli("hlab_rating_http");
  fs::create_directories(dir / "ui");
  std::ofstream(dir / "ui" / "index.html") << "<p>ui</p>";
  RatingService svc(default_playlist(load_stimuli(dir)), dir / "r.jsonl", 3);
  HttpServer server(svc, dir / "ui");
  const int port = server.bind("127.0.0.1", 0);
  std::thread th([&] { server.run(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  auto index = cli.Get("/");
  REQUIRE(index);
  CHECK(index->status == 200);
  CHECK(index->body.find("ui") != std::string::npos);
  CHECK(cli.Get("/api/stimulus/unknown")->status == 404);
  CHECK(cli.Post("/api/rating", "{not json", "application/json")->status == 400);

  // Scripted rater: noisy keeps the speech most natural, alpha 1.0 removes
  // the most background noise.
  auto scores = [](const std::string& cond) -> std::array<int, 3> {
    if (cond == "noisy") return {5, 2, 3};
    if (cond == "alpha=1.00") return {4, 5, 4};
    return {3, 3, 3};
  };
  for (int rater = 0; rater < 3; ++rater) {
    const auto sess = json::parse(cli.Get("/api/session")->body);
    const auto ids = sess["stimuli"].get<std::vector<std::string>>();
    REQUIRE(ids.size() == 15);
    for (const auto& id : ids) {
      auto wav = cli.Get("/api/stimulus/" + id);
      REQUIRE(wav);
      CHECK(wav->status == 200);
      CHECK(wav->get_header_value("Content-Type") == "audio/wav");
      CHECK(wav->body.rfind("RIFF", 0) == 0);
      const auto cond = svc.find_stimulus(id)->condition;
      const auto s = scores(cond);
      const json body = {{"session_id", sess["session_id"]}, {"stimulus_id", id}, {"sig", s[0]}, {"bak", s[1]},
                         {"ovrl", s[2]}};
      CHECK(cli.Post("/api/rating", body.dump(), "application/json")->status == 200);
    }
    const json dup = {{"session_id", sess["session_id"]}, {"stimulus_id", ids[0]}, {"sig", 1}, {"bak", 1}, {"ovrl", 1}};
    CHECK(cli.Post("/api/rating", dup.dump(), "application/json")->status == 409);
    const json bad = {{"session_id", sess["session_id"]}, {"stimulus_id", ids[0]}, {"sig", 6}, {"bak", 1}, {"ovrl", 1}};
    CHECK(cli.Post("/api/rating", bad.dump(), "application/json")->status == 400);
  }
  const auto results = json::parse(cli.Get("/api/results")->body);
  CHECK(results["total"] == 45);
  REQUIRE(results["rows"].size() == 5);
  CHECK(results["rows"][0]["condition"] == "noisy");
  double best_sig = 0, best_bak = 0;
  std::string sig_at, bak_at;
  for (const auto& r : results["rows"]) {
    CHECK(r["count"] == 9);
    if (r["sig"]["mean"].get<double>() > best_sig) best_sig = r["sig"]["mean"], sig_at = r["condition"];
    if (r["bak"]["mean"].get<double>() > best_bak) best_bak = r["bak"]["mean"], bak_at = r["condition"];
  }
  CHECK(sig_at == "noisy");
  CHECK(bak_at == "alpha=1.00");

  // A second server on the same port fails to start.
  HttpServer clash(svc, {});
  CHECK_THROWS_AS(clash.bind("127.0.0.1", port), IoError);
  server.stop();
  th.join();
  fs::remove_all(dir);
}
