// Serves a mock model over the chat-completions wire protocol, for
// exercising the CLI end to end without a real endpoint.

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <iostream>

#include "gvgap/facts/fact.hpp"
#include "gvgap/mock/mock.hpp"

using namespace gvgap;

int main(int argc, char** argv) {
  CLI::App app{"mock chat-completions server"};
  std::string role = "subject", host = "127.0.0.1", update = "multiverse";
  int port = 0;
  std::vector<std::string> queries, update_queries;
  bool independent = false;
  double judge_error = 0.0;
  std::uint64_t seed = 7;
  app.add_option("--role", role, "subject, judge or synth")->check(CLI::IsMember({"subject", "judge", "synth"}));
  app.add_option("--host", host);
  app.add_option("--port", port, "0 picks a free port");
  app.add_option("--queries", queries, "query JSONL files the subject answers");
  app.add_option("--update-queries", update_queries, "update-phase query JSONL files");
  app.add_option("--update", update)->check(CLI::IsMember({"multiverse", "clean"}));
  app.add_flag("--independent", independent, "independent draws per query");
  app.add_option("--judge-error", judge_error);
  app.add_option("--seed", seed);
  CLI11_PARSE(app, argc, argv);

  std::shared_ptr<mock::ScriptedTransport> model;
  try {
    if (role == "subject") {
      mock::SubjectProfile profile;
      profile.coupled = !independent;
      profile.update = update == "clean" ? mock::UpdateBehaviour::clean : mock::UpdateBehaviour::multiverse;
      profile.seed = seed;
      auto s = std::make_shared<mock::SubjectModel>(profile);
      for (const auto& q : queries) s->add_queries(facts::read_queries(q));
      for (const auto& q : update_queries) s->add_queries(facts::read_queries(q), true);
      model = s;
    } else if (role == "judge") {
      model = std::make_shared<mock::JudgeModel>(mock::JudgeProfile{judge_error, seed});
    } else {
      model = std::make_shared<mock::SynthFixtureModel>();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  httplib::Server server;
  server.Post(R"(/v1/chat/completions)", [&](const httplib::Request& req, httplib::Response& res) {
    const auto r = model->post_json("", req.path, req.body, {}, std::chrono::milliseconds(0));
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  server.Get("/health", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });
  server.Post("/shutdown", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content("bye", "text/plain");
    server.stop();
  });

  const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) {
    std::cerr << "error: cannot bind " << host << ":" << port << "\n";
    return 1;
  }
  std::cout << bound << std::endl;
  server.listen_after_bind();
  return 0;
}
