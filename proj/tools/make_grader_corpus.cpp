// Writes the grader-agreement corpus with judge replies recorded from the
// mock judge. Usage: make_grader_corpus <out.jsonl> [n] [seed] [judge_error]

#include <cstdlib>
#include <iostream>

#include "gvgap/common/jsonl.hpp"
#include "gvgap/mock/mock.hpp"

using namespace gvgap;

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: make_grader_corpus <out.jsonl> [n] [seed] [judge_error]\n";
    return 2;
  }
  const std::size_t n = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 200;
  const std::uint64_t seed = argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 2024;
  const double error = argc > 4 ? std::atof(argv[4]) : 0.01;
  try {
    auto items = mock::build_grader_corpus(n, seed);
    auto judge = std::make_shared<mock::JudgeModel>(mock::JudgeProfile{error, seed});
    gateway::Gateway gw(judge, std::make_shared<gateway::ResponseCache>());
    gateway::EndpointConfig ep;
    ep.alias = "judge";
    ep.model = "mock-judge";
    ep.temperature = 0.0;
    gateway::ChatModel model(gw, ep);
    mock::record_judge_outputs(items, model);
    std::vector<nlohmann::json> rows;
    for (const auto& i : items) rows.push_back(mock::to_json(i));
    write_jsonl(argv[1], rows);
    std::cout << rows.size() << " items -> " << argv[1] << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
