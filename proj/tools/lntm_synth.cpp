// Regenerates the bundled synthetic benchmark streams under data/streams/:
// three 3-task streams with identical / partial / disjoint vocabulary overlap
// and a sparse final task. Committed outputs are deterministic; rerunning
// this tool reproduces them byte for byte.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "lntm/synth.hpp"

namespace fs = std::filesystem;

namespace {

void write_conf(const std::string& overlap, const fs::path& dir) {
  std::ofstream out(dir / "stream.conf");
  out << "# synthetic benchmark stream: " << overlap
      << " vocabulary overlap, sparse final task\n"
      << "name = synth-" << overlap << "\n"
      << "seed = 1\n"
      << "hidden = 16\n"
      << "activation = tanh\n"
      << "learning_rate = 0.05\n"
      << "epochs = 25\n"
      << "patience = 10\n"
      << "ir_fraction = 0.02\n"
      << "approaches = tr, embtf, sal\n"
      << "\n";
  for (const char* task : {"task_a", "task_b", "task_c"}) {
    out << "[task " << task << "]\n"
        << "corpus = " << task << ".jsonl\n"
        << "min_token_len = 1\n"
        << "lambda_tr = 0.01\n"
        << "lambda_embtf = 0.5\n"
        << "lambda_sal = 1.0\n"
        << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  fs::path root = argc > 1 ? argv[1] : "data/streams";
  for (const std::string overlap : {"identical", "partial", "disjoint"}) {
    fs::path dir = root / overlap;
    fs::create_directories(dir);
    auto tasks = lntm::synth::bundled_stream(overlap);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      auto docs = lntm::synth::generate_task(tasks[i], 12, 7700 + i);
      lntm::synth::write_jsonl(docs, (dir / (tasks[i].name + ".jsonl")).string());
    }
    write_conf(overlap, dir);
    std::printf("wrote %s\n", dir.string().c_str());
  }
  return 0;
}
