// Line-delimited JSON scorer used by the protocol tests.
//   stub_scorer constant V   every response scores V
//   stub_scorer by_start     score = frac(start * 7.31), answered in reverse order per burst
//   stub_scorer range        scores 1.5
//   stub_scorer error        per-request {"id","error"} responses
//   stub_scorer garbage      prints a non-JSON line
//   stub_scorer die          exits after reading one request
//   stub_scorer stall        never answers
#include <poll.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "json.hpp"

using json = nlohmann::json;

namespace {

bool more_pending(int ms) {
  pollfd p{STDIN_FILENO, POLLIN, 0};
  return ::poll(&p, 1, ms) > 0;
}

bool read_line(std::string& line) {
  line.clear();
  char c;
  while (true) {
    ssize_t n = ::read(STDIN_FILENO, &c, 1);
    if (n <= 0) return !line.empty();
    if (c == '\n') return true;
    line.push_back(c);
  }
}

void emit(const json& j) {
  std::string s = j.dump() + "\n";
  if (::write(STDOUT_FILENO, s.data(), s.size()) < 0) std::_Exit(1);
}

}  // namespace

int main(int argc, char** argv) {
  std::string mode = argc > 1 ? argv[1] : "constant";
  double value = argc > 2 ? std::stod(argv[2]) : 0.5;
  std::string line;

  if (mode == "by_start") {
    // Collect whatever arrives in one burst, then answer it backwards.
    while (true) {
      std::vector<json> burst;
      if (!read_line(line)) return 0;
      burst.push_back(json::parse(line));
      while (more_pending(50) && read_line(line)) burst.push_back(json::parse(line));
      for (auto it = burst.rbegin(); it != burst.rend(); ++it) {
        double start = (*it)["start"].get<double>();
        double s = start * 7.31;
        emit({{"id", (*it)["id"]}, {"score", s - std::floor(s)}});
      }
    }
  }

  while (read_line(line)) {
    json req = json::parse(line);
    if (mode == "die") return 7;
    if (mode == "stall") continue;
    if (mode == "garbage") {
      std::string s = "this is not json\n";
      if (::write(STDOUT_FILENO, s.data(), s.size()) < 0) return 1;
    } else if (mode == "error") {
      emit({{"id", req["id"]}, {"error", "cannot open " + req["audio_path"].get<std::string>()}});
    } else if (mode == "range") {
      emit({{"id", req["id"]}, {"score", 1.5}});
    } else {
      emit({{"id", req["id"]}, {"score", value}});
    }
  }
  return 0;
}
