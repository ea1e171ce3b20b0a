// Simulates a short atom-transit record, finds the transits and prints the
// averaged signals. Usage: transit_record [duration_s] [seed]

#include <cstdio>
#include <cstdlib>

#include "router/router.hpp"

int main(int argc, char** argv) {
  using namespace router;
  const double duration = argc > 1 ? std::atof(argv[1]) : 0.01;
  const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1;
  const SystemParams p = with_nbar(SystemParams{}, 0.093);
  TransitModel none;
  none.arrival_rate = 0;
  const auto rec = simulate_record(p, {}, {}, duration, seed);
  const auto empty = simulate_record(p, none, {}, duration, seed + 1);
  const auto events = detect_transits(rec, {});
  std::printf("%zu transits simulated, %zu detected, %zu clicks\n", rec.truth.size(), events.size(), rec.events.size());
  const auto score = score_detection(rec, events);
  std::printf("recall %.2f, false positives %.2f\n", score.recall, score.false_positive_fraction);
  try {
    const auto sig = averaged_signals(rec, events, 1.0, normalization_from_record(empty));
    std::printf("%8s %8s %8s\n", "t_us", "T", "R");
    for (std::size_t i = 0; i < sig.t_us.size(); ++i) std::printf("%8.2f %8.3f %8.3f\n", sig.t_us[i], sig.T[i], sig.R[i]);
  } catch (const StatisticsError& e) {
    std::printf("too little data: %s\n", e.what());
    return 1;
  }
}
