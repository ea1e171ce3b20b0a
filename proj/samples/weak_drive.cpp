// Resonant transmission, reflection and equal-time g2 with and without the atom.

#include <cstdio>

#include "router/router.hpp"

int main() {
  using namespace router;
  const SystemParams p = with_nbar(SystemParams{}, 1e-6);
  std::printf("C = %.3f, Gamma/2pi = %.2f MHz\n", cooperativity(p), enhanced_decay(p));
  const double in = input_flux(p);
  for (bool atom : {true, false}) {
    const auto st = solve_steady_state(p, atom);
    std::printf("%-9s T0 = %.5f  R0 = %.5f  g2T(0) = %.4g  g2R(0) = %.4g\n", atom ? "atom" : "no atom",
                st.flux(Output::Transmitted) / in, st.flux(Output::Reflected) / in, st.g2_zero(Output::Transmitted),
                st.g2_zero(Output::Reflected));
  }
  // Antibunched reflection relaxes on 1/Gamma.
  const double Gamma = angular(enhanced_decay(p));
  std::vector<double> tau;
  for (int i = 0; i <= 6; ++i) tau.push_back(0.5 * i / Gamma);
  const auto r = g2_curves(p, tau, Output::Reflected);
  for (std::size_t i = 0; i < tau.size(); ++i) std::printf("Gamma tau = %.1f  g2R = %.4f\n", Gamma * tau[i], r.g2[i]);
}
