"""The infinite-population type distribution, computed three ways.

An RK4 integration of the mean-field ODE, the explicit binomial/Poisson
formula and a Monte Carlo estimate from killed single-lineage paths all
describe the same law. The demo prints the distances between them and the
approach to the Poisson equilibrium with mean lam / (alpha + gamma).

    python3 demos/three_routes_to_one_law.py
"""

import numpy as np

from muller_ratchet import ModelParams, TypeDistribution
from muller_ratchet.core import poisson_profile, total_variation
from muller_ratchet.deterministic import OdeSolverConfig, closed_form, integrate
from muller_ratchet.particles import aggregate_sigma, conditioned_distribution

from _plot import plt, save

PARAMS = ModelParams(alpha=0.03, lam=0.1, gamma=1e-4)
X0 = TypeDistribution.delta(0, 64)


def main():
    t = 5.0
    ode = integrate(PARAMS, X0, t, OdeSolverConfig(record_every=10**9)).final
    exact = closed_form(PARAMS, X0, t)
    mc = conditioned_distribution(X0, PARAMS, t, 100_000, seed=1)
    print(f"t = {t}: sup |ode - closed form| = {np.max(np.abs(ode.weights - exact.weights)):.2e}")
    print(f"        TV(particles, closed form) = {total_variation(mc.distribution, exact):.4f} "
          f"(3 sigma = {3 * aggregate_sigma(mc.std_errors):.4f}, survival {mc.survival_rate:.3f})")

    target = poisson_profile(PARAMS.equilibrium_mean, 64)
    times = [10, 50, 200, 1000, 5000]
    for s in times:
        print(f"t = {s:>5}: TV(closed form, Poisson({PARAMS.equilibrium_mean:.3f})) = "
              f"{total_variation(closed_form(PARAMS, X0, s), target):.2e}")

    if plt is None:
        return
    k = np.arange(16)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for s in times[:4]:
        ax.plot(k, closed_form(PARAMS, X0, s).weights[:16], marker="o", ms=3, label=f"t = {s}")
    ax.plot(k, target.weights[:16], "k--", label="equilibrium")
    ax.set_xlabel("number of mutations k")
    ax.set_ylabel("frequency")
    ax.legend()
    save(fig, "three_routes.png")


if __name__ == "__main__":
    main()
