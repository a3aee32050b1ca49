"""Muller's ratchet in a finite Wright-Fisher population.

Without compensatory mutations the best class is lost again and again and
the mean load kappa1 climbs in steps ("clicks"). With a small back-mutation
rate gamma the lost classes are regained, clicks are undone and kappa1 stays
close to lam / (alpha + gamma).

    python3 demos/ratchet_clicks.py
"""

from muller_ratchet import ModelParams
from muller_ratchet.wright_fisher import PopulationState, RunConfig, run

from _plot import plt, save

N = 1000
GENERATIONS = 20 * N


def main():
    runs = {}
    for gamma in (0.0, 1e-3):
        params = ModelParams(alpha=0.03, lam=0.1, gamma=gamma, population_size=N)
        rec = run(PopulationState.monomorphic(N, 0, 128), params,
                  RunConfig(seed=1, generations=GENERATIONS, record_every=20, k_max=128))
        runs[gamma] = rec
        late = rec.kappa1[rec.times >= GENERATIONS / 2].mean()
        print(f"gamma={gamma:g}: {len(rec.clicks)} clicks in {GENERATIONS} generations "
              f"({len(rec.clicks) / (GENERATIONS / N):.2f} per N generations), "
              f"late mean kappa1 {late:.2f}, lam/(alpha+gamma) = {params.equilibrium_mean:.2f}")

    if plt is None:
        return
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for gamma, rec in runs.items():
        ax.plot(rec.times / N, rec.kappa1, lw=0.8, label=f"gamma = {gamma:g}")
    ax.set_xlabel("time (units of N generations)")
    ax.set_ylabel("mean number of mutations")
    ax.legend()
    save(fig, "ratchet_clicks.png")


if __name__ == "__main__":
    main()
