"""Reusing neutral diffusion paths to answer questions about selection.

Paths simulated with alpha = 0 are reweighted by their likelihood ratio to
estimate the mean load under alpha' = 0.03. The estimate is compared with a
direct simulation at alpha', together with the effective sample size that
the reweighting leaves.

    python3 demos/change_of_measure.py
"""

import math

import numpy as np

from muller_ratchet import ModelParams, TypeDistribution
from muller_ratchet.girsanov import log_weights, reweighted_expectation
from muller_ratchet.sde import SdeConfig, ensemble_mean, run_sde_ensemble

N, T, PATHS = 50, 1.0, 5000
X0 = TypeDistribution.delta(0, 32)


def main():
    base = ModelParams(alpha=0.0, lam=0.1, gamma=1e-4, population_size=N)
    ens = run_sde_ensemble(X0, base, T, SdeConfig(seed=1, record_every=10), PATHS)
    for alpha_to in (0.01, 0.03, 0.1, 0.3):
        rw = reweighted_expectation(ens, base, alpha_to, "kappa1_at_end")
        target = ModelParams(alpha_to, base.lam, base.gamma, population_size=N)
        direct = run_sde_ensemble(X0, target, T, SdeConfig(seed=2, record_every=10), PATHS)
        m, se = ensemble_mean(direct)
        z = np.exp(log_weights(ens, base, alpha_to))
        print(f"alpha'={alpha_to:<5g} reweighted {rw.estimate:.4f} +- {rw.std_error:.4f}  "
              f"direct {m[-1]:.4f} +- {se[-1]:.4f}  "
              f"ESS {rw.effective_sample_size:7.0f}/{PATHS}  mean Z {z.mean():.3f} "
              f"+- {z.std(ddof=1) / math.sqrt(z.size):.3f}")


if __name__ == "__main__":
    main()
