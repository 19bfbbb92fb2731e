"""Which shift hurts more: a new room or a moved router?

Trains the classifier with a room and a router position held out, for a few
seeds, and compares Top-100 on each kind of unseen domain.

Run: python demos/cross_domain.py [n_seeds]   (about 40 s per seed)
"""

import sys

import numpy as np

from bfipin import evaluation as E, simulator as sim

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 3
rows = []
for seed in range(n_seeds):
    traces = sim.simulate_grid(rooms=(0, 1, 2, 3), positions=(0, 1, 2), pins_per_domain=8,
                               seed=seed, snr_db=20.0)
    instances = E.split_instances("RP", E.Grid.from_domains(t.domain for t in traces))
    spec = instances[int(np.random.default_rng(seed).integers(len(instances)))]
    summary = E.evaluate("model", traces, [spec], seed=seed).summary()
    rows.append([summary[k]["top100_mean"] for k in ("first:room", "first:position", "second")])
    print(f"seed {seed} {spec.tag()}: " + "  ".join(f"{k} {v:.3f}" for k, v in
                                                    zip(("room", "position", "both"), rows[-1])))

mean = np.mean(rows, axis=0)
print(f"\nmean Top-100  held-out room {mean[0]:.3f}  held-out position {mean[1]:.3f}  both {mean[2]:.3f}")
