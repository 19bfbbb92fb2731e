"""Simulate typing in two rooms and run the three attacks on the same traces.

Run: python demos/attack_tour.py   (about 30 s on one core)
"""

from bfipin import evaluation as E, simulator as sim
from bfipin.attacks import model as M

traces = sim.simulate_grid(rooms=(0, 1), positions=(0, 1), pins_per_domain=10, seed=1, snr_db=30.0)
print(f"{len(traces)} traces over {len({t.domain for t in traces})} domains, "
      f"{traces[0].n_samples} reports in the first one")

# template matching trained and tested on the same traces: repeatability only
rep = E.evaluate("windtalker", traces, None, E.Ablation(context=0))
print(rep.table(), "\n")

# structure matching needs no training at all
rep = E.evaluate("wink", traces[:8], None, E.Ablation())
print(rep.table(), "\n")

# learned classifier, one leave-room-and-position-out instance
config = M.preset("easy", epochs=30)
rep = E.evaluate("model", traces, "RP", E.Ablation(), max_instances=1, config=config)
print(rep.table())
acc = rep.per_digit_accuracy("first:room")  # None for digits that never occur
print("per-digit accuracy on the held-out room:",
      " ".join(f"{d}:{a:.2f}" for d, a in enumerate(acc) if a is not None))
