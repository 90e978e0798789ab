"""Watching a gateway turn into a blackhole.

Node 1 is the only relay between the sensing region and the sink. At epoch 50
it starts dropping everything it should forward. Each neighbour watches its own
packets go unforwarded, its trust in node 1 sinks, and once enough of them
agree the neighbourhood votes node 1 out.

Run:  python demos/blackhole_walkthrough.py [seed]
"""
import sys

import numpy as np

from wsntrust import World, load_preset
from wsntrust.metrics import compute, honest_neighbors

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 1
sc = load_preset("blackhole", {"scenario.seed": str(seed)})
world = World(sc).run()
bad = sc.bad_nodes()[0]
observers = sorted(honest_neighbors(world, bad))
print(f"seed {seed}: node {bad} watched by honest neighbours {observers}")

# trust[epoch, k] for observer k; an isolated record stays frozen at its last value
epochs = range(44, 72)
trust = np.full((len(epochs), len(observers)), np.nan)
status = {}
for ep, obs, subj, _p, _n, t, st in world.trajectory:
    if subj == bad and obs in observers and ep in epochs:
        trust[ep - epochs.start, observers.index(obs)] = t
        status[(ep, obs)] = st

print("\nepoch  " + " ".join(f"{o:>6}" for o in observers))
for i, ep in enumerate(epochs):
    cells = []
    for k, o in enumerate(observers):
        mark = {"isolated": "x", "suspected": "?"}.get(status.get((ep, o)), " ")
        cells.append(f"{trust[i, k]:5.3f}{mark}")
    print(f"{ep:5d}  " + " ".join(cells))
print("(? = suspected, x = isolated; theta is", sc.trust.theta_trust, ")")

# before activation nothing moves; afterwards every column only goes down
before = trust[: 50 - epochs.start]
print("\nall trust 1.0 before activation:", bool(np.all(before == 1.0)))
steps = np.diff(trust[50 - epochs.start:], axis=0)
print("largest upward step after activation:", float(np.nanmax(steps)))

iso = sorted({(t, o, how) for t, o, s, how in world.isolations if s == bad})
print(f"\n{len(iso)} isolations of node {bad}; first at tick {iso[0][0]}, "
      f"{(iso[0][0] - sc.activation_of(bad)) / sc.epoch_len:.1f} epochs after activation")
m = compute(world)
print(f"detection {m.detection_rate:.2f}, false positives {m.false_positive_rate:.2f}, "
      f"delivery {m.delivery_ratio:.2f}")
