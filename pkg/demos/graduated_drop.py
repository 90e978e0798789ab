"""How fast is a partial dropper caught?

The same funnel as the blackhole demo, but node 1 drops only a fraction of
what it relays. Light droppers settle at a trust above theta and are never
voted out; heavy droppers are, and the heavier the sooner.

Run:  python demos/graduated_drop.py [replicas]
(the acceptance suite uses 10 replicas; 2 keeps this demo around a minute)
"""
import sys
import time

from wsntrust import harness, load_preset

replicas = int(sys.argv[1]) if len(sys.argv) > 1 else 2
rates = ["0.25", "0.5", "0.75", "1.0"]
sc = load_preset("graduated-drop")

t0 = time.time()
rows = harness.sweep(sc, "attack.1.drop_rate", rates, replicas=replicas)
print(f"{len(rates)} drop rates x {replicas} replicas in {time.time() - t0:.0f} s\n")

print(f"{'drop':>5} {'detected':>9} {'TTI (epochs)':>13} {'steady trust':>13} {'delivery':>9}")
for r in rows:
    m = r.mean
    tti = m["mean_time_to_isolation"] / sc.epoch_len
    print(f"{r.value:>5} {m['detection_rate']:9.2f} {tti:13.1f} {m['attacker_trust']:13.3f} "
          f"{m['delivery_ratio']:9.2f}")

# nan means "undefined here": no isolation to time, or nobody left trusting
print("\nnan TTI: never isolated. nan trust: isolated by every neighbour before the last fifth.")
print(harness.sweep_csv("attack.1.drop_rate", rows).splitlines()[0][:80] + " ...")
