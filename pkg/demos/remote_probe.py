"""Asking about a node you cannot hear.

Four relays on a line, 30 m apart with a 30 m radio. Node 1 asks whether node 4
(90 m away) is trustworthy. The probe needs about three hops, and each hop
only forwards it to a neighbour it trusts. Isolate the middle of the line and
the question has no trusted path.

Run:  python demos/remote_probe.py
"""
from wsntrust import World, loads_scenario
from wsntrust.trust import estimate_hops

LINE = """
[scenario]
run_epochs = 5
epoch_len = 10000
sensing_period = 2000
[topology]
node_count = 5
field_w = 100
field_h = 40
radio_range = 30
sink = 0
positions = 0:0,30; 1:0,0; 2:30,0; 3:60,0; 4:90,0
"""

print("estimated hops for 90 m:", estimate_hops((0, 0), (90, 0), 30))
print("estimated hops for 95 m:", estimate_hops((0, 0), (95, 0), 30))

for cut in (False, True):
    w = World(loads_scenario(LINE), 1)
    w.run(until=25_000)   # let beacons fill the neighbour tables
    if cut:
        for o in (1, 3):
            w.nodes[o].table.isolate(2, w.sim.now)
    probe = w.remote_trust_query(1, 4)
    w.run(until=40_000)
    label = "node 2 isolated" if cut else "everyone trusted"
    print(f"{label:>17}: probe budget {probe.budget}, attempts {probe.attempts} -> {probe.result}")
