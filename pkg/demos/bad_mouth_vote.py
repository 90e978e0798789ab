"""Lying about an honest node: when does the lie win?

Node 1 is honest. Three of its seven neighbours collude and vote "isolate"
in every round. Honest voters keep trusting node 1, so a minority of liars
loses every tally. Add a fourth colluder and the liars are the majority.

Run:  python demos/bad_mouth_vote.py [seeds]
"""
import sys

from wsntrust import World, loads_scenario
from wsntrust.metrics import isolation_fraction
from wsntrust.scenario import preset_text

seeds = range(1, 1 + (int(sys.argv[1]) if len(sys.argv) > 1 else 5))


def scenario(extra):
    text = preset_text("bad-mouth")
    for node in extra:
        text += f"\n[attack.{node}]\nnode = {node}\nactivate_epoch = 5\ncollusion_group = 1\n"
    return loads_scenario(text)


for extra in ([], [5]):
    sc = scenario(extra)
    target = sc.collusion[1].target
    members = sc.collusion[1].members
    shares = []
    for seed in seeds:
        w = World(sc, seed).run()
        shares.append(isolation_fraction(w, target))
    nbrs = len(World(sc).topo.neighbors(target) - {0})
    print(f"colluders {list(members)} ({len(members)}/{nbrs} of the neighbourhood)")
    print(f"  share of honest neighbours isolating node {target}, per seed: "
          + " ".join(f"{s:.2f}" for s in shares))

# votes never touch evidence counters, so even the winning lie leaves trust at 1
w = World(scenario([5]), 1).run()
print("\ntrust in node 1 held by node 6 after the majority run:", w.nodes[6].table.trust(1))
