"""Re-flood events and HELP traffic against sigma on random graphs, per T-norm."""

from __future__ import annotations

import argparse
import random
from itertools import combinations

from uhelp.cli import PACKAGE_DATA
from uhelp.ontology import load_hierarchy_file
from uhelp.protocol import FloodParams, TNorm
from uhelp.simnet import Delay, DelayModel, ScriptAction, SimConfig, build_graph, run


def random_spec(rng: random.Random, n: int, p: float) -> dict:
    nodes = [f"m{i}" for i in range(n)]
    edges = [[a, b] for a, b in combinations(nodes, 2) if rng.random() < p]
    trust = [[a, b, round(rng.random(), 3)] for a, b in edges] + [[b, a, round(rng.random(), 3)] for a, b in edges]
    return {"nodes": nodes, "edges": edges, "trust": trust}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--graphs", type=int, default=200)
    parser.add_argument("--nodes", type=int, default=10)
    parser.add_argument("--density", type=float, default=0.4)
    parser.add_argument("--sigmas", default="0,0.05,0.1,0.2,0.4")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    tax = load_hierarchy_file(PACKAGE_DATA / "kids_taxonomy.json")
    mer = load_hierarchy_file(PACKAGE_DATA / "care_meronomy.json")
    rng = random.Random(args.seed)
    specs = [random_spec(rng, args.nodes, args.density) for _ in range(args.graphs)]
    help_args = {"task_id": "t1", "activity": "picking up", "object": "toddler", "within": 100, "tau": 0.2, "hops": 4}

    print("tnorm,sigma,runs_with_reflood,re_flood_events,help_messages")
    for tnorm in TNorm:
        for sigma in (float(s) for s in args.sigmas.split(",")):
            runs = events = helps = 0
            for i, spec in enumerate(specs):
                cfg = SimConfig(seed=i, delay=Delay(DelayModel.UNIFORM, low=0.1, high=2.0),
                                script=(ScriptAction(0, "m0", "help", help_args),),
                                flood=FloodParams(sigma=sigma, tnorm=tnorm))
                m = run(cfg, build_graph(spec, tax, mer)).metrics
                runs += m.re_flood_events > 0
                events += m.re_flood_events
                helps += m.messages_by_type["HELP"]
            print(f"{tnorm.value},{sigma},{runs},{events},{helps}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
