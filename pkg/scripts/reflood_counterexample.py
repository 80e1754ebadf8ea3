"""Smallest graph where the Min T-norm still re-floods.

A trusts B weakly (0.5) and C strongly (0.9); C trusts B 0.9. B first hears the
request directly at 0.5, then via C at min(0.9, 0.9) = 0.9, a gain above sigma.
"""

from __future__ import annotations

import argparse

from uhelp.cli import PACKAGE_DATA
from uhelp.ontology import load_hierarchy_file
from uhelp.protocol import FloodParams, TNorm
from uhelp.simnet import Delay, DelayModel, ScriptAction, SimConfig, build_graph, run

SPEC = {
    "nodes": ["A", "B", "C", "D"],
    "edges": [["A", "B"], ["A", "C"], ["C", "B"], ["B", "D"]],
    "trust": [["A", "B", 0.5], ["A", "C", 0.9], ["C", "B", 0.9], ["B", "D", 1.0]],
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sigma", type=float, default=0.1)
    args = parser.parse_args(argv)
    tax = load_hierarchy_file(PACKAGE_DATA / "kids_taxonomy.json")
    mer = load_hierarchy_file(PACKAGE_DATA / "care_meronomy.json")
    help_args = {"task_id": "t1", "activity": "picking up", "object": "toddler", "within": 40, "tau": 0.3, "hops": 3}
    for tnorm in TNorm:
        cfg = SimConfig(delay=Delay(DelayModel.FIXED, d=1.0), script=(ScriptAction(0, "A", "help", help_args),),
                        flood=FloodParams(sigma=args.sigma, tnorm=tnorm))
        result = run(cfg, build_graph(SPEC, tax, mer))
        print(f"{tnorm.value:8s} re_flood_events={result.metrics.re_flood_events} "
              f"HELP={result.metrics.messages_by_type['HELP']}")
        for line in result.trace:
            if line["kind"] == "deliver" and line["node"] == "B":
                print(f"    B <- {line['src']} pathtrust={line['pathtrust']} reflood={line['reflood']}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
