"""Flow the position of a regular point and watch monodromy traces.

Integrates 100 RK4 steps of size 1e-3 and prints, every 20 steps, the
apparent points and the traces around t1, t2 and a loop enclosing both.
Takes about half a minute.
"""

from __future__ import annotations

import json
from pathlib import Path

from isomono.connection import assemble_normal_form, instance_from_json, to_E1
from isomono.isoflow import DeformationDirection, Loop, flow, monodromy_trace, state_instance

INSTANCE = Path(__file__).resolve().parents[1] / "instances" / "flow_regular.json"
LOOPS = {
    "t1": Loop(0.5 + 2j, (0j,), 0.3),
    "t2": Loop(0.5 + 2j, (1 + 0j,), 0.3),
    "t1+t2": Loop(0.5 + 2j, (0.5 + 0j,), 0.8),
}


def main() -> None:
    inst = instance_from_json(json.loads(INSTANCE.read_text()))
    d = DeformationDirection.parse("t:3")
    for k, state in enumerate(flow(inst, d, 1e-3, 100)):
        if k % 20:
            continue
        exact = state_instance(inst, d, state)
        conn = to_E1(assemble_normal_form(exact.sing, exact.darboux))
        traces = "  ".join(f"{name}: {monodromy_trace(conn, loop):.9f}" for name, loop in LOOPS.items())
        print(f"s={state.s:.3f} q={tuple(round(q, 6) for q in state.q)}  {traces}")


if __name__ == "__main__":
    main()
