"""Compare the residue 2-form with the canonical one on a mixed instance.

Prints the matrix of differences over every coordinate pair: rows and
columns touching a fiber coordinate (q_j, p_j) vanish exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

from isomono.connection import instance_from_json
from isomono.exactalg import format_rational
from isomono.symplectic import OmegaEvaluator, coordinate_directions, omega_matrix

INSTANCE = Path(__file__).resolve().parents[1] / "instances" / "mixed.json"


def main() -> None:
    inst = instance_from_json(json.loads(INSTANCE.read_text()))
    ev = OmegaEvaluator(inst)
    names = coordinate_directions(inst)
    kr = omega_matrix(names, ev.krichever)
    can = omega_matrix(names, ev.canonical)
    width = max(len(n) for n in names)
    for name, r1, r2 in zip(names, kr, can):
        row = "  ".join(f"{format_rational(a - b):>8}" for a, b in zip(r1, r2))
        print(f"{name:>{width}}  {row}")


if __name__ == "__main__":
    main()
