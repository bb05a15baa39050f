"""Kimura-type Hamiltonians from the order-5 ramified pole at infinity.

Builds one instance, prints the accessory constants, both Hamiltonians next
to their closed forms and the compatibility residual (exactly zero).
"""

from __future__ import annotations

from isomono.connection import assemble_normal_form
from isomono.exactalg import Rational as F, format_rational
from isomono.reference_cases import (
    kimura_closed_forms,
    kimura_compatibility,
    kimura_constants,
    kimura_hamiltonians,
    kimura_instance,
)


def main() -> None:
    inst = kimura_instance(F(2, 3), F(-1, 5), F(1, 3), F(-2, 7), F(4, 5), F(1, 9))
    K1, K2 = kimura_constants(assemble_normal_form(inst.sing, inst.darboux))
    print(f"K1 = {format_rational(K1)}, K2 = {format_rational(K2)}")
    for name, got, want in zip(("H1", "H2"), kimura_hamiltonians(inst), kimura_closed_forms(inst)):
        print(f"{name} = {format_rational(got)} (closed form {format_rational(want)})")
    print(f"compatibility residual = {format_rational(kimura_compatibility(inst))}")


if __name__ == "__main__":
    main()
