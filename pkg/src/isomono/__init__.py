"""Exact isomonodromic deformations of rank-2 meromorphic connections on the sphere.

Submodules:

* ``exactalg``: rationals, polynomials, truncated series, jets, exact linear solves
* ``connection``: companion normal form, the ``O + O(1)`` transform, apparent points
* ``localform``: formal reductions at singular and apparent points
* ``symplectic``: Krichever residue pairing, Hamiltonians, canonical forms
* ``isoflow``: isomonodromic vector fields, horizontal lifts, flows, monodromy
* ``cli``: the ``isomono`` command
"""

from __future__ import annotations

__version__ = "0.1.0"

from .connection import (
    DarbouxPoint,
    Instance,
    Kind,
    SingularityData,
    SingularPoint,
    apparent_data,
    assemble_normal_form,
    instance_from_json,
    instance_to_json,
    random_instance,
    to_E1,
    validate,
)
from .exactalg import INF, Rational
from .isoflow import DeformationDirection, delta_omega, flow, monodromy_trace, solve_upsilon, vector_field
from .localform import reduce_point
from .symplectic import canonical_omega_hat, eta_from_p, hamiltonians, krichever_omega, p_from_eta

__all__ = [
    "INF",
    "DarbouxPoint",
    "DeformationDirection",
    "Instance",
    "Kind",
    "Rational",
    "SingularPoint",
    "SingularityData",
    "apparent_data",
    "assemble_normal_form",
    "canonical_omega_hat",
    "delta_omega",
    "eta_from_p",
    "flow",
    "hamiltonians",
    "instance_from_json",
    "instance_to_json",
    "krichever_omega",
    "monodromy_trace",
    "p_from_eta",
    "random_instance",
    "reduce_point",
    "solve_upsilon",
    "to_E1",
    "validate",
    "vector_field",
]
