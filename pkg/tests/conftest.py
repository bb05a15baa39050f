from __future__ import annotations

import random

from hypothesis import HealthCheck, settings, strategies as st
import pytest

from isomono.connection import DarbouxPoint, Instance, Kind, random_instance, validate
from isomono.exactalg import Rational

settings.register_profile(
    "isomono",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("isomono")

R, U, A = Kind.REGULAR, Kind.UNRAMIFIED, Kind.RAMIFIED

# (finite local types, infinity type) covering every kind at least once
SHAPES = [
    ([(R, 1), (R, 1), (R, 1)], (U, 2)),
    ([(U, 2), (R, 1), (R, 1)], (R, 1)),
    ([(R, 1), (A, 2), (U, 2)], (A, 2)),
    ([(R, 1), (R, 1)], (A, 3)),
    ([(U, 2), (A, 2)], (R, 1)),
    ([(R, 1), (U, 3)], (R, 1)),
]


def rationals(height: int = 30, nonzero: bool = False) -> st.SearchStrategy[Rational]:
    num = st.integers(-height, height)
    if nonzero:
        num = num.filter(bool)
    return st.builds(Rational, num, st.integers(1, height))


def make_instance(seed: int, shape: int) -> Instance:
    finite, inf = SHAPES[shape % len(SHAPES)]
    return random_instance(random.Random(seed), finite, inf)


@pytest.fixture(params=range(len(SHAPES)), ids=lambda k: f"shape{k}")
def instance(request: pytest.FixtureRequest) -> Instance:
    return make_instance(100 + request.param, request.param)


def random_shape(rng: random.Random, n: int) -> tuple[list[tuple[Kind, int]], tuple[Kind, int]]:
    """Random local types of total order ``n`` with at least two finite points."""
    while True:
        pts: list[tuple[Kind, int]] = []
        total = 0
        while total < n:
            kind = rng.choice([R, U, A])
            order = 1 if kind is R else rng.randint(2, 3)
            if total + order <= n:
                pts.append((kind, order))
                total += order
        if len(pts) >= 3:
            return pts[:-1], pts[-1]


def moved_fiber(inst: Instance, seed: int) -> Instance:
    """Same singularity data, different apparent points."""
    rng = random.Random(seed)
    for _ in range(100):
        dar = tuple(
            DarbouxPoint(d.q + Rational(rng.randint(-5, 5), rng.randint(7, 13)), d.p + Rational(rng.randint(-5, 5), 3))
            for d in inst.darboux
        )
        if dar != inst.darboux and all(c.ok for c in validate(inst.sing, dar)):
            return Instance(inst.sing, dar)
    raise AssertionError("no admissible fiber point found")
