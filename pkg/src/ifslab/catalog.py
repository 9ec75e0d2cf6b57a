"""Built-in example systems with their expected analytic facts.

Each entry carries the machine-checkable facts the test suites validate:
coincidence and value sets as unions of points/segments, the finite
branch flag, an open-set candidate and whether it should pass, and
whether the uniform-weight invariant measure is Lebesgue on the box.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import AffineContraction, AmbientBox, IfsSystem

UNIT_SQUARE = AmbientBox(np.array([[0.0, 1.0], [0.0, 1.0]]))
UNIT_INTERVAL = AmbientBox(np.array([[0.0, 1.0]]))


def _branch_1d(a: float, b: float) -> AffineContraction:
    return AffineContraction(np.array([[a]]), np.array([b]))


def _branch_2d(ax: float, bx: float, ay: float, by: float) -> AffineContraction:
    return AffineContraction(np.array([[ax, 0.0], [0.0, ay]]), np.array([bx, by]))


def tent(x: np.ndarray) -> np.ndarray:
    """Full tent on [0,1]: doubling with a fold at 1/2."""
    return np.where(x <= 0.5, 2.0 * x, 2.0 - 2.0 * x)


def zigzag(x: np.ndarray) -> np.ndarray:
    """Three-branch sawtooth on [0,1] with folds at 1/3 and 2/3."""
    return np.where(x <= 1.0 / 3.0, 3.0 * x,
                    np.where(x <= 2.0 / 3.0, -3.0 * x + 2.0, 3.0 * x - 2.0))


def _phi_tent_square(points: np.ndarray) -> np.ndarray:
    return np.stack([tent(points[:, 0]), tent(points[:, 1])], axis=1)


def _phi_tent_sigma(points: np.ndarray) -> np.ndarray:
    return np.stack([tent(points[:, 0]), zigzag(points[:, 1])], axis=1)


def _phi_tent_1d(points: np.ndarray) -> np.ndarray:
    return tent(points[:, 0])[:, None]


def _phi_sigma_1d(points: np.ndarray) -> np.ndarray:
    return zigzag(points[:, 0])[:, None]


def _phi_overlap_bad(points: np.ndarray) -> np.ndarray:
    # First-match piecewise inverse; no true inverse exists on the
    # positive-measure overlap [0.3, 0.5], and images only cover [0, 0.8],
    # so the tail is clipped back into the box to keep the map total.
    x = points[:, 0]
    out = np.where(x <= 0.5, 2.0 * x, np.clip(2.0 * x - 0.6, 0.0, 1.0))
    return out[:, None]


@dataclass(frozen=True)
class ExpectedFacts:
    coincidence_segments: tuple = ()
    coincidence_points: tuple = ()
    value_segments: tuple = ()
    value_points: tuple = ()
    finite_branch: bool = True
    osc_candidate: np.ndarray | None = None
    osc_should_pass: bool = True
    hutchinson_is_lebesgue: bool = True
    measure_separated: bool = True
    is_attractor: bool = True
    # Support box for a reconstruction test symbol, clear of the value set.
    admissible_support: np.ndarray | None = None


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    system: IfsSystem
    expected: ExpectedFacts
    phi_name: str = ""


def _seg(a, b) -> np.ndarray:
    return np.array([a, b], dtype=float)


def _tent_square() -> CatalogEntry:
    branches = (
        _branch_2d(0.5, 0.0, 0.5, 0.0),
        _branch_2d(0.5, 0.0, -0.5, 1.0),
        _branch_2d(-0.5, 1.0, 0.5, 0.0),
        _branch_2d(-0.5, 1.0, -0.5, 1.0),
    )
    system = IfsSystem(UNIT_SQUARE, branches, phi=_phi_tent_square, name="tent_square")
    expected = ExpectedFacts(
        coincidence_segments=(_seg([0.0, 1.0], [1.0, 1.0]), _seg([1.0, 0.0], [1.0, 1.0])),
        value_segments=(_seg([0.0, 0.5], [1.0, 0.5]), _seg([0.5, 0.0], [0.5, 1.0])),
        finite_branch=False,
        osc_candidate=np.array([[0.0, 1.0], [0.0, 1.0]]),
        admissible_support=np.array([[0.1, 0.4], [0.1, 0.4]]),
    )
    return CatalogEntry("tent_square", system, expected, phi_name="tent_square")


def _tent_sigma() -> CatalogEntry:
    third = 1.0 / 3.0
    branches = (
        _branch_2d(0.5, 0.0, third, 0.0),
        _branch_2d(0.5, 0.0, -third, 2 * third),
        _branch_2d(0.5, 0.0, third, 2 * third),
        _branch_2d(-0.5, 1.0, third, 0.0),
        _branch_2d(-0.5, 1.0, -third, 2 * third),
        _branch_2d(-0.5, 1.0, third, 2 * third),
    )
    system = IfsSystem(UNIT_SQUARE, branches, phi=_phi_tent_sigma, name="tent_sigma")
    expected = ExpectedFacts(
        coincidence_segments=(
            _seg([0.0, 1.0], [1.0, 1.0]),   # vertical fold of the y-zigzag
            _seg([0.0, 0.0], [1.0, 0.0]),   # second fold
            _seg([1.0, 0.0], [1.0, 1.0]),   # fold of the x-tent
        ),
        value_segments=(
            _seg([0.0, third], [1.0, third]),
            _seg([0.0, 2 * third], [1.0, 2 * third]),
            _seg([0.5, 0.0], [0.5, 1.0]),
        ),
        finite_branch=False,
        osc_candidate=np.array([[0.0, 1.0], [0.0, 1.0]]),
        admissible_support=np.array([[0.08, 0.27], [0.08, 0.27]]),
    )
    return CatalogEntry("tent_sigma", system, expected, phi_name="tent_sigma")


def _tent_1d() -> CatalogEntry:
    branches = (_branch_1d(0.5, 0.0), _branch_1d(-0.5, 1.0))
    system = IfsSystem(UNIT_INTERVAL, branches, phi=_phi_tent_1d, name="tent_1d")
    expected = ExpectedFacts(
        coincidence_points=(np.array([1.0]),),
        value_points=(np.array([0.5]),),
        finite_branch=True,
        osc_candidate=np.array([[0.0, 1.0]]),
        admissible_support=np.array([[0.6, 0.9]]),
    )
    return CatalogEntry("tent_1d", system, expected, phi_name="tent_1d")


def _sigma_1d() -> CatalogEntry:
    third = 1.0 / 3.0
    branches = (_branch_1d(third, 0.0), _branch_1d(-third, 2 * third), _branch_1d(third, 2 * third))
    system = IfsSystem(UNIT_INTERVAL, branches, phi=_phi_sigma_1d, name="sigma_1d")
    expected = ExpectedFacts(
        coincidence_points=(np.array([1.0]), np.array([0.0])),
        value_points=(np.array([third]), np.array([2 * third])),
        finite_branch=True,
        osc_candidate=np.array([[0.0, 1.0]]),
        admissible_support=np.array([[0.05, 0.25]]),
    )
    return CatalogEntry("sigma_1d", system, expected, phi_name="sigma_1d")


def _overlap_bad() -> CatalogEntry:
    branches = (_branch_1d(0.5, 0.0), _branch_1d(0.5, 0.3))
    system = IfsSystem(UNIT_INTERVAL, branches, phi=_phi_overlap_bad, name="overlap_bad")
    expected = ExpectedFacts(
        finite_branch=True,
        osc_candidate=np.array([[0.0, 1.0]]),
        osc_should_pass=False,
        hutchinson_is_lebesgue=False,
        measure_separated=False,
        is_attractor=False,
    )
    return CatalogEntry("overlap_bad", system, expected, phi_name="overlap_bad")


_BUILDERS = {
    "tent_square": _tent_square,
    "tent_sigma": _tent_sigma,
    "tent_1d": _tent_1d,
    "sigma_1d": _sigma_1d,
    "overlap_bad": _overlap_bad,
}

PHI_EVALUATORS = {
    "tent_square": _phi_tent_square,
    "tent_sigma": _phi_tent_sigma,
    "tent_1d": _phi_tent_1d,
    "sigma_1d": _phi_sigma_1d,
    "overlap_bad": _phi_overlap_bad,
}


def catalog() -> list[CatalogEntry]:
    return [build() for build in _BUILDERS.values()]


def get(name: str) -> CatalogEntry:
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise KeyError(f"unknown catalog system {name!r}; "
                       f"choices: {', '.join(sorted(_BUILDERS))}") from None
