import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifslab import geometry as geo
from ifslab.errors import DegenerateCandidate, NotAContraction
from ifslab.geometry import (AffineContraction, AmbientBox, IfsSystem,
                             branch_coincidence_set, branch_index_set, branch_value_set,
                             check_open_set_condition, contraction_bounds,
                             is_finite_branch, pieces_match_expected,
                             self_similarity_defect, verify_inverse_branches)


# ---------------------------------------------------------------------------
# contraction_bounds
# ---------------------------------------------------------------------------

def test_contraction_bounds_tent_square_branch():
    # branch (x/2, y/2) of the 2-D tent system
    assert contraction_bounds(np.diag([0.5, 0.5])) == (0.5, 0.5)


def test_contraction_bounds_mixed_ratios():
    # branch (x/2, -y/3 + 2/3) of the tent/zigzag system
    c1, c2 = contraction_bounds(np.diag([0.5, -1.0 / 3.0]))
    assert abs(c1 - 1.0 / 3.0) < 1e-15
    assert abs(c2 - 0.5) < 1e-15


def test_contraction_bounds_rejects_degenerate():
    with pytest.raises(NotAContraction):
        contraction_bounds(np.zeros((2, 2)))
    with pytest.raises(NotAContraction):
        contraction_bounds(np.diag([0.5, 1.0]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_two_sided_lipschitz_bounds(seed):
    # c1 |x-y| <= |g(x)-g(y)| <= c2 |x-y| on sampled pairs
    rng = np.random.default_rng(seed)
    linear = rng.uniform(-0.6, 0.6, size=(2, 2))
    try:
        gamma = AffineContraction(linear, np.zeros(2))
    except NotAContraction:
        return
    x = rng.uniform(0, 1, size=(50, 2))
    y = rng.uniform(0, 1, size=(50, 2))
    gaps = np.linalg.norm(x - y, axis=1)
    images = np.linalg.norm(gamma(x) - gamma(y), axis=1)
    assert np.all(images <= gamma.c2 * gaps * (1 + 1e-9) + 1e-15)
    assert np.all(images >= gamma.c1 * gaps * (1 - 1e-9) - 1e-15)


# ---------------------------------------------------------------------------
# inverse branches and self-similarity
# ---------------------------------------------------------------------------

def test_inverse_branches_catalog(all_entries):
    for entry in all_entries:
        if entry.name == "overlap_bad":
            continue
        assert verify_inverse_branches(entry.system, 64) <= 1e-12, entry.name


def test_inverse_branches_identity_phi_fails(tent_1d):
    broken = IfsSystem(tent_1d.system.box, tent_1d.system.branches,
                       phi=lambda pts: pts, name="identity-phi")
    assert verify_inverse_branches(broken, 64) >= 0.25


def test_self_similarity_defect_tent_square(tent_square):
    assert self_similarity_defect(tent_square.system, 128) <= np.sqrt(2) / 128


def test_self_similarity_defect_tent_1d(tent_1d):
    assert self_similarity_defect(tent_1d.system, 128) <= 1.0 / 128


def test_self_similarity_defect_cantor_gap():
    # middle-third Cantor system on [0,1]: the box is not the attractor and
    # the defect sits near the distance 1/6 from the gap midpoint
    box = AmbientBox(np.array([[0.0, 1.0]]))
    branches = (AffineContraction(np.array([[1 / 3]]), np.array([0.0])),
                AffineContraction(np.array([[1 / 3]]), np.array([2 / 3])))
    cantor = IfsSystem(box, branches, name="cantor")
    assert self_similarity_defect(cantor, 128) >= 0.1


# ---------------------------------------------------------------------------
# coincidence and value sets
# ---------------------------------------------------------------------------

def test_coincidence_set_matches_paper(tent_square):
    pieces = branch_coincidence_set(tent_square.system)
    assert pieces_match_expected(pieces, tent_square.expected.coincidence_segments,
                                 tent_square.expected.coincidence_points)


def test_value_set_matches_paper(tent_square):
    values = branch_value_set(tent_square.system)
    assert pieces_match_expected(values, tent_square.expected.value_segments,
                                 tent_square.expected.value_points)


def test_parallel_branches_give_empty_set():
    box = AmbientBox(np.array([[0.0, 1.0]]))
    branches = (AffineContraction(np.array([[0.5]]), np.array([0.0])),
                AffineContraction(np.array([[0.5]]), np.array([0.5])))
    system = IfsSystem(box, branches)
    assert branch_coincidence_set(system) == []
    assert branch_value_set(system) == []
    assert is_finite_branch(system)


def test_piece_points_satisfy_equation(tent_sigma):
    ifs = tent_sigma.system
    pieces = branch_coincidence_set(ifs)
    assert geo.coincidence_residual(ifs, pieces) <= 1e-12
    values = branch_value_set(ifs, pieces)
    assert geo.value_residual(ifs, pieces, values) <= 1e-12


def test_off_piece_points_violate_equation(tent_square):
    # affine transversality: points 1e-3 away from a pair's solution set
    # miss the branch equation by at least 1e-6
    ifs = tent_square.system
    pieces = {p.pair: p for p in branch_coincidence_set(ifs)}
    rng = np.random.default_rng(11)
    points = rng.uniform(0, 1, size=(300, 2))
    for i in range(1, 5):
        for j in range(i + 1, 5):
            piece = pieces.get((i, j))
            residual = np.abs(ifs.branches[i - 1](points)
                              - ifs.branches[j - 1](points)).max(axis=1)
            if piece is None:
                far = np.ones(len(points), dtype=bool)
            elif piece.dimension == 0:
                far = np.linalg.norm(points - piece.point, axis=1) >= 1e-3
            else:
                far = np.array([geo._point_segment_distance(x, piece.endpoints) >= 1e-3
                                for x in points])
            assert np.all(residual[far] >= 1e-6)


def test_finite_branch_flags(all_entries):
    for entry in all_entries:
        assert is_finite_branch(entry.system) == entry.expected.finite_branch, entry.name


def test_tent_1d_coincidence_is_single_point(tent_1d):
    # x/2 = -x/2 + 1 has the single solution x = 1
    pieces = branch_coincidence_set(tent_1d.system)
    assert len(pieces) == 1 and pieces[0].dimension == 0
    assert abs(pieces[0].point[0] - 1.0) <= 1e-12
    values = branch_value_set(tent_1d.system)
    assert abs(values[0].point[0] - 0.5) <= 1e-12


# ---------------------------------------------------------------------------
# open set condition
# ---------------------------------------------------------------------------

def test_osc_passes_on_catalog(all_entries):
    for entry in all_entries:
        result = check_open_set_condition(entry.system, entry.expected.osc_candidate)
        assert result.passed == entry.expected.osc_should_pass, entry.name


def test_osc_overlap_witness(overlap_bad):
    result = check_open_set_condition(overlap_bad.system, np.array([[0.0, 1.0]]))
    assert not result.passed
    assert result.failed_condition == "overlap"
    assert result.violating == (1, 2)
    # brute force: the witness must lie in both open branch images of V
    x = float(result.witness[0])
    assert 0.3 < x < 0.5
    for gamma in overlap_bad.system.branches:
        pre = float(gamma.inverse(np.array([x]))[0])
        assert 0.0 < pre < 1.0


def test_osc_rejects_degenerate_candidate(tent_square):
    with pytest.raises(DegenerateCandidate):
        check_open_set_condition(tent_square.system, np.array([[0.2, 0.2], [0.0, 1.0]]))


def test_osc_monotone_under_shrinking(tent_square, tent_sigma):
    # shrinking a passing candidate can break containment, never disjointness
    for entry in (tent_square, tent_sigma):
        assert check_open_set_condition(entry.system, entry.expected.osc_candidate).passed
        for shrink in (0.9, 0.6, 0.3):
            center = entry.system.box.center
            half = 0.5 * shrink * entry.system.box.sizes
            candidate = np.stack([center - half, center + half], axis=1)
            result = check_open_set_condition(entry.system, candidate)
            assert result.passed or result.failed_condition == "containment"


# ---------------------------------------------------------------------------
# branch index sets and system invariants
# ---------------------------------------------------------------------------

def test_branch_index_set_nonempty_on_attractor(tent_square):
    grid = tent_square.system.box.grid(8)
    for x in grid:
        assert branch_index_set(tent_square.system, x)


def test_branch_index_set_interior_is_singleton(tent_square):
    assert branch_index_set(tent_square.system, np.array([0.2, 0.3])) == {1}
    assert branch_index_set(tent_square.system, np.array([0.2, 0.7])) == {2}


def test_system_rejects_bad_weights(tent_1d):
    box, branches = tent_1d.system.box, tent_1d.system.branches
    with pytest.raises(ValueError):
        IfsSystem(box, branches, weights=[0.5, 0.6])
    with pytest.raises(ValueError):
        IfsSystem(box, branches, weights=[1.0, 0.0])


def test_system_rejects_escaping_branch():
    box = AmbientBox(np.array([[0.0, 1.0]]))
    branches = (AffineContraction(np.array([[0.5]]), np.array([0.0])),
                AffineContraction(np.array([[0.5]]), np.array([0.75])))
    with pytest.raises(ValueError):
        IfsSystem(box, branches)
