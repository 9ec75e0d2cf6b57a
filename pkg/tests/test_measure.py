import io

import numpy as np
import pytest

from ifslab import measure as mea
from ifslab.errors import DepthMismatch, DepthOverflow, NoConvergence
from ifslab.geometry import AffineContraction, AmbientBox, IfsSystem
from ifslab.measure import (CellMeasure, bin_points, cell_grid, chaos_game,
                            exact_cell_masses, markov_fixpoint,
                            measure_separation_estimate, self_similarity_residual,
                            total_variation, word_index)


# ---------------------------------------------------------------------------
# exact cell masses
# ---------------------------------------------------------------------------

def test_quadrant_masses_are_quarter(tent_square):
    mu = exact_cell_masses(tent_square.system, 1)
    np.testing.assert_array_equal(mu.masses, np.full(4, 0.25))


def test_depth_zero_is_unit_mass(tent_square):
    mu = exact_cell_masses(tent_square.system, 0)
    np.testing.assert_array_equal(mu.masses, [1.0])


def test_tent_sigma_depth_two_uniform(tent_sigma):
    mu = exact_cell_masses(tent_sigma.system, 2)
    assert mu.masses.shape == (36,)
    np.testing.assert_allclose(mu.masses, 1.0 / 36.0, rtol=0, atol=1e-16)


def test_aggregation_consistency(tent_sigma):
    # dropping the last letter reproduces the shallower masses exactly
    ifs = tent_sigma.system
    fine = exact_cell_masses(ifs, 3).masses
    coarse = exact_cell_masses(ifs, 2).masses
    np.testing.assert_allclose(fine.reshape(-1, ifs.n_branches).sum(axis=1), coarse,
                               rtol=0, atol=1e-15)


def test_depth_overflow(tent_square, monkeypatch):
    monkeypatch.setenv("IFSLAB_CELL_BUDGET", "256")
    with pytest.raises(DepthOverflow):
        exact_cell_masses(tent_square.system, 4)
    # one below the budget is fine
    exact_cell_masses(tent_square.system, 3)


# ---------------------------------------------------------------------------
# markov fixed point
# ---------------------------------------------------------------------------

def test_fixpoint_matches_exact(tent_square):
    fp = markov_fixpoint(tent_square.system, 3, tol=1e-12)
    exact = exact_cell_masses(tent_square.system, 3)
    assert total_variation(fp.masses, exact.masses) <= 1e-10


def test_fixpoint_depth_zero(tent_square):
    np.testing.assert_array_equal(markov_fixpoint(tent_square.system, 0).masses, [1.0])


def test_fixpoint_matches_exact_all_catalog(all_entries):
    for entry in all_entries:
        for depth in range(1, 5):
            fp = markov_fixpoint(entry.system, depth)
            exact = exact_cell_masses(entry.system, depth)
            assert total_variation(fp.masses, exact.masses) <= 1e-10, entry.name


def test_fixpoint_nonuniform_weights(tent_1d):
    ifs = IfsSystem(tent_1d.system.box, tent_1d.system.branches,
                    weights=[0.3, 0.7], phi=tent_1d.system.phi)
    fp = markov_fixpoint(ifs, 4)
    exact = exact_cell_masses(ifs, 4)
    assert total_variation(fp.masses, exact.masses) <= 1e-12


def test_fixpoint_no_convergence(tent_1d):
    ifs = IfsSystem(tent_1d.system.box, tent_1d.system.branches,
                    weights=[0.3, 0.7], phi=tent_1d.system.phi)
    with pytest.raises(NoConvergence):
        markov_fixpoint(ifs, 4, max_iters=1, tol=1e-15)


def test_zero_weight_rejected_at_construction(tent_1d):
    # Lemma-level precondition: weights are strictly positive
    with pytest.raises(ValueError):
        IfsSystem(tent_1d.system.box, tent_1d.system.branches, weights=[1.0, 0.0])


# ---------------------------------------------------------------------------
# chaos game
# ---------------------------------------------------------------------------

def test_chaos_game_single_sample(tent_square):
    mu = chaos_game(tent_square.system, 2, 1, seed=5)
    assert mu.masses.sum() == 1.0
    assert (mu.masses == 1.0).sum() == 1


def test_chaos_game_deterministic(tent_square):
    a = chaos_game(tent_square.system, 3, 50_000, seed=42)
    b = chaos_game(tent_square.system, 3, 50_000, seed=42)
    np.testing.assert_array_equal(a.masses, b.masses)
    c = chaos_game(tent_square.system, 3, 50_000, seed=43)
    assert np.any(c.masses != a.masses)


def test_chaos_game_binomial_band(tent_square):
    n_samples = 10**6
    mu = chaos_game(tent_square.system, 2, n_samples, seed=7)
    exact = exact_cell_masses(tent_square.system, 2)
    band = 4.0 * np.sqrt(exact.masses * (1 - exact.masses) / n_samples)
    inside = np.abs(mu.masses - exact.masses) <= band
    assert inside.mean() >= 0.95


def test_chaos_game_tv_halves_with_4x_samples(tent_square):
    # TV to the exact masses shrinks ~2x from N to 4N, averaged over seeds
    exact = exact_cell_masses(tent_square.system, 2).masses
    small, large = [], []
    for seed in range(10):
        small.append(total_variation(
            chaos_game(tent_square.system, 2, 25_000, seed=seed).masses, exact))
        large.append(total_variation(
            chaos_game(tent_square.system, 2, 100_000, seed=seed).masses, exact))
    ratio = np.mean(small) / np.mean(large)
    assert 1.0 <= ratio <= 3.0


def test_bin_points_lexicographic_on_boundary(tent_1d):
    # 0.5 sits in both depth-1 cells; lexicographically smaller word wins
    idx = bin_points(tent_1d.system, np.array([[0.5]]), 1)
    assert idx[0] == 0


def test_bin_points_locates_cells(tent_square):
    grid = cell_grid(tent_square.system, 3)
    interior = grid.centers
    idx = bin_points(tent_square.system, interior, 3)
    np.testing.assert_array_equal(idx, np.arange(len(interior)))


# ---------------------------------------------------------------------------
# fixed-point identity
# ---------------------------------------------------------------------------

def test_self_similarity_residual_exact(tent_square):
    ifs = tent_square.system
    mu = exact_cell_masses(ifs, 3)
    cells = [(i, j) for i in range(1, 5) for j in range(1, 5)]
    assert self_similarity_residual(ifs, mu, cells) <= 1e-12


def test_self_similarity_residual_whole_space(tent_square):
    mu = exact_cell_masses(tent_square.system, 2)
    assert self_similarity_residual(tent_square.system, mu, [()]) <= 1e-15


def test_self_similarity_residual_empirical(tent_square):
    mu = chaos_game(tent_square.system, 3, 10**6, seed=9)
    cells = [(i, j) for i in range(1, 5) for j in range(1, 5)]
    assert self_similarity_residual(tent_square.system, mu, cells) <= 5e-3


def test_self_similarity_residual_depth_check(tent_square):
    mu = exact_cell_masses(tent_square.system, 2)
    with pytest.raises(DepthMismatch):
        self_similarity_residual(tent_square.system, mu, [(1, 2)])


# ---------------------------------------------------------------------------
# measure separation estimates
# ---------------------------------------------------------------------------

def test_separation_estimates_decay_linearly(tent_square):
    mu = exact_cell_masses(tent_square.system, 8)
    eps = [2.0**-k for k in range(2, 7)]
    est = measure_separation_estimate(tent_square.system, eps, mu)
    # overlaps are segments: neighborhood mass is O(eps)
    for a, b in zip(est[1:], est[:-1]):
        assert 0.4 <= a / b <= 0.75


def test_separation_estimates_zero_for_disjoint_images():
    box = AmbientBox(np.array([[0.0, 1.0]]))
    branches = (AffineContraction(np.array([[1 / 3]]), np.array([0.0])),
                AffineContraction(np.array([[1 / 3]]), np.array([2 / 3])))
    cantor = IfsSystem(box, branches)
    mu = exact_cell_masses(cantor, 6)
    est = measure_separation_estimate(cantor, [0.1, 0.05], mu)
    assert est == [0.0, 0.0]


def test_separation_estimates_plateau_on_overlap(overlap_bad):
    # genuine overlap: the invariant measure is uniform on [0, 0.6], so the
    # overlap window [0.3, 0.5] carries mass 1/3 and the estimate cannot
    # decay below it (cell binning makes it an outer estimate)
    ifs = overlap_bad.system
    mu = chaos_game(ifs, 8, 200_000, seed=3)
    eps = [0.2, 0.05, 0.01, 0.005]
    est = measure_separation_estimate(ifs, eps, mu)
    assert est[-1] >= 0.25
    assert est[-1] / est[0] >= 0.4

    # independent orbit oracle for the window mass
    rng = np.random.default_rng(99)
    x, hits, total = 0.5, 0, 0
    for k in range(100_000):
        x = 0.5 * x + (0.3 if rng.random() < 0.5 else 0.0)
        if k >= 100:
            total += 1
            hits += 0.3 - 0.005 <= x <= 0.5 + 0.005
    assert est[-1] >= hits / total - 0.02


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def test_mass_csv_format(tent_square, tmp_path):
    mu = exact_cell_masses(tent_square.system, 2)
    path = tmp_path / "masses.csv"
    mea.write_mass_csv(mu, 4, path)
    lines = path.read_bytes().decode().split("\n")
    assert lines[0] == "word,mass"
    assert lines[1] == "11,0.0625"
    assert len(lines) == 18  # header + 16 cells + trailing newline
    assert all("\r" not in line for line in lines)


def test_mass_vectors_are_probability_vectors(tent_sigma):
    for mu in (exact_cell_masses(tent_sigma.system, 3),
               markov_fixpoint(tent_sigma.system, 3),
               chaos_game(tent_sigma.system, 3, 10_000, seed=1)):
        assert np.all(mu.masses >= 0)
        assert abs(mu.masses.sum() - 1.0) <= 1e-12


def test_cell_measure_rejects_bad_vectors():
    with pytest.raises(ValueError):
        CellMeasure(1, np.array([0.5, 0.4]), "exact")
    with pytest.raises(ValueError):
        CellMeasure(1, np.array([-0.1, 1.1]), "exact")
