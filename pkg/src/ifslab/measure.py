"""Self-similar measures at cylinder-cell resolution.

A depth-m cylinder cell is the image of the ambient box under the word
composition g_{w_1} o ... o g_{w_m}.  Words are 1-based letter tuples;
the flat index orders words lexicographically with the first letter most
significant, so children (letters appended at the end) occupy contiguous
index blocks while the preimages of the expanding map (letters prepended)
tile the vector in n strides.

Three constructions of the invariant measure live here: exact product
masses (valid under measure separation), the push-forward fixed-point
iteration, and seeded chaos-game sampling.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import DepthMismatch, DepthOverflow, NoConvergence
from .geometry import IfsSystem
from .sampling import bit_stream

DEFAULT_CELL_BUDGET = 2**20


def cell_budget() -> int:
    """Cell cap, overridable through the IFSLAB_CELL_BUDGET env var."""
    raw = os.environ.get("IFSLAB_CELL_BUDGET", "")
    return int(raw) if raw else DEFAULT_CELL_BUDGET


def check_depth(n_branches: int, depth: int, budget: int | None = None) -> int:
    """Number of depth-m cells, raising DepthOverflow at or above the budget."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    budget = cell_budget() if budget is None else budget
    count = n_branches**depth
    if count >= budget:
        raise DepthOverflow(
            f"{n_branches}^{depth} = {count} cells reaches the cell budget {budget}")
    return count


def word_index(word: tuple[int, ...], n: int) -> int:
    idx = 0
    for letter in word:
        idx = idx * n + (letter - 1)
    return idx


def index_word(idx: int, n: int, depth: int) -> tuple[int, ...]:
    letters = []
    for _ in range(depth):
        idx, rem = divmod(idx, n)
        letters.append(rem + 1)
    return tuple(reversed(letters))


def word_string(word: tuple[int, ...]) -> str:
    return "".join(str(letter) for letter in word)


# ---------------------------------------------------------------------------
# Cell geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellGrid:
    """Frames of every depth-m cell: center, linear half-frame, and box hull.

    centers[k] is the image of the box center under the word map, and
    half_frames[k] the image of the box's half-size diagonal matrix, so
    affine images of cells stay exact.  boxes[k] is the axis-aligned hull
    (equal to the cell for axis-aligned branches).
    """

    depth: int
    centers: np.ndarray      # (count, d)
    half_frames: np.ndarray  # (count, d, d)
    boxes: np.ndarray        # (count, d, 2)


def cell_grid(ifs: IfsSystem, depth: int, budget: int | None = None) -> CellGrid:
    key = ("grid", depth)
    cached = ifs._cell_cache.get(key)
    if cached is not None:
        check_depth(ifs.n_branches, depth, budget)
        return cached
    count = check_depth(ifs.n_branches, depth, budget)
    d = ifs.dimension
    centers = ifs.box.center[None, :].copy()
    half = np.diag(0.5 * ifs.box.sizes)[None, :, :].copy()
    for _ in range(depth):
        centers = np.concatenate([g(centers) for g in ifs.branches], axis=0)
        half = np.concatenate([np.einsum("ab,kbc->kac", g.linear, half)
                               for g in ifs.branches], axis=0)
    assert centers.shape == (count, d)
    extent = np.abs(half).sum(axis=2)
    boxes = np.stack([centers - extent, centers + extent], axis=2)
    grid = CellGrid(depth, centers, half, boxes)
    ifs._cell_cache[key] = grid
    return grid


def cell_centers(ifs: IfsSystem, depth: int) -> np.ndarray:
    return cell_grid(ifs, depth).centers


# ---------------------------------------------------------------------------
# Mass vectors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellMeasure:
    """Masses of all depth-m cells; a probability vector."""

    depth: int
    masses: np.ndarray
    kind: str  # "exact" | "fixpoint" | "empirical"
    sample_count: int | None = None
    seed: int | None = None

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float)
        if np.any(masses < 0.0):
            raise ValueError("masses must be nonnegative")
        if abs(masses.sum() - 1.0) > 1e-12:
            raise ValueError("masses must sum to 1 within 1e-12")
        masses.setflags(write=False)
        object.__setattr__(self, "masses", masses)

    @property
    def n_cells(self) -> int:
        return self.masses.size


def total_variation(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())


def exact_cell_masses(ifs: IfsSystem, depth: int, budget: int | None = None) -> CellMeasure:
    """Product masses mass(w) = prod_k p_{w_k}.

    Valid because branch-image overlaps are assumed null (the measure
    separation condition, certified for the catalog systems); without it
    cylinder masses are not products.
    """
    check_depth(ifs.n_branches, depth, budget)
    if depth == 0:
        return CellMeasure(0, np.ones(1), "exact")
    masses = reduce(np.kron, [ifs.weights] * depth)
    return CellMeasure(depth, masses, "exact")


def markov_fixpoint(ifs: IfsSystem, depth: int, max_iters: int = 256,
                    tol: float = 1e-12, budget: int | None = None) -> CellMeasure:
    """Fixed point of the push-forward T(mu)(E) = sum_i p_i mu(g_i^{-1} E).

    On depth-m mass vectors T replaces the first letter's marginal with
    the weight vector, so iteration from the uniform start contracts to
    the product masses in at most m steps.
    """
    count = check_depth(ifs.n_branches, depth, budget)
    if depth == 0:
        return CellMeasure(0, np.ones(1), "fixpoint")
    n = ifs.n_branches
    current = np.full(count, 1.0 / count)
    for _ in range(max_iters):
        # Sum out the last letter (children of each depth-(m-1) cell),
        # then prepend a fresh first letter weighted by p.
        parents = current.reshape(-1, n).sum(axis=1)
        updated = np.kron(ifs.weights, parents)
        if total_variation(updated, current) < tol:
            return CellMeasure(depth, updated, "fixpoint")
        current = updated
    raise NoConvergence(f"push-forward iteration did not reach {tol} in {max_iters} steps")


# ---------------------------------------------------------------------------
# Chaos game
# ---------------------------------------------------------------------------

_CHAIN_COUNT = 1024


def bin_points(ifs: IfsSystem, points: np.ndarray, depth: int) -> np.ndarray:
    """Flat cell index of each point, resolved level by level.

    At every level the point is assigned to the first branch (in index
    order) whose image box contains it, which realizes the convention
    that shared-boundary points belong to the lexicographically smallest
    word.  When the box is the attractor the greedy descent never dead
    ends, and under measure separation the word is exact off a null set.
    Points in no image box (possible on non-self-similar fixtures) fall
    to the branch with the nearest image box, so masses binned on such
    systems are outer estimates only.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = ifs.n_branches
    boxes = ifs.image_boxes()
    idx = np.zeros(len(points), dtype=np.int64)
    current = points.copy()
    tol = 1e-9 * max(1.0, ifs.box.diameter)
    for _ in range(depth):
        letter = np.full(len(points), -1, dtype=np.int64)
        for i, box in enumerate(boxes):
            free = letter < 0
            if not free.any():
                break
            inside = np.all((current[free] >= box[:, 0] - tol)
                            & (current[free] <= box[:, 1] + tol), axis=1)
            hit = np.where(free)[0][inside]
            letter[hit] = i
        missing = letter < 0
        if missing.any():
            gaps = np.stack([
                np.linalg.norm(
                    np.maximum(np.maximum(box[:, 0] - current[missing],
                                          current[missing] - box[:, 1]), 0.0),
                    axis=1)
                for box in boxes], axis=1)
            letter[missing] = np.argmin(gaps, axis=1)
        idx = idx * n + letter
        for i, gamma in enumerate(ifs.branches):
            sel = letter == i
            if sel.any():
                current[sel] = gamma.inverse(current[sel])
    return idx


def chaos_game(ifs: IfsSystem, depth: int, n_samples: int, seed: int,
               burn_in: int = 100, budget: int | None = None) -> CellMeasure:
    """Empirical depth-m masses from the seeded random-orbit construction.

    The orbit x_{k+1} = g_{i_k}(x_k) is run as 1024 parallel sub-chains
    (fewer when n_samples is small), each burned in independently; letter
    draws come from a single PCG64 stream consumed column-wise, so the
    output is a bit-exact function of (seed, n_samples, burn_in).  Counts
    merge by integer addition, which makes the merge order irrelevant.

    The default burn-in of 100 comes from log(diam * precision) /
    log(1/c2) ~ 52 steps at c2 = 1/2, doubled for slack.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    count = check_depth(ifs.n_branches, depth, budget)
    chains = min(_CHAIN_COUNT, n_samples)
    base, extra = divmod(n_samples, chains)
    per_chain = np.full(chains, base, dtype=np.int64)
    per_chain[:extra] += 1
    steps = int(per_chain.max()) + burn_in

    raw = bit_stream(int(seed), steps * chains).reshape(steps, chains)
    uniforms = (raw >> np.uint64(11)) * 2.0**-53
    cumulative = np.cumsum(ifs.weights)
    cumulative[-1] = 1.0
    letters = np.searchsorted(cumulative, uniforms, side="right")

    x = np.tile(ifs.box.center, (chains, 1))
    out = np.empty((n_samples, ifs.dimension))
    cursor = 0
    for k in range(steps):
        step_letters = letters[k]
        for i, gamma in enumerate(ifs.branches):
            sel = step_letters == i
            if sel.any():
                x[sel] = gamma(x[sel])
        emitted = k + 1 - burn_in
        if emitted >= 1:
            active = per_chain >= emitted
            took = int(active.sum())
            out[cursor:cursor + took] = x[active]
            cursor += took
    assert cursor == n_samples
    counts = np.bincount(bin_points(ifs, out, depth), minlength=count)
    return CellMeasure(depth, counts / n_samples, "empirical",
                       sample_count=n_samples, seed=int(seed))


# ---------------------------------------------------------------------------
# Fixed-point identity and separation estimates
# ---------------------------------------------------------------------------

def cell_mass(mu: CellMeasure, word: tuple[int, ...], n: int) -> float:
    """mu of the cylinder cell of `word`, summing the depth-m block."""
    if len(word) > mu.depth:
        raise DepthMismatch("test cell deeper than the measure")
    block = n ** (mu.depth - len(word))
    start = word_index(word, n) * block
    return float(mu.masses[start:start + block].sum())


def self_similarity_residual(ifs: IfsSystem, mu: CellMeasure,
                             test_cells: list[tuple[int, ...]]) -> float:
    """max over test cells E of |mu(E) - sum_i p_i mu(g_i^{-1}(E))|.

    mu(g_i^{-1}(E)) is resolved by summing masses of depth-m cells whose
    g_i-image lies in E; only the branch matching E's first letter
    contributes, the rest meet E in a null set.
    """
    n = ifs.n_branches
    worst = 0.0
    for word in test_cells:
        if len(word) > mu.depth - 1:
            raise DepthMismatch("test cells must be at most depth m-1")
        lhs = cell_mass(mu, word, n)
        if word:
            pulled = ifs.weights[word[0] - 1] * cell_mass(mu, word[1:], n)
        else:
            pulled = float(ifs.weights.sum())
        worst = max(worst, abs(lhs - pulled))
    return worst


def overlap_boxes(ifs: IfsSystem) -> list[np.ndarray]:
    """Pairwise intersections of the branch-image boxes."""
    from itertools import combinations

    from .geometry import box_intersection

    boxes = ifs.image_boxes()
    found = []
    for a, b in combinations(range(ifs.n_branches), 2):
        overlap = box_intersection(boxes[a], boxes[b])
        if overlap is not None:
            found.append(overlap)
    return found


def measure_separation_estimate(ifs: IfsSystem, eps_list, mu: CellMeasure) -> list[float]:
    """mu-mass of eps-neighborhoods of the branch-image overlaps.

    For each eps, sums the masses of depth-m cells whose box hull comes
    within eps of some pairwise overlap; decay as eps -> 0 indicates the
    measure separation condition, a plateau flags genuine overlap mass.
    """
    overlaps = overlap_boxes(ifs)
    grid = cell_grid(ifs, mu.depth)
    estimates = []
    for eps in eps_list:
        if not overlaps:
            estimates.append(0.0)
            continue
        near = np.zeros(mu.n_cells, dtype=bool)
        for overlap in overlaps:
            gap = np.maximum(overlap[:, 0] - grid.boxes[:, :, 1],
                             grid.boxes[:, :, 0] - overlap[:, 1])
            dist = np.linalg.norm(np.maximum(gap, 0.0), axis=1)
            near |= dist <= eps
        estimates.append(float(mu.masses[near].sum()))
    return estimates


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def write_mass_csv(mu: CellMeasure, n_branches: int, path) -> None:
    """Rows `word,mass` with 1-based digit words and 17 significant digits."""
    with open(path, "w", newline="\n") as handle:
        handle.write("word,mass\n")
        for idx, mass in enumerate(mu.masses):
            word = index_word(idx, n_branches, mu.depth)
            handle.write(f"{word_string(word)},{mass:.17g}\n")
