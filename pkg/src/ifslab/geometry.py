"""Affine iterated function systems and exact branch-set geometry.

The ambient space is a closed box in R^d (d = 1, 2, 3) with the Euclidean
metric.  Branches are affine proper contractions: two-sided Lipschitz
bounds 0 < c1 <= c2 < 1, read off the singular values of the linear part.
For affine branches the coincidence set {x : g_i(x) = g_j(x)} and its
image under the branches are affine pieces that can be solved exactly;
the open set condition is decidable by interval arithmetic on box images.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateCandidate, NotAContraction

_PIVOT_TOL = 1e-12


# ---------------------------------------------------------------------------
# Ambient box
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AmbientBox:
    """Axis-aligned closed box, the compact metric space carrying the IFS."""

    intervals: np.ndarray  # shape (d, 2), [lo, hi] per axis

    def __post_init__(self):
        iv = np.asarray(self.intervals, dtype=float)
        if iv.ndim != 2 or iv.shape[1] != 2:
            raise ValueError("intervals must have shape (d, 2)")
        if iv.shape[0] not in (1, 2, 3):
            raise ValueError("supported dimensions are 1, 2, 3")
        if np.any(iv[:, 0] >= iv[:, 1]):
            raise ValueError("each interval must satisfy lo < hi")
        iv.setflags(write=False)
        object.__setattr__(self, "intervals", iv)

    @property
    def dimension(self) -> int:
        return self.intervals.shape[0]

    @property
    def lo(self) -> np.ndarray:
        return self.intervals[:, 0]

    @property
    def hi(self) -> np.ndarray:
        return self.intervals[:, 1]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def sizes(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.sizes))

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.all((points >= self.lo - tol) & (points <= self.hi + tol), axis=1)

    def grid(self, resolution: int) -> np.ndarray:
        """Inclusive lattice with `resolution` subdivisions per axis."""
        if resolution < 1:
            raise ValueError("resolution must be >= 1")
        axes = [np.linspace(lo, hi, resolution + 1) for lo, hi in self.intervals]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def vertices(self) -> np.ndarray:
        corners = list(product(*self.intervals))
        return np.array(corners, dtype=float)


def boxes_overlap_openly(a: np.ndarray, b: np.ndarray) -> bool:
    """True iff the open interiors of boxes a, b (shape (d,2)) intersect."""
    return bool(np.all(np.maximum(a[:, 0], b[:, 0]) < np.minimum(a[:, 1], b[:, 1])))


def box_intersection(a: np.ndarray, b: np.ndarray):
    lo = np.maximum(a[:, 0], b[:, 0])
    hi = np.minimum(a[:, 1], b[:, 1])
    if np.any(lo > hi):
        return None
    return np.stack([lo, hi], axis=1)


def box_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean gap between two closed boxes (0 if they touch)."""
    gap = np.maximum(a[:, 0] - b[:, 1], b[:, 0] - a[:, 1])
    return float(np.linalg.norm(np.maximum(gap, 0.0)))


# ---------------------------------------------------------------------------
# Branch maps
# ---------------------------------------------------------------------------

def contraction_bounds(linear: np.ndarray) -> tuple[float, float]:
    """Smallest and largest singular value of the linear part.

    Raises NotAContraction unless 0 < c1 <= c2 < 1, the defining
    inequality of a proper contraction.
    """
    linear = np.asarray(linear, dtype=float)
    sv = np.linalg.svd(linear, compute_uv=False)
    c1, c2 = float(sv[-1]), float(sv[0])
    if c1 <= _PIVOT_TOL:
        raise NotAContraction(f"smallest singular value {c1} is zero; map is degenerate")
    if c2 >= 1.0:
        raise NotAContraction(f"largest singular value {c2} >= 1; map does not contract")
    return c1, c2


@dataclass(frozen=True)
class AffineContraction:
    """x -> L x + t with singular values of L pinched inside (0, 1)."""

    linear: np.ndarray
    translation: np.ndarray
    c1: float = field(init=False)
    c2: float = field(init=False)

    def __post_init__(self):
        lin = np.asarray(self.linear, dtype=float)
        tr = np.asarray(self.translation, dtype=float)
        if lin.ndim != 2 or lin.shape[0] != lin.shape[1] or tr.shape != (lin.shape[0],):
            raise ValueError("linear part must be d x d and translation length d")
        c1, c2 = contraction_bounds(lin)
        lin.setflags(write=False)
        tr.setflags(write=False)
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "translation", tr)
        object.__setattr__(self, "c1", c1)
        object.__setattr__(self, "c2", c2)

    @property
    def dimension(self) -> int:
        return self.linear.shape[0]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        squeeze = points.ndim == 1
        out = np.atleast_2d(points) @ self.linear.T + self.translation
        return out[0] if squeeze else out

    def inverse(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        squeeze = points.ndim == 1
        out = np.linalg.solve(
            self.linear, (np.atleast_2d(points) - self.translation).T
        ).T
        return out[0] if squeeze else out

    def is_axis_aligned(self) -> bool:
        """One nonzero per row and per column: box images are boxes."""
        nz = self.linear != 0.0
        return bool(np.all(nz.sum(axis=0) == 1) and np.all(nz.sum(axis=1) == 1))

    def image_box(self, box: np.ndarray) -> np.ndarray:
        """Exact box image for axis-aligned maps, vertex bounding box otherwise."""
        box = np.asarray(box, dtype=float)
        corners = np.array(list(product(*box)), dtype=float)
        images = self(corners)
        return np.stack([images.min(axis=0), images.max(axis=0)], axis=1)


# ---------------------------------------------------------------------------
# The system
# ---------------------------------------------------------------------------

class IfsSystem:
    """Ambient box, branches, weights and the expanding map they invert.

    The expanding map `phi` is stored as an evaluator supplied by the
    catalog or a definition file rather than reconstructed from the
    branches: on overlap boundaries a pointwise inverse is ambiguous, so
    agreement with the branch inverses is only demanded off a null set
    and is measured by :func:`verify_inverse_branches`.
    """

    def __init__(self, box: AmbientBox, branches, weights=None, phi=None, name: str = ""):
        branches = tuple(branches)
        if len(branches) < 2:
            raise ValueError("an IFS needs at least two branches")
        d = box.dimension
        for gamma in branches:
            if gamma.dimension != d:
                raise ValueError("branch dimension does not match the box")
            img = gamma.image_box(box.intervals)
            if np.any(img[:, 0] < box.lo - 1e-12) or np.any(img[:, 1] > box.hi + 1e-12):
                raise ValueError("branch image leaves the ambient box")
        n = len(branches)
        if weights is None:
            weights = np.full(n, 1.0 / n)
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (n,):
            raise ValueError("need one weight per branch")
        if np.any(weights <= 0.0):
            raise ValueError("weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")
        weights.setflags(write=False)
        self.box = box
        self.branches = branches
        self.weights = weights
        self.phi = phi
        self.name = name
        self._cell_cache: dict = {}

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @property
    def dimension(self) -> int:
        return self.box.dimension

    @property
    def c2(self) -> float:
        return max(g.c2 for g in self.branches)

    @property
    def c1(self) -> float:
        return min(g.c1 for g in self.branches)

    def is_hutchinson(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.weights - 1.0 / self.n_branches)) <= tol)

    def image_boxes(self) -> list[np.ndarray]:
        return [g.image_box(self.box.intervals) for g in self.branches]

    def apply_phi(self, points: np.ndarray) -> np.ndarray:
        if self.phi is None:
            raise ValueError(f"system {self.name!r} carries no expanding-map evaluator")
        points = np.asarray(points, dtype=float)
        squeeze = points.ndim == 1
        out = np.asarray(self.phi(np.atleast_2d(points)), dtype=float)
        return out[0] if squeeze else out


def branch_index_set(ifs: IfsSystem, x: np.ndarray, tol: float = 1e-12) -> frozenset[int]:
    """I(x): 1-based indices i with x in g_i(K), decided via the inverse map."""
    x = np.asarray(x, dtype=float)
    hits = []
    for i, gamma in enumerate(ifs.branches, start=1):
        pre = gamma.inverse(x)
        if bool(ifs.box.contains(pre, tol=tol)[0]):
            hits.append(i)
    return frozenset(hits)


# ---------------------------------------------------------------------------
# Residual scans
# ---------------------------------------------------------------------------

def verify_inverse_branches(ifs: IfsSystem, grid_resolution: int = 64) -> float:
    """max over grid x and branches i of |phi(g_i(x)) - x| in sup norm."""
    if grid_resolution < 2:
        raise ValueError("grid_resolution must be >= 2")
    grid = ifs.box.grid(grid_resolution)
    worst = 0.0
    for gamma in ifs.branches:
        residual = np.abs(ifs.apply_phi(gamma(grid)) - grid).max()
        worst = max(worst, float(residual))
    return worst


def self_similarity_defect(ifs: IfsSystem, grid_resolution: int = 128) -> float:
    """Symmetric Hausdorff distance between grids of K and of U_i g_i(K)."""
    grid = ifs.box.grid(grid_resolution)
    images = np.vstack([gamma(grid) for gamma in ifs.branches])
    d_box_to_images = cKDTree(images).query(grid)[0].max()
    d_images_to_box = cKDTree(grid).query(images)[0].max()
    return float(max(d_box_to_images, d_images_to_box))


# ---------------------------------------------------------------------------
# Branch coincidence geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffinePiece:
    """A component of the branch coincidence (or value) set.

    The solution set of g_i = g_j is an affine subspace; clipped to the
    ambient box it is stored as basepoint + kernel basis together with a
    canonical description: `point` for dimension 0, `endpoints` for
    dimension 1.  `dimension` is the dimension of the clipped piece.
    """

    pair: tuple[int, int]
    basepoint: np.ndarray
    basis: np.ndarray  # (d, k); k = 0 for isolated points
    dimension: int
    point: np.ndarray | None = None
    endpoints: np.ndarray | None = None  # (2, d)
    box: np.ndarray | None = None  # ambient clip region (d, 2)

    def sample(self, count: int = 33) -> np.ndarray:
        if self.dimension == 0:
            return self.point[None, :]
        if self.dimension == 1:
            t = np.linspace(0.0, 1.0, count)[:, None]
            return self.endpoints[0] + t * (self.endpoints[1] - self.endpoints[0])
        # Higher-dimensional pieces: lattice in parameter space filtered to the box.
        k = self.basis.shape[1]
        per_axis = max(2, int(np.ceil(count ** (1.0 / k))))
        half = np.linalg.norm(self.box[:, 1] - self.box[:, 0])
        axes = [np.linspace(-half, half, per_axis)] * k
        mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
        pts = self.basepoint + mesh @ self.basis.T
        keep = np.all((pts >= self.box[:, 0] - 1e-12) & (pts <= self.box[:, 1] + 1e-12), axis=1)
        return pts[keep]


def _solve_pair(gi: AffineContraction, gj: AffineContraction, box: AmbientBox,
                pair: tuple[int, int], pivot_tol: float) -> AffinePiece | None:
    """Exactly solve g_i(x) = g_j(x) inside the box; None when empty."""
    d = box.dimension
    diff = gi.linear - gj.linear
    rhs = gj.translation - gi.translation
    u, sv, vt = np.linalg.svd(diff)
    rank = int(np.sum(sv > pivot_tol))
    # Consistency: the right-hand side must live in the column space.
    tail = u[:, rank:].T @ rhs
    if tail.size and np.max(np.abs(tail)) > pivot_tol:
        return None
    if rank > 0:
        particular = vt[:rank].T @ ((u[:, :rank].T @ rhs) / sv[:rank])
    else:
        particular = np.zeros(d)
    kernel = vt[rank:].T  # (d, k)
    k = kernel.shape[1]

    if k == 0:
        if not bool(box.contains(particular, tol=pivot_tol)[0]):
            return None
        p = np.clip(particular, box.lo, box.hi)
        return AffinePiece(pair, p, kernel, 0, point=p, box=box.intervals)

    if k == d:
        # The branches coincide identically; the piece is the whole box.
        return AffinePiece(pair, box.center, np.eye(d), d, box=box.intervals)

    if k == 1:
        direction = kernel[:, 0]
        s_lo, s_hi = -np.inf, np.inf
        for a in range(d):
            da = direction[a]
            if abs(da) <= pivot_tol:
                if particular[a] < box.lo[a] - pivot_tol or particular[a] > box.hi[a] + pivot_tol:
                    return None
                continue
            bounds = sorted(((box.lo[a] - particular[a]) / da,
                             (box.hi[a] - particular[a]) / da))
            s_lo, s_hi = max(s_lo, bounds[0]), min(s_hi, bounds[1])
        if s_lo > s_hi + pivot_tol:
            return None
        if s_hi - s_lo <= pivot_tol:
            p = np.clip(particular + 0.5 * (s_lo + s_hi) * direction, box.lo, box.hi)
            return AffinePiece(pair, p, np.zeros((d, 0)), 0, point=p, box=box.intervals)
        ends = np.stack([particular + s_lo * direction, particular + s_hi * direction])
        ends = np.clip(ends, box.lo, box.hi)
        return AffinePiece(pair, particular, kernel, 1, endpoints=ends, box=box.intervals)

    # k == 2 in a 3-D box: classify by linear-programming extents.
    from scipy.optimize import linprog

    # Constraints lo <= particular + kernel @ s <= hi, rows +/- kernel.
    a_mat = np.vstack([kernel, -kernel])  # (2d, k)
    b_vec = np.concatenate([box.hi - particular, particular - box.lo])
    extents = []
    feasible = True
    for axis in range(k):
        c = np.zeros(k)
        lo_val = hi_val = None
        for sign in (1.0, -1.0):
            c[axis] = sign
            res = linprog(c, A_ub=a_mat, b_ub=b_vec, bounds=[(None, None)] * k,
                          method="highs")
            if not res.success:
                feasible = False
                break
            val = sign * res.fun
            lo_val, hi_val = (val, hi_val) if sign > 0 else (lo_val, val)
        if not feasible:
            break
        extents.append(abs(hi_val) + abs(lo_val))
    if not feasible:
        return None
    dim = int(sum(e > pivot_tol for e in extents))
    return AffinePiece(pair, particular, kernel, dim, box=box.intervals)


def branch_coincidence_set(ifs: IfsSystem, pivot_tol: float = _PIVOT_TOL) -> list[AffinePiece]:
    """All nonempty pieces of C: points where two distinct branches agree."""
    pieces = []
    for i, j in combinations(range(1, ifs.n_branches + 1), 2):
        piece = _solve_pair(ifs.branches[i - 1], ifs.branches[j - 1], ifs.box,
                            (i, j), pivot_tol)
        if piece is not None:
            pieces.append(piece)
    return pieces


def branch_value_set(ifs: IfsSystem, pieces: list[AffinePiece] | None = None) -> list[AffinePiece]:
    """Images g_i(piece) of the coincidence pieces: the two-branch value set."""
    if pieces is None:
        pieces = branch_coincidence_set(ifs)
    images = []
    for piece in pieces:
        gamma = ifs.branches[piece.pair[0] - 1]
        base = gamma(piece.basepoint)
        basis = gamma.linear @ piece.basis if piece.basis.size else piece.basis
        point = gamma(piece.point) if piece.point is not None else None
        endpoints = gamma(piece.endpoints) if piece.endpoints is not None else None
        images.append(AffinePiece(piece.pair, base, basis, piece.dimension,
                                  point=point, endpoints=endpoints, box=ifs.box.intervals))
    return images


def is_finite_branch(ifs: IfsSystem) -> bool:
    """True iff every coincidence piece is a single point (dimension <= 0)."""
    return all(piece.dimension <= 0 for piece in branch_coincidence_set(ifs))


def coincidence_residual(ifs: IfsSystem, pieces: list[AffinePiece], samples: int = 65) -> float:
    """max over sampled piece points of |g_i(x) - g_j(x)| in sup norm."""
    worst = 0.0
    for piece in pieces:
        i, j = piece.pair
        pts = piece.sample(samples)
        res = np.abs(ifs.branches[i - 1](pts) - ifs.branches[j - 1](pts)).max()
        worst = max(worst, float(res))
    return worst


def value_residual(ifs: IfsSystem, c_pieces: list[AffinePiece],
                   b_pieces: list[AffinePiece], samples: int = 65) -> float:
    """max over value-piece points y of |y - g_j(x)| for the paired preimage x."""
    worst = 0.0
    for c_piece, b_piece in zip(c_pieces, b_pieces):
        i, j = c_piece.pair
        xs = c_piece.sample(samples)
        ys = b_piece.sample(samples)
        res = max(np.abs(ys - ifs.branches[i - 1](xs)).max(),
                  np.abs(ys - ifs.branches[j - 1](xs)).max())
        worst = max(worst, float(res))
    return worst


# ---------------------------------------------------------------------------
# Open set condition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OscResult:
    passed: bool
    failed_condition: str | None = None  # "containment" | "overlap"
    violating: tuple | None = None
    witness: np.ndarray | None = None

    def __bool__(self) -> bool:
        return self.passed


def _separating_axis_disjoint(verts_a: np.ndarray, verts_b: np.ndarray,
                              axes: np.ndarray, tol: float = 1e-12) -> bool:
    for u in axes:
        pa = verts_a @ u
        pb = verts_b @ u
        if pa.max() <= pb.min() + tol or pb.max() <= pa.min() + tol:
            return True
    return False


def check_open_set_condition(ifs: IfsSystem, candidate: np.ndarray) -> OscResult:
    """Decide g_i(V) subset V and pairwise disjointness for an open box V.

    Box images are exact for axis-aligned branches.  For general affine
    branches containment uses the vertex bounding box (exact for
    invertible linear parts, since open images avoid the boundary) and
    disjointness a separating-axis test over the parallelotope normals.
    """
    candidate = np.asarray(candidate, dtype=float)
    if candidate.shape != (ifs.dimension, 2):
        raise ValueError("candidate must be a (d, 2) box")
    if np.any(candidate[:, 0] >= candidate[:, 1]):
        raise DegenerateCandidate("candidate box has empty interior")
    if np.any(candidate[:, 0] < ifs.box.lo - 1e-12) or np.any(candidate[:, 1] > ifs.box.hi + 1e-12):
        raise ValueError("candidate must sit inside the ambient box")

    center = 0.5 * (candidate[:, 0] + candidate[:, 1])
    image_boxes = [g.image_box(candidate) for g in ifs.branches]

    # (a) containment of every open image in the open candidate
    for i, (gamma, img) in enumerate(zip(ifs.branches, image_boxes), start=1):
        if np.any(img[:, 0] < candidate[:, 0] - 1e-12) or np.any(img[:, 1] > candidate[:, 1] + 1e-12):
            corners = np.array(list(product(*candidate)), dtype=float)
            outside = ~np.all((gamma(corners) >= candidate[:, 0] - 1e-12)
                              & (gamma(corners) <= candidate[:, 1] + 1e-12), axis=1)
            bad = corners[outside][0] if outside.any() else center
            witness = gamma(bad + 1e-9 * (center - bad))
            return OscResult(False, "containment", (i,), witness)

    # (b) pairwise disjointness of the open images
    all_axis_aligned = all(g.is_axis_aligned() for g in ifs.branches)
    for (i, box_i), (j, box_j) in combinations(enumerate(image_boxes, start=1), 2):
        if all_axis_aligned:
            if boxes_overlap_openly(box_i, box_j):
                overlap = box_intersection(box_i, box_j)
                witness = 0.5 * (overlap[:, 0] + overlap[:, 1])
                return OscResult(False, "overlap", (i, j), witness)
            continue
        gi, gj = ifs.branches[i - 1], ifs.branches[j - 1]
        corners = np.array(list(product(*candidate)), dtype=float)
        verts_i, verts_j = gi(corners), gj(corners)
        axes = [np.linalg.inv(gi.linear)[a] for a in range(ifs.dimension)]
        axes += [np.linalg.inv(gj.linear)[a] for a in range(ifs.dimension)]
        if ifs.dimension == 3:
            for ea, eb in product(gi.linear.T, gj.linear.T):
                cross = np.cross(ea, eb)
                if np.linalg.norm(cross) > 1e-12:
                    axes.append(cross)
        axes = np.array([u / np.linalg.norm(u) for u in axes])
        if not _separating_axis_disjoint(verts_i, verts_j, axes):
            witness = _overlap_witness(ifs, candidate, i, j)
            return OscResult(False, "overlap", (i, j), witness)
    return OscResult(True)


def _overlap_witness(ifs: IfsSystem, candidate: np.ndarray, i: int, j: int) -> np.ndarray | None:
    """Grid search for a point of g_i(V) that also lies in open g_j(V)."""
    gi, gj = ifs.branches[i - 1], ifs.branches[j - 1]
    for resolution in (33, 129, 513):
        axes = [np.linspace(lo, hi, resolution + 1)[1:-1] for lo, hi in candidate]
        mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
        images = gi(mesh)
        pre = gj.inverse(images)
        strict = np.all((pre > candidate[:, 0] + 1e-15) & (pre < candidate[:, 1] - 1e-15), axis=1)
        if strict.any():
            return images[strict][0]
    return None


# ---------------------------------------------------------------------------
# Expected-set comparison (exact union equality for points and segments)
# ---------------------------------------------------------------------------

def _point_segment_distance(point: np.ndarray, endpoints: np.ndarray) -> float:
    a, b = endpoints
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else float(np.clip((point - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(point - (a + t * ab)))


def distance_to_pieces(point: np.ndarray, pieces) -> float:
    """Distance from a point to a union of expected points/segments."""
    best = np.inf
    for piece in pieces:
        if piece.ndim == 1:
            best = min(best, float(np.linalg.norm(point - piece)))
        else:
            best = min(best, _point_segment_distance(point, piece))
    return best


def pieces_match_expected(pieces: list[AffinePiece], expected_segments,
                          expected_points=(), tol: float = 1e-9) -> bool:
    """Union equality between reported pieces and stated segments/points.

    Forward inclusion samples every reported piece densely and measures
    the distance to the expected union.  Reverse inclusion covers each
    expected segment by the parameter intervals of collinear reported
    pieces (an exact 1-D interval-union argument) and requires each
    expected point to be hit.
    """
    expected_segments = [np.asarray(seg, dtype=float) for seg in expected_segments]
    expected_points = [np.asarray(p, dtype=float) for p in expected_points]
    union = expected_segments + expected_points

    if not pieces:
        return not union

    for piece in pieces:
        if piece.dimension > 1:
            return False
        for x in piece.sample(65):
            if distance_to_pieces(x, union) > tol:
                return False

    for point in expected_points:
        hit = any(
            (p.dimension == 0 and np.linalg.norm(p.point - point) <= tol)
            or (p.dimension == 1 and _point_segment_distance(point, p.endpoints) <= tol)
            for p in pieces
        )
        if not hit:
            return False

    for seg in expected_segments:
        a, b = seg
        length = float(np.linalg.norm(b - a))
        intervals = []
        for piece in pieces:
            if piece.dimension != 1:
                continue
            e0, e1 = piece.endpoints
            if _point_segment_distance(e0, seg) > tol or _point_segment_distance(e1, seg) > tol:
                continue
            t0 = float((e0 - a) @ (b - a)) / length**2
            t1 = float((e1 - a) @ (b - a)) / length**2
            intervals.append(tuple(sorted((t0, t1))))
        if not intervals:
            return False
        intervals.sort()
        covered = 0.0
        for lo, hi in intervals:
            if lo > covered + tol / length:
                return False
            covered = max(covered, hi)
        if covered < 1.0 - tol / length:
            return False
    return True
