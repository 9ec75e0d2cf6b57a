"""The C(K)-bimodule structure and the partition-of-unity reconstruction.

X = C(K) carries the A-valued inner product <xi, eta>_A = L(conj(xi) eta)
(one letter shallower at cell resolution), the two-sided module action
(a . xi . b)(x) = a(x) xi(x) b(phi(x)), and the rank-one operators
theta_{xi,eta} zeta = xi <eta, zeta>_A.  For a symbol vanishing near the
two-branch value set, finitely many bump pairs reconstruct multiplication
by the symbol; the residual checks here measure that reconstruction
against the cell-average reference symbol.

Sampling convention for the residual suites: reconstruction vectors and
trial fields are point-sampled at cell centers (which commutes with the
affine branch maps), while the reference multiplication symbol uses the
cell-average rule.  Center sampling alone satisfies every identity to
machine precision at all depths; the mismatch between point and average
sampling is what the residuals measure, and it contracts at the branch
rate per depth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import CoverFailure, DepthMismatch
from .geometry import (AffinePiece, IfsSystem, boxes_overlap_openly, box_intersection,
                       branch_index_set, branch_value_set)
from .measure import cell_grid, exact_cell_masses
from .operators import (CellFunction, CellOperator, adjoint_composition_op,
                        composition_op, inner_product, mult_op, operator_norm,
                        pullback, sample_to_cells, transfer_values)
from .sampling import LipschitzSymbol, random_trig_symbol, uniform_doubles


# ---------------------------------------------------------------------------
# Bimodule algebra at cell level
# ---------------------------------------------------------------------------

def a_valued_inner(ifs: IfsSystem, xi: CellFunction, eta: CellFunction) -> CellFunction:
    """<xi, eta>_A = transfer of conj(xi) eta; result one letter shallower."""
    if xi.depth != eta.depth:
        raise DepthMismatch("module elements must share a depth")
    if xi.depth < 1:
        raise DepthMismatch("the inner product drops one letter; depth must be >= 1")
    if not ifs.is_hutchinson():
        raise ValueError("the A-valued inner product uses uniform weights")
    return CellFunction(xi.depth - 1, transfer_values(ifs, np.conj(xi.values) * eta.values))


def bimodule_action(ifs: IfsSystem, a: CellFunction, xi: CellFunction,
                    b: CellFunction) -> CellFunction:
    """(a . xi . b) at cell i.w: a(i.w) xi(i.w) b(w)."""
    if a.depth != xi.depth or b.depth != xi.depth - 1:
        raise DepthMismatch("need a, xi at depth m+1 and b at depth m")
    lifted = pullback(ifs, b)
    return CellFunction(xi.depth, a.values * xi.values * lifted.values)


@dataclass(frozen=True)
class CographFunction:
    """A function on the union of cographs: one cell function per branch."""

    components: tuple

    def __post_init__(self):
        if not self.components:
            raise ValueError("need at least one component")
        depths = {f.depth for f in self.components}
        if len(depths) != 1:
            raise DepthMismatch("cograph components must share a depth")

    @property
    def depth(self) -> int:
        return self.components[0].depth


def cograph_inner(f: CographFunction, g: CographFunction) -> CellFunction:
    """The cograph-side A-valued inner product: sum_i conj(f_i) g_i."""
    if len(f.components) != len(g.components) or f.depth != g.depth:
        raise DepthMismatch("cograph functions must match in shape")
    total = sum(np.conj(fi.values) * gi.values
                for fi, gi in zip(f.components, g.components))
    return CellFunction(f.depth, total)


def cograph_iso(ifs: IfsSystem, f: CographFunction) -> CellFunction:
    """Phi: the i-th sheet value at base w becomes sqrt(n) times cell i.w."""
    if len(f.components) != ifs.n_branches:
        raise DepthMismatch("need one component per branch")
    root = np.sqrt(ifs.n_branches)
    values = np.concatenate([root * fi.values for fi in f.components])
    return CellFunction(f.depth + 1, values)


def cograph_iso_inverse(ifs: IfsSystem, xi: CellFunction) -> CographFunction:
    """Recover the sheets: f_i(w) = xi(i.w) / sqrt(n); exact round trip."""
    if xi.depth < 1:
        raise DepthMismatch("need depth >= 1 to split off the first letter")
    root = np.sqrt(ifs.n_branches)
    sheets = xi.values.reshape(ifs.n_branches, -1) / root
    return CographFunction(tuple(CellFunction(xi.depth - 1, row) for row in sheets))


def theta_apply(ifs: IfsSystem, xi: CellFunction, eta: CellFunction,
                zeta: CellFunction) -> CellFunction:
    """theta_{xi,eta} zeta = xi . <eta, zeta>_A (right action through phi)."""
    if not (xi.depth == eta.depth == zeta.depth):
        raise DepthMismatch("theta needs equal depths")
    inner = a_valued_inner(ifs, eta, zeta)
    return CellFunction(xi.depth, xi.values * pullback(ifs, inner).values)


def theta_matrix(ifs: IfsSystem, xi: CellFunction, eta: CellFunction) -> CellOperator:
    """theta_{xi,eta} as the matrix D_xi (C C*) D_conj(eta) on V_{m+1}."""
    if xi.depth != eta.depth or xi.depth < 1:
        raise DepthMismatch("theta needs equal depths >= 1")
    comp = composition_op(ifs, xi.depth - 1)
    proj = comp.compose(adjoint_composition_op(ifs, xi.depth - 1))
    return mult_op(ifs, xi).compose(proj).compose(
        mult_op(ifs, eta.map_values(np.conj)))


# ---------------------------------------------------------------------------
# Admissible symbols and bump partitions
# ---------------------------------------------------------------------------

def _box_to_segment_distance(box: np.ndarray, endpoints: np.ndarray) -> float:
    """Exact distance from a closed box to a segment.

    dist^2(box, p + s v) is piecewise quadratic and convex in s; minimize
    on each interval between the axis-crossing breakpoints.
    """
    a, b = np.asarray(endpoints, dtype=float)
    v = b - a
    lo, hi = box[:, 0], box[:, 1]

    def clamp_gap(point):
        return np.maximum(np.maximum(lo - point, point - hi), 0.0)

    breaks = {0.0, 1.0}
    for axis in range(box.shape[0]):
        if v[axis] != 0.0:
            for bound in (lo[axis], hi[axis]):
                s = (bound - a[axis]) / v[axis]
                if 0.0 < s < 1.0:
                    breaks.add(float(s))
    knots = sorted(breaks)
    best = np.inf
    for left, right in zip(knots[:-1], knots[1:]):
        # On (left, right) the active gap terms are fixed linear forms
        # alpha + beta s; the quadratic vertex is -B / 2A.
        mid = 0.5 * (left + right)
        point = a + mid * v
        low_side = point < lo
        high_side = point > hi
        beta = np.where(low_side, -v, np.where(high_side, v, 0.0))
        alpha = np.where(low_side, lo - a, np.where(high_side, a - hi, 0.0))
        quad_a = float(beta @ beta)
        quad_b = 2.0 * float(alpha @ beta)
        candidates = [left, right]
        if quad_a > 0.0:
            candidates.append(min(max(-quad_b / (2.0 * quad_a), left), right))
        for s in candidates:
            gap = clamp_gap(a + s * v)
            best = min(best, float(gap @ gap))
    return float(np.sqrt(best))


def _box_to_piece_distance(box: np.ndarray, piece: AffinePiece) -> float:
    if piece.dimension == 0:
        gap = np.maximum(np.maximum(box[:, 0] - piece.point, piece.point - box[:, 1]), 0.0)
        return float(np.linalg.norm(gap))
    if piece.dimension == 1:
        return _box_to_segment_distance(box, piece.endpoints)
    raise ValueError("bump partitions support value sets of dimension <= 1")


def support_distance_to_value_set(ifs: IfsSystem, support_box: np.ndarray) -> float:
    pieces = branch_value_set(ifs)
    if not pieces:
        return np.inf
    return min(_box_to_piece_distance(np.asarray(support_box, dtype=float), piece)
               for piece in pieces)


@dataclass(frozen=True)
class AdmissibleSymbol:
    """A symbol with declared compact support away from the value set."""

    field: LipschitzSymbol
    delta: float

    @property
    def support_box(self):
        return self.field.support_box

    def __call__(self, points):
        return self.field(points)

    def validate(self, ifs: IfsSystem, samples: int = 200, seed: int = 0) -> float:
        """Largest |a| found on the delta/2-neighborhood of the value set."""
        pieces = branch_value_set(ifs)
        worst = 0.0
        for piece in pieces:
            anchors = piece.sample(samples)
            jitter = uniform_doubles((seed, piece.pair[0], piece.pair[1]),
                                     anchors.size).reshape(anchors.shape)
            shifted = anchors + (jitter - 0.5) * self.delta
            shifted = np.clip(shifted, ifs.box.lo, ifs.box.hi)
            worst = max(worst, float(np.abs(self(shifted)).max()))
        return worst


def admissible_symbol(ifs: IfsSystem, support_box, delta: float = 0.05,
                      amplitude: float = 1.0) -> AdmissibleSymbol:
    """Smooth window on `support_box`, rejected if it crowds the value set."""
    from .sampling import window_symbol

    support_box = np.asarray(support_box, dtype=float)
    gap = support_distance_to_value_set(ifs, support_box)
    if gap < delta:
        raise ValueError(
            f"support is {gap:.4g} from the two-branch value set, closer than delta={delta}")
    return AdmissibleSymbol(window_symbol(support_box, amplitude), delta)


@dataclass(frozen=True)
class BumpPartition:
    """Lattice tent bumps subordinate to admissible rectangles.

    Nodes sit on a pitch-h lattice anchored at the box corner; the bump
    at node q is the product tent prod_a max(0, 1 - |x_a - q_a| / h).
    All lattice tents sum to one everywhere, so the selected family sums
    to one on the symbol's support and each support rectangle
    (q - h, q + h) passed the three neighbourhood conditions.
    """

    nodes: np.ndarray  # (M, d)
    pitch: float
    margin: float  # certified clearance to the value set

    @property
    def size(self) -> int:
        return len(self.nodes)

    def bump_values(self, points: np.ndarray) -> np.ndarray:
        """(len(points), M) tent values."""
        points = np.atleast_2d(points)
        rel = 1.0 - np.abs(points[:, None, :] - self.nodes[None, :, :]) / self.pitch
        return np.prod(np.maximum(rel, 0.0), axis=2)

    def sum_values(self, points: np.ndarray) -> np.ndarray:
        return self.bump_values(points).sum(axis=1)


def _rectangle_conditions_ok(ifs: IfsSystem, node: np.ndarray, pitch: float,
                             value_pieces: list[AffinePiece], clearance: float):
    """Check conditions (1)-(3) for the open rect (node-h, node+h)^d.

    Returns None when all pass, otherwise the name of the failed
    condition.  Box images are exact for axis-aligned branches; for
    general affine branches the vertex hulls overestimate the sets, so a
    failure here can only be conservative, never a false pass.
    """
    rect = np.stack([node - pitch, node + pitch], axis=1)
    clipped = box_intersection(rect, ifs.box.intervals)
    if clipped is None:
        return None

    for piece in value_pieces:
        if _box_to_piece_distance(clipped, piece) < clearance:
            return "value-set-clearance"

    members = branch_index_set(ifs, node)
    image_boxes = ifs.image_boxes()
    for i in range(1, ifs.n_branches + 1):
        if i in members:
            gamma = ifs.branches[i - 1]
            corners = np.array(np.meshgrid(*clipped, indexing="ij")).reshape(ifs.dimension, -1).T
            pre = gamma.inverse(corners)
            pre_box = np.stack([pre.min(axis=0), pre.max(axis=0)], axis=1)
            pre_box = box_intersection(pre_box, ifs.box.intervals)
            if pre_box is None:
                continue
            for j, gamma_j in enumerate(ifs.branches, start=1):
                if j == i:
                    continue
                img = gamma_j.image_box(pre_box)
                if boxes_overlap_openly(img, clipped):
                    return "branch-return"
        else:
            if boxes_overlap_openly(clipped, image_boxes[i - 1]):
                return "foreign-branch"
    return None


def build_bump_partition(ifs: IfsSystem, symbol: AdmissibleSymbol,
                         min_pitch: float = 2.0**-12) -> BumpPartition:
    """Cover the symbol's support by dyadically shrinking lattice tents.

    Starts from the largest dyadic pitch compatible with the box and
    halves it until every tent rectangle passes the exact interval tests;
    underflow of `min_pitch` raises CoverFailure with the obstruction.
    """
    support = symbol.support_box
    if support is None:
        return BumpPartition(np.zeros((0, ifs.dimension)), 1.0, symbol.delta / 2.0)
    support = np.asarray(support, dtype=float)
    gap = support_distance_to_value_set(ifs, support)
    if gap < symbol.delta:
        raise ValueError("symbol support is closer than delta to the value set")

    value_pieces = branch_value_set(ifs)
    clearance = symbol.delta / 2.0
    lo = ifs.box.lo
    pitch = 2.0 ** np.floor(np.log2(ifs.box.sizes.min() / 4.0))
    last_obstruction = None
    while pitch >= min_pitch:
        ranges = []
        for a in range(ifs.dimension):
            first = int(np.floor((support[a, 0] - pitch - lo[a]) / pitch)) + 1
            last = int(np.ceil((support[a, 1] + pitch - lo[a]) / pitch)) - 1
            ranges.append(np.arange(first, last + 1))
        mesh = np.meshgrid(*ranges, indexing="ij")
        nodes = lo + pitch * np.stack([m.ravel() for m in mesh], axis=1)
        failed = None
        for node in nodes:
            verdict = _rectangle_conditions_ok(ifs, node, pitch, value_pieces, clearance)
            if verdict is not None:
                failed = (node, verdict)
                break
        if failed is None:
            return BumpPartition(nodes, float(pitch), clearance)
        last_obstruction = failed
        pitch /= 2.0
    if last_obstruction is None:
        raise CoverFailure(f"min_pitch {min_pitch} exceeds the starting pitch")
    node, condition = last_obstruction
    raise CoverFailure(
        f"no admissible rectangle pitch above {min_pitch} (condition {condition} at {node})",
        obstruction=node, condition=condition)


# ---------------------------------------------------------------------------
# Reconstruction checks
# ---------------------------------------------------------------------------

def reconstruction_vectors(ifs: IfsSystem, symbol: AdmissibleSymbol,
                           partition: BumpPartition, depth: int):
    """Pairs xi_k = n a sqrt(f_k), eta_k = sqrt(f_k), point-sampled at depth."""
    centers = cell_grid(ifs, depth).centers
    a_vals = np.asarray(symbol(centers), dtype=float)
    bumps = partition.bump_values(centers)  # (cells, M)
    roots = np.sqrt(bumps)
    n = ifs.n_branches
    xis = [CellFunction(depth, n * a_vals * roots[:, k]) for k in range(partition.size)]
    etas = [CellFunction(depth, roots[:, k].copy()) for k in range(partition.size)]
    return xis, etas


def reference_symbol(ifs: IfsSystem, symbol, depth: int) -> CellFunction:
    """Cell-average discretization of the symbol: the comparison target."""
    return sample_to_cells(ifs, symbol, depth, rule="average")


def trial_field(ifs: IfsSystem, depth: int, seed) -> CellFunction:
    """Seeded Lipschitz trial vector, center-sampled, unit weighted-L2 norm."""
    field = random_trig_symbol(seed, ifs.dimension)
    raw = sample_to_cells(ifs, field.evaluator, depth, rule="center")
    mu = exact_cell_masses(ifs, depth)
    norm = np.sqrt(inner_product(raw, raw, mu).real
                   if np.iscomplexobj(raw.values) else inner_product(raw, raw, mu))
    return CellFunction(depth, raw.values / norm)


def verify_theta_reconstruction(ifs: IfsSystem, symbol: AdmissibleSymbol,
                                xis, etas, trials: int, depth: int,
                                seed: int = 0) -> float:
    """max over trial fields of sup_cell |sum_k theta_{xi_k,eta_k} zeta - a zeta|."""
    a_ref = reference_symbol(ifs, symbol, depth)
    worst = 0.0
    for t in range(trials):
        zeta = trial_field(ifs, depth, (seed, t))
        acc = np.zeros(zeta.n_cells, dtype=zeta.values.dtype)
        for xi, eta in zip(xis, etas):
            acc = acc + theta_apply(ifs, xi, eta, zeta).values
        residual = np.abs(acc - a_ref.values * zeta.values).max()
        worst = max(worst, float(residual))
    return worst


def _projection_pattern(ifs: IfsSystem, depth: int):
    """COO structure of C C* on V_{depth}: entries p_j at (i.w, j.w)."""
    n = ifs.n_branches
    count = n ** (depth - 1)
    w = np.arange(count)
    rows = np.concatenate([i * count + w for i in range(n) for _ in range(n)])
    cols = np.concatenate([j * count + w for _ in range(n) for j in range(n)])
    base = np.concatenate([np.full(count, ifs.weights[j]) for _ in range(n) for j in range(n)])
    return rows, cols, base


def verify_operator_reconstruction(ifs: IfsSystem, symbol: AdmissibleSymbol,
                                   xis, etas, depth: int) -> float:
    """Norm of sum_k M_{xi_k} C C* M_{eta_k}* - M_a on V_{depth+1}.

    The summands share the sparsity pattern of C C*, so the sum is
    accumulated entrywise on that pattern instead of composing matrices.
    """
    level = depth + 1
    a_ref = reference_symbol(ifs, symbol, level)
    count = ifs.n_branches**level
    mass = exact_cell_masses(ifs, level).masses
    if xis:
        rows, cols, base = _projection_pattern(ifs, level)
        vals = np.zeros(len(base))
        for xi, eta in zip(xis, etas):
            if xi.depth != level or eta.depth != level:
                raise DepthMismatch("reconstruction vectors must be sampled at depth+1")
            vals += xi.values[rows] * np.conj(eta.values)[cols]
        matrix = sp.coo_matrix((vals * base, (rows, cols)), shape=(count, count)).tocsr()
        matrix = matrix - sp.diags(a_ref.values)
    else:
        matrix = sp.csr_matrix(-sp.diags(a_ref.values))
    residual_op = CellOperator(level, level, matrix, mass, mass, "dense")
    return operator_norm(residual_op)


def covariant_rep_check(ifs: IfsSystem, depth: int, trials: int,
                        seed: int = 0) -> tuple[float, float]:
    """Residuals of the two covariant-representation relations.

    residual_1: rho(a) V_xi - V_{a.xi} with V_xi = M_xi C; both sides are
    the same diagonal-times-C product, so only multiply rounding remains.
    residual_2: V_xi* V_eta - rho(<xi, eta>_A), exact at cell level up to
    summation rounding.
    """
    comp = composition_op(ifs, depth)
    comp_star = adjoint_composition_op(ifs, depth)
    count = ifs.n_branches ** (depth + 1)
    worst1 = worst2 = 0.0
    for t in range(trials):
        u = uniform_doubles((seed, t), 6 * count).reshape(6, count)
        a = CellFunction(depth + 1, (2 * u[0] - 1) + 1j * (2 * u[1] - 1))
        xi = CellFunction(depth + 1, (2 * u[2] - 1) + 1j * (2 * u[3] - 1))
        eta = CellFunction(depth + 1, (2 * u[4] - 1) + 1j * (2 * u[5] - 1))

        lhs1 = mult_op(ifs, a).compose(mult_op(ifs, xi)).compose(comp)
        rhs1 = mult_op(ifs, CellFunction(depth + 1, a.values * xi.values)).compose(comp)
        worst1 = max(worst1, operator_norm(lhs1.subtract(rhs1)))

        lhs2 = comp_star.compose(
            mult_op(ifs, CellFunction(depth + 1, np.conj(xi.values) * eta.values))
        ).compose(comp)
        rhs2 = mult_op(ifs, CellFunction(
            depth, transfer_values(ifs, np.conj(xi.values) * eta.values)))
        worst2 = max(worst2, operator_norm(lhs2.subtract(rhs2)))
    return worst1, worst2


# ---------------------------------------------------------------------------
# Experiment CSV
# ---------------------------------------------------------------------------

def write_reconstruction_csv(path, rows) -> None:
    """Rows (example, depth, n_bumps, residual_theta, residual_operator)."""
    with open(path, "w", newline="\n") as handle:
        handle.write("example,depth,n_bumps,residual_theta,residual_operator\n")
        for example, depth, n_bumps, res_theta, res_op in rows:
            handle.write(f"{example},{depth},{n_bumps},{res_theta:.17g},{res_op:.17g}\n")
