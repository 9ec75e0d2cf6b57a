"""Batch front end: load a system, run verification suites, emit CSV tables.

Commands: verify, measure, operators, reconstruct, report (all of them).
Exit codes: 0 all checks passed, 1 at least one check failed, 2
configuration error (bad flags, unknown system, cell-budget overflow).
Outputs are plain CSV with LF line endings and 17-significant-digit
floats; a rerun with the same configuration is byte-identical.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import bimodule, catalog, geometry, measure, operators
from .errors import ConfigError, DepthOverflow, IfsLabError
from .ifsfile import load_ifs
from .sampling import random_trig_symbol

DEFAULT_TOLERANCES = {
    "inverse_branch": 1e-9,
    "defect_slack": 1e-9,
    "piece_residual": 1e-12,
    "fixpoint_tv": 1e-10,
    "isometry": 1e-12,
    "projection": 1e-12,
    "transfer_eq": 1e-14,
    "covariance_ratio_lo": 0.25,
    "covariance_ratio_hi": 0.75,
    "covariant_rep": 1e-12,
    "reconstruction_ratio_lo": 0.3,
    "reconstruction_ratio_hi": 0.7,
    "chaos_band_sigma": 4.0,
    "chaos_band_fraction": 0.95,
}

VERIFY_SYMBOLS = 5
VERIFY_TRIALS = 5


@dataclass(frozen=True)
class RunConfig:
    system: str = "tent_square"
    depths: tuple[int, int] = (2, 5)
    samples: int = 10**6
    seed: int = 7
    out_dir: str = "reports"
    delta: float = 0.05
    parallel: bool = False
    assume_separation: bool = True
    tolerances: dict = field(default_factory=dict)

    def tol(self, key: str) -> float:
        return self.tolerances.get(key, DEFAULT_TOLERANCES[key])


@dataclass(frozen=True)
class CheckRow:
    suite: str
    check: str
    detail: str
    value: float
    threshold: float
    passed: bool


def _load_system(name: str):
    """Return (system, expected-facts-or-None) from catalog name or file path."""
    if os.path.exists(name) or name.endswith((".ifs", ".ini", ".cfg")):
        return load_ifs(name), None
    try:
        entry = catalog.get(name)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    return entry.system, entry.expected


# ---------------------------------------------------------------------------
# Suite helpers
# ---------------------------------------------------------------------------

def _symbol_seeds(cfg: RunConfig, count: int):
    return [(cfg.seed, 101, k) for k in range(count)]


def covariance_residual(ifs, symbol, depth: int) -> float:
    """|C* M_a C - M_(La)| with a cell-averaged at depth+1 and La at depth."""
    a_fine = operators.sample_to_cells(ifs, symbol.evaluator, depth + 1, rule="average")
    comp = operators.composition_op(ifs, depth)
    comp_star = operators.adjoint_composition_op(ifs, depth)
    lhs = comp_star.compose(operators.mult_op(ifs, a_fine)).compose(comp)

    def transferred(points):
        points = np.atleast_2d(points)
        total = np.zeros(len(points))
        for gamma in ifs.branches:
            total += np.asarray(symbol.evaluator(gamma(points)))
        return total / ifs.n_branches

    la_coarse = operators.sample_to_cells(ifs, transferred, depth, rule="average")
    rhs = operators.mult_op(ifs, la_coarse)
    return operators.operator_norm(lhs.subtract(rhs))


def isometry_residual(ifs, depth: int) -> float:
    comp = operators.composition_op(ifs, depth)
    identity = operators.mult_op(
        ifs, operators.CellFunction(depth, np.ones(ifs.n_branches**depth)))
    return operators.operator_norm(comp.adjoint().compose(comp).subtract(identity))


def projection_residual(ifs, depth: int) -> float:
    comp = operators.composition_op(ifs, depth)
    proj = comp.compose(comp.adjoint())
    return operators.operator_norm(proj.compose(proj).subtract(proj))


def transfer_equality_residual(ifs, depth: int) -> float:
    cstar = operators.adjoint_composition_op(ifs, depth)
    transfer = operators.transfer_op(ifs, depth)
    diff = (cstar.matrix - transfer.matrix)
    return 0.0 if diff.nnz == 0 else float(np.abs(diff.data).max())


def _ratio_rows(suite, name, detail_prefix, residuals, depths, lo, hi):
    rows = []
    for (m0, r0), (m1, r1) in zip(list(zip(depths, residuals))[:-1],
                                  list(zip(depths, residuals))[1:]):
        ratio = r1 / r0 if r0 > 0 else float("inf")
        rows.append(CheckRow(suite, name, f"{detail_prefix} depth {m0}->{m1}",
                             ratio, hi, lo <= ratio <= hi))
    return rows


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------

def geometry_rows(cfg: RunConfig, ifs, expected) -> list[CheckRow]:
    rows = []
    tol = cfg.tol("inverse_branch")
    residual = geometry.verify_inverse_branches(ifs, 64)
    rows.append(CheckRow("geometry", "inverse-branch", "grid 64", residual, tol,
                         residual <= tol))

    resolution = 128
    defect = geometry.self_similarity_defect(ifs, resolution)
    spacing = float(np.linalg.norm(ifs.box.sizes / resolution))
    threshold = spacing + cfg.tol("defect_slack")
    rows.append(CheckRow("geometry", "self-similarity-defect", f"grid {resolution}",
                         defect, threshold, defect <= threshold))

    candidate = expected.osc_candidate if expected is not None else ifs.box.intervals
    osc = geometry.check_open_set_condition(ifs, candidate)
    detail = "candidate open box"
    if not osc.passed:
        witness = "none" if osc.witness is None else np.array2string(osc.witness, precision=6)
        detail = f"failed {osc.failed_condition} at pair {osc.violating}, witness {witness}"
    rows.append(CheckRow("geometry", "open-set-condition", detail,
                         0.0 if osc.passed else 1.0, 0.0, osc.passed))

    pieces = geometry.branch_coincidence_set(ifs)
    piece_tol = cfg.tol("piece_residual")
    c_res = geometry.coincidence_residual(ifs, pieces)
    rows.append(CheckRow("geometry", "coincidence-set", f"{len(pieces)} pieces",
                         c_res, piece_tol, c_res <= piece_tol))
    values = geometry.branch_value_set(ifs, pieces)
    b_res = geometry.value_residual(ifs, pieces, values)
    rows.append(CheckRow("geometry", "value-set", f"{len(values)} pieces",
                         b_res, piece_tol, b_res <= piece_tol))

    if expected is not None:
        ok_c = geometry.pieces_match_expected(
            pieces, expected.coincidence_segments, expected.coincidence_points)
        rows.append(CheckRow("geometry", "coincidence-expected", "matches catalog",
                             0.0 if ok_c else 1.0, 0.0, ok_c))
        ok_b = geometry.pieces_match_expected(
            values, expected.value_segments, expected.value_points)
        rows.append(CheckRow("geometry", "value-expected", "matches catalog",
                             0.0 if ok_b else 1.0, 0.0, ok_b))
        finite = geometry.is_finite_branch(ifs)
        rows.append(CheckRow("geometry", "finite-branch",
                             f"got {finite}, expected {expected.finite_branch}",
                             float(finite != expected.finite_branch), 0.0,
                             finite == expected.finite_branch))
    return rows


def _refused(suite: str, reason: str) -> list[CheckRow]:
    return [CheckRow(suite, "refused", reason, 1.0, 0.0, False)]


def measure_rows(cfg: RunConfig, ifs, attractor_ok: bool) -> list[CheckRow]:
    if not attractor_ok:
        return _refused("measure", "attractor is not the ambient box")
    depth = cfg.depths[1]
    exact = measure.exact_cell_masses(ifs, depth)
    fixpoint = measure.markov_fixpoint(ifs, depth)
    tv = measure.total_variation(exact.masses, fixpoint.masses)
    tol = cfg.tol("fixpoint_tv")
    return [CheckRow("measure", "fixpoint-vs-exact", f"depth {depth}", tv, tol, tv <= tol)]


def operator_rows(cfg: RunConfig, ifs, attractor_ok: bool) -> list[CheckRow]:
    if not attractor_ok:
        return _refused("operators", "attractor is not the ambient box")
    rows = []
    depths = list(range(cfg.depths[0], cfg.depths[1] + 1))
    for depth in depths:
        residual = isometry_residual(ifs, depth)
        tol = cfg.tol("isometry")
        rows.append(CheckRow("operators", "isometry", f"depth {depth}",
                             residual, tol, residual <= tol))
        residual = projection_residual(ifs, depth)
        tol = cfg.tol("projection")
        rows.append(CheckRow("operators", "projection", f"depth {depth}",
                             residual, tol, residual <= tol))
        if ifs.is_hutchinson():
            residual = transfer_equality_residual(ifs, depth)
            tol = cfg.tol("transfer_eq")
            rows.append(CheckRow("operators", "transfer-eq", f"depth {depth}",
                                 residual, tol, residual <= tol))
        else:
            rows.append(CheckRow("operators", "transfer-eq",
                                 "requires uniform weights", 1.0, 0.0, False))

    if ifs.is_hutchinson():
        lo, hi = cfg.tol("covariance_ratio_lo"), cfg.tol("covariance_ratio_hi")
        for k, seed in enumerate(_symbol_seeds(cfg, VERIFY_SYMBOLS)):
            symbol = random_trig_symbol(seed, ifs.dimension)
            residuals = [covariance_residual(ifs, symbol, m) for m in depths]
            bound = symbol.lip_bound * ifs.box.diameter
            for m, res in zip(depths, residuals):
                limit = bound * ifs.c2**m
                rows.append(CheckRow("operators", "covariance-bound",
                                     f"symbol {k} depth {m}", res, limit, res <= limit))
            rows.extend(_ratio_rows("operators", "covariance-ratio", f"symbol {k}",
                                    residuals, depths, lo, hi))
    else:
        rows.append(CheckRow("operators", "covariance-bound",
                             "requires uniform weights", 1.0, 0.0, False))
    return rows


def _auto_support(ifs, delta: float):
    """First window among a fixed candidate family that clears the value set."""
    from itertools import product

    for fractions in product((0.5, 0.25, 0.75), repeat=ifs.dimension):
        center = ifs.box.lo + np.asarray(fractions) * ifs.box.sizes
        half = 0.15 * ifs.box.sizes
        box = np.stack([center - half, center + half], axis=1)
        if bimodule.support_distance_to_value_set(ifs, box) >= delta:
            return box
    return None


def reconstruction_rows(cfg: RunConfig, ifs, expected, attractor_ok: bool) -> list[CheckRow]:
    if not attractor_ok:
        return _refused("reconstruction", "attractor is not the ambient box")
    if not ifs.is_hutchinson():
        return _refused("reconstruction", "requires uniform weights")
    rows = []
    support = expected.admissible_support if expected is not None else None
    if support is None:
        support = _auto_support(ifs, cfg.delta)
    if support is None:
        return [CheckRow("reconstruction", "bump-partition",
                         "no admissible support window found", 1.0, 0.0, False)]
    try:
        symbol = bimodule.admissible_symbol(ifs, support, delta=cfg.delta)
        partition = bimodule.build_bump_partition(ifs, symbol)
    except (ValueError, IfsLabError) as exc:
        return [CheckRow("reconstruction", "bump-partition", str(exc), 1.0, 0.0, False)]

    depths = list(range(cfg.depths[0], cfg.depths[1] + 1))
    rep_depth = depths[0]
    res1, res2 = bimodule.covariant_rep_check(ifs, rep_depth, VERIFY_TRIALS, seed=cfg.seed)
    tol = cfg.tol("covariant_rep")
    rows.append(CheckRow("reconstruction", "covariant-rep-module",
                         f"depth {rep_depth}", res1, tol, res1 <= tol))
    rows.append(CheckRow("reconstruction", "covariant-rep-inner",
                         f"depth {rep_depth}", res2, tol, res2 <= tol))

    # The depth-m experiment runs on level m+1 data throughout: the
    # composite operator acts on V_{m+1}, and the theta check uses the
    # same sampled vectors.
    theta_residuals, op_residuals = [], []
    for depth in depths:
        xis, etas = bimodule.reconstruction_vectors(ifs, symbol, partition, depth + 1)
        theta_residuals.append(bimodule.verify_theta_reconstruction(
            ifs, symbol, xis, etas, VERIFY_TRIALS, depth + 1, seed=cfg.seed))
        op_residuals.append(bimodule.verify_operator_reconstruction(
            ifs, symbol, xis, etas, depth))
    lo, hi = cfg.tol("reconstruction_ratio_lo"), cfg.tol("reconstruction_ratio_hi")
    rows.extend(_ratio_rows("reconstruction", "theta-ratio", "trial max",
                            theta_residuals, depths, lo, hi))
    rows.extend(_ratio_rows("reconstruction", "operator-ratio", f"{partition.size} bumps",
                            op_residuals, depths, lo, hi))
    return rows


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _write_check_csv(path, rows: list[CheckRow]) -> None:
    with open(path, "w", newline="\n") as handle:
        handle.write("check,detail,value,threshold,status\n")
        for row in rows:
            status = "pass" if row.passed else "fail"
            detail = row.detail.replace(",", ";")
            handle.write(f"{row.check},{detail},{row.value:.17g},"
                         f"{row.threshold:.17g},{status}\n")


def _finish(rows: list[CheckRow], out_dir: str, files: dict) -> int:
    os.makedirs(out_dir, exist_ok=True)
    for filename, file_rows in sorted(files.items()):
        _write_check_csv(os.path.join(out_dir, filename), file_rows)
    failing = [row for row in rows if not row.passed]
    if failing:
        first = failing[0]
        print(f"FIRST FAILING CHECK: {first.check} ({first.suite}: {first.detail}); "
              f"{len(failing)} of {len(rows)} checks failed", file=sys.stderr)
        return 1
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    ifs, expected = _load_system(cfg.system)
    rows = geometry_rows(cfg, ifs, expected)
    attractor_ok = rows[1].passed  # self-similarity defect row
    m_rows = measure_rows(cfg, ifs, attractor_ok)
    o_rows = operator_rows(cfg, ifs, attractor_ok)
    r_rows = reconstruction_rows(cfg, ifs, expected, attractor_ok)
    all_rows = rows + m_rows + o_rows + r_rows
    return _finish(all_rows, cfg.out_dir, {
        "verify_geometry.csv": rows,
        "verify_measure.csv": m_rows,
        "verify_operators.csv": o_rows,
        "verify_reconstruction.csv": r_rows,
    })


def cmd_measure(cfg: RunConfig) -> int:
    ifs, expected = _load_system(cfg.system)
    separated = cfg.assume_separation and (expected is None or expected.measure_separated)
    depth = cfg.depths[0]
    os.makedirs(cfg.out_dir, exist_ok=True)
    rows = []
    fixpoint = measure.markov_fixpoint(ifs, depth)
    measure.write_mass_csv(fixpoint, ifs.n_branches, os.path.join(cfg.out_dir, "measure_fixpoint.csv"))
    empirical = measure.chaos_game(ifs, depth, cfg.samples, cfg.seed)
    measure.write_mass_csv(empirical, ifs.n_branches, os.path.join(cfg.out_dir, "measure_empirical.csv"))
    if separated:
        exact = measure.exact_cell_masses(ifs, depth)
        measure.write_mass_csv(exact, ifs.n_branches, os.path.join(cfg.out_dir, "measure_exact.csv"))
        tv = measure.total_variation(exact.masses, fixpoint.masses)
        tol = cfg.tol("fixpoint_tv")
        rows.append(CheckRow("measure", "fixpoint-vs-exact", f"depth {depth}", tv, tol, tv <= tol))
        sigma = cfg.tol("chaos_band_sigma")
        bands = sigma * np.sqrt(exact.masses * (1 - exact.masses) / cfg.samples)
        inside = np.abs(empirical.masses - exact.masses) <= bands
        fraction = float(inside.mean())
        needed = cfg.tol("chaos_band_fraction")
        rows.append(CheckRow("measure", "chaos-binomial-band",
                             f"N {cfg.samples} depth {depth}", fraction, needed,
                             fraction >= needed))
    else:
        rows.append(CheckRow("measure", "exact-masses",
                             "refused: separation assumption disabled", 1.0, 0.0, False))
    failing = [row for row in rows if not row.passed]
    if failing:
        print(f"FIRST FAILING CHECK: {failing[0].check}", file=sys.stderr)
        return 1
    return 0


def cmd_operators(cfg: RunConfig) -> int:
    ifs, _ = _load_system(cfg.system)
    depths = list(range(cfg.depths[0], cfg.depths[1] + 1))
    table = []
    status = 0
    symbols = [random_trig_symbol(seed, ifs.dimension)
               for seed in _symbol_seeds(cfg, VERIFY_SYMBOLS)]
    for depth in depths:
        residual = isometry_residual(ifs, depth)
        table.append((depth, "isometry", residual, cfg.tol("isometry")))
        residual_p = projection_residual(ifs, depth)
        table.append((depth, "projection", residual_p, cfg.tol("projection")))
        residual_t = transfer_equality_residual(ifs, depth) if ifs.is_hutchinson() else float("nan")
        table.append((depth, "transfer-eq", residual_t, cfg.tol("transfer_eq")))
        cov = max(covariance_residual(ifs, s, depth) for s in symbols) \
            if ifs.is_hutchinson() else float("nan")
        bound = max(s.lip_bound for s in symbols) * ifs.box.diameter * ifs.c2**depth
        table.append((depth, "covariance", cov, bound))
        for _, _, value, limit in table[-4:]:
            # NaN marks an identity that needs uniform weights; a skipped
            # check is a failure, not a silent pass.
            if np.isnan(value) or value > limit:
                status = 1
    os.makedirs(cfg.out_dir, exist_ok=True)
    operators.write_residual_table(os.path.join(cfg.out_dir, "operator_residuals.csv"), table)
    if status:
        print("FIRST FAILING CHECK: operator residual above bound", file=sys.stderr)
    return status


def cmd_reconstruct(cfg: RunConfig) -> int:
    ifs, expected = _load_system(cfg.system)
    resolution = 128
    defect = geometry.self_similarity_defect(ifs, resolution)
    spacing = float(np.linalg.norm(ifs.box.sizes / resolution))
    attractor_ok = defect <= spacing + cfg.tol("defect_slack")
    rows = reconstruction_rows(cfg, ifs, expected, attractor_ok)
    depths = list(range(cfg.depths[0], cfg.depths[1] + 1))
    support = expected.admissible_support if expected is not None else None
    csv_rows = []
    if attractor_ok and support is not None:
        symbol = bimodule.admissible_symbol(ifs, support, delta=cfg.delta)
        partition = bimodule.build_bump_partition(ifs, symbol)
        for depth in depths:
            xis, etas = bimodule.reconstruction_vectors(ifs, symbol, partition, depth + 1)
            res_theta = bimodule.verify_theta_reconstruction(
                ifs, symbol, xis, etas, VERIFY_TRIALS, depth + 1, seed=cfg.seed)
            res_op = bimodule.verify_operator_reconstruction(ifs, symbol, xis, etas, depth)
            csv_rows.append((ifs.name or cfg.system, depth, partition.size, res_theta, res_op))
    os.makedirs(cfg.out_dir, exist_ok=True)
    bimodule.write_reconstruction_csv(os.path.join(cfg.out_dir, "reconstruction.csv"), csv_rows)
    failing = [row for row in rows if not row.passed]
    if failing:
        print(f"FIRST FAILING CHECK: {failing[0].check} ({failing[0].detail})", file=sys.stderr)
        return 1
    return 0


def cmd_report(cfg: RunConfig) -> int:
    commands = [("measure", cmd_measure), ("operators", cmd_operators),
                ("reconstruct", cmd_reconstruct), ("verify", cmd_verify)]
    if cfg.parallel:
        with ThreadPoolExecutor(max_workers=4) as pool:
            results = {name: pool.submit(fn, cfg) for name, fn in commands}
        return max(future.result() for future in results.values())
    return max(fn(cfg) for _, fn in commands)


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------

def _parse_depths(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split("..")
        lo, hi = int(lo), int(hi)
    except ValueError:
        raise ConfigError(f"depths must look like 2..5, got {text!r}") from None
    if lo < 0 or hi < lo:
        raise ConfigError(f"invalid depth range {text!r}")
    return lo, hi


def _config_from_file(path: str) -> dict:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path!r}")
    values: dict = {}
    if "run" in parser:
        run = parser["run"]
        if "system" in run:
            values["system"] = run["system"]
        if "depths" in run:
            values["depths"] = _parse_depths(run["depths"])
        for key in ("samples", "seed"):
            if key in run:
                values[key] = int(run[key])
        if "out" in run:
            values["out_dir"] = run["out"]
        if "delta" in run:
            values["delta"] = float(run["delta"])
        if "parallel" in run:
            values["parallel"] = run.getboolean("parallel")
    if "tolerances" in parser:
        values["tolerances"] = {key: float(val) for key, val in parser["tolerances"].items()}
    return values


def build_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = replace(cfg, **_config_from_file(args.config))
    overrides: dict = {}
    if args.system is not None:
        overrides["system"] = args.system
    if args.depths is not None:
        overrides["depths"] = _parse_depths(args.depths)
    if args.samples is not None:
        overrides["samples"] = args.samples
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.delta is not None:
        overrides["delta"] = args.delta
    if args.parallel:
        overrides["parallel"] = True
    if args.no_separation:
        overrides["assume_separation"] = False
    tolerances = dict(cfg.tolerances)
    for item in args.tol or []:
        try:
            key, value = item.split("=", 1)
            tolerances[key] = float(value)
        except ValueError:
            raise ConfigError(f"--tol expects KEY=NUMBER, got {item!r}") from None
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(f"unknown tolerance {key!r}")
    overrides["tolerances"] = tolerances
    return replace(cfg, **overrides)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ifslab",
        description="Verification suites for iterated-function-system operator identities.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("verify", "run every check suite and threshold the residuals"),
        ("measure", "emit exact, fixed-point and chaos-game cell masses"),
        ("operators", "emit the operator-identity residual table"),
        ("reconstruct", "emit the partition-of-unity reconstruction table"),
        ("report", "run all of the above"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--system", help="catalog name or definition file path")
        cmd.add_argument("--depths", help="depth range, e.g. 2..5")
        cmd.add_argument("--samples", type=int, help="chaos-game sample count")
        cmd.add_argument("--seed", type=int, help="master seed")
        cmd.add_argument("--out", help="output directory for CSV reports")
        cmd.add_argument("--config", help="config file with [run] and [tolerances]")
        cmd.add_argument("--delta", type=float, help="clearance to the value set")
        cmd.add_argument("--parallel", action="store_true",
                         help="run report suites concurrently")
        cmd.add_argument("--no-separation", action="store_true",
                         help="drop the measure-separation assumption (refuses exact masses)")
        cmd.add_argument("--tol", action="append", metavar="KEY=VALUE",
                         help="override a tolerance (repeatable)")
    return parser


COMMANDS = {
    "verify": cmd_verify,
    "measure": cmd_measure,
    "operators": cmd_operators,
    "reconstruct": cmd_reconstruct,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except DepthOverflow as exc:
        print(f"DepthOverflow: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
