"""Reading and writing IFS definition files.

The format is sectioned key-value text (configparser syntax) with JSON
arrays as values:

    [system]
    dimension = 2
    box = [[0.0, 1.0], [0.0, 1.0]]
    weights = [0.25, 0.25, 0.25, 0.25]
    phi = tent_square

    [branch.1]
    linear = [[0.5, 0.0], [0.0, 0.5]]
    translation = [0.0, 0.0]

Branch sections are numbered from 1 in display order.  `phi` names a
catalog evaluator, or `piecewise` with a `domain` box in every branch
section, in which case the expanding map applies the first branch inverse
whose domain contains the point.  `weights` is optional (uniform when
absent) and must sum to 1 within 1e-12.
"""

from __future__ import annotations

import configparser
import io
import json

import numpy as np

from .errors import ConfigError
from .geometry import AffineContraction, AmbientBox, IfsSystem


def _parse_value(section: str, key: str, raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"[{section}] {key}: not a JSON value: {raw!r}") from exc


def piecewise_phi(branches, domains, box: AmbientBox):
    """First-match piecewise inverse over the per-branch domain boxes.

    Points outside every domain are routed through the branch with the
    nearest domain box and the result is clipped into the ambient box, so
    the evaluator stays total.
    """
    domains = [np.asarray(dom, dtype=float) for dom in domains]

    def evaluate(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        out = np.empty_like(points)
        assigned = np.zeros(len(points), dtype=bool)
        for gamma, dom in zip(branches, domains):
            free = ~assigned
            if not free.any():
                break
            inside = np.all((points[free] >= dom[:, 0]) & (points[free] <= dom[:, 1]), axis=1)
            rows = np.where(free)[0][inside]
            out[rows] = gamma.inverse(points[rows])
            assigned[rows] = True
        if not assigned.all():
            rows = np.where(~assigned)[0]
            gaps = np.stack([
                np.linalg.norm(np.maximum(
                    np.maximum(dom[:, 0] - points[rows], points[rows] - dom[:, 1]), 0.0), axis=1)
                for dom in domains], axis=1)
            nearest = np.argmin(gaps, axis=1)
            for b, gamma in enumerate(branches):
                sel = rows[nearest == b]
                if sel.size:
                    out[sel] = gamma.inverse(points[sel])
        return np.clip(out, box.lo, box.hi)

    return evaluate


def parse_ifs(text: str) -> IfsSystem:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed definition file: {exc}") from exc
    if "system" not in parser:
        raise ConfigError("missing [system] section")
    sys_sec = parser["system"]

    try:
        dimension = int(sys_sec["dimension"])
        box_iv = np.asarray(_parse_value("system", "box", sys_sec["box"]), dtype=float)
    except KeyError as exc:
        raise ConfigError(f"[system] is missing {exc}") from exc
    if box_iv.shape != (dimension, 2):
        raise ConfigError("box must list one [lo, hi] pair per dimension")
    box = AmbientBox(box_iv)

    branch_names = sorted((s for s in parser.sections() if s.startswith("branch.")),
                          key=lambda s: int(s.split(".", 1)[1]))
    expected = [f"branch.{k}" for k in range(1, len(branch_names) + 1)]
    if branch_names != expected:
        raise ConfigError("branch sections must be numbered branch.1, branch.2, ...")
    if len(branch_names) < 2:
        raise ConfigError("need at least two branch sections")

    branches, domains = [], []
    for name in branch_names:
        sec = parser[name]
        linear = np.asarray(_parse_value(name, "linear", sec["linear"]), dtype=float)
        translation = np.asarray(
            _parse_value(name, "translation", sec["translation"]), dtype=float)
        try:
            branches.append(AffineContraction(linear, translation))
        except Exception as exc:
            raise ConfigError(f"[{name}]: {exc}") from exc
        if "domain" in sec:
            domains.append(np.asarray(_parse_value(name, "domain", sec["domain"]), dtype=float))
        else:
            domains.append(None)

    n = len(branches)
    if "weights" in sys_sec:
        weights = np.asarray(_parse_value("system", "weights", sys_sec["weights"]), dtype=float)
        if weights.shape != (n,):
            raise ConfigError("weights must list one value per branch")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ConfigError(f"weights sum to {weights.sum()!r}, not 1 within 1e-12")
        if np.any(weights <= 0.0):
            raise ConfigError("weights must be positive")
    else:
        weights = None

    phi_name = sys_sec.get("phi", "").strip()
    if not phi_name:
        raise ConfigError("[system] needs a phi entry (catalog name or 'piecewise')")
    if phi_name == "piecewise":
        if any(dom is None for dom in domains):
            raise ConfigError("piecewise phi needs a domain box in every branch section")
        phi = piecewise_phi(branches, domains, box)
    else:
        from .catalog import PHI_EVALUATORS

        try:
            phi = PHI_EVALUATORS[phi_name]
        except KeyError:
            raise ConfigError(f"unknown phi evaluator {phi_name!r}") from None

    name = sys_sec.get("name", phi_name)
    try:
        return IfsSystem(box, branches, weights=weights, phi=phi, name=name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_ifs(path) -> IfsSystem:
    with open(path, "r") as handle:
        return parse_ifs(handle.read())


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _fmt_nested(arr) -> str:
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        return "[" + ", ".join(_fmt(v) for v in arr) + "]"
    return "[" + ", ".join(_fmt_nested(row) for row in arr) + "]"


def export_ifs(system: IfsSystem, phi_name: str, domains=None) -> str:
    """Definition-file text that parses back to an identical system."""
    out = io.StringIO()
    out.write("[system]\n")
    out.write(f"name = {system.name or phi_name}\n")
    out.write(f"dimension = {system.dimension}\n")
    out.write(f"box = {_fmt_nested(system.box.intervals)}\n")
    out.write(f"weights = {_fmt_nested(system.weights)}\n")
    out.write(f"phi = {phi_name}\n")
    for k, gamma in enumerate(system.branches, start=1):
        out.write(f"\n[branch.{k}]\n")
        out.write(f"linear = {_fmt_nested(gamma.linear)}\n")
        out.write(f"translation = {_fmt_nested(gamma.translation)}\n")
        if domains is not None:
            out.write(f"domain = {_fmt_nested(domains[k - 1])}\n")
    return out.getvalue()
