"""Synthetic data, the train/test heatmap harness, model inversion and report files."""

from __future__ import annotations

import csv
import json
import math
import re
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import fitting
from .core import (
    DEG, KPA, MM, NMM, ConvergenceError, Dataset, FreeDesign, FreeModelError, GeneralizedForce,
    KinematicState, LoadRecord, RecordArrays, partition,
)

# sample id -> (gamma deg, L mm, Ri mm, Ro mm)
TABLE1 = {
    "1": (15.0, 90.48, 4.77, 6.13),
    "2": (25.0, 120.52, 4.77, 6.62),
    "3": (36.0, 98.42, 4.77, 6.74),
    "4": (40.0, 90.48, 4.77, 6.13),
    "5": (50.0, 120.40, 4.77, 6.41),
    "6": (62.0, 99.00, 4.77, 6.36),
    "7": (73.0, 128.9, 4.77, 6.40),
    "8": (76.0, 103.22, 4.77, 6.18),
}
DESIGN_COLUMNS = ("sample_id", "gamma_deg", "L_mm", "Ri_mm", "Ro_mm")

TRAIN_TEST = (0.8, 0.2)
TRAIN_TEST_VAL = (0.64, 0.2, 0.16)
EVENS, ALL = "Evens", "All"

INVERT_TOL = 1e-6  # N and N*mm
INVERT_MAXITER = 100


def table1_designs() -> list[tuple[str, FreeDesign]]:
    return [(sid, FreeDesign.from_table(*row)) for sid, row in TABLE1.items()]


def read_designs(path) -> list[tuple[str, FreeDesign]]:
    """Design table CSV with columns sample_id,gamma_deg,L_mm,Ri_mm,Ro_mm."""
    path = Path(path)
    out = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != DESIGN_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(DESIGN_COLUMNS)}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            try:
                out.append((row[0].strip(), FreeDesign.from_table(*(float(c) for c in row[1:5]))))
            except (ValueError, TypeError, IndexError) as exc:
                raise ValueError(f"{path}:{reader.line_num}: {exc}") from exc
    if not out:
        raise ValueError(f"{path}: no designs")
    return out


def write_designs(designs: Sequence[tuple[str, FreeDesign]], path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DESIGN_COLUMNS)
        for sid, d in designs:
            w.writerow([sid, *(repr(v) for v in d.to_table())])


def parse_design(text: str) -> FreeDesign:
    """A Table-1 sample number, or ``gamma_deg,L_mm,Ri_mm,Ro_mm``."""
    text = text.strip()
    if text in TABLE1:
        return FreeDesign.from_table(*TABLE1[text])
    parts = text.split(",")
    if len(parts) != 4:
        raise ValueError(f"design must be a sample number 1-8 or gamma,L,Ri,Ro; got {text!r}")
    return FreeDesign.from_table(*(float(p) for p in parts))


@dataclass(frozen=True)
class ExperimentGrid:
    dl_values: tuple[float, ...]  # mm
    dphi_values: tuple[float, ...]  # deg
    pressure_values: tuple[float, ...]  # kPa

    def __post_init__(self):
        for name in ("dl_values", "dphi_values", "pressure_values"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ValueError(f"{name} must not be empty")
            object.__setattr__(self, name, vals)
        if min(self.pressure_values) < 0:
            raise ValueError("pressures must be non-negative")

    @classmethod
    def default(cls) -> "ExperimentGrid":
        dphi = [*range(-120, 0, 10), -1, 1, *range(10, 121, 10)]
        ascent = np.linspace(0.0, 72.5, 8)
        return cls(tuple(range(-5, 6)), tuple(dphi), (*ascent, 36.25, 0.0))

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentGrid":
        return cls(tuple(obj["dl_mm"]), tuple(obj["dphi_deg"]), tuple(obj["P_kPa"]))

    def to_json(self) -> dict:
        return {"dl_mm": list(self.dl_values), "dphi_deg": list(self.dphi_values),
                "P_kPa": list(self.pressure_values)}

    @property
    def n_states(self) -> int:
        return len(self.dl_values) * len(self.dphi_values)

    def __len__(self) -> int:
        return self.n_states * len(self.pressure_values)

    def arrays(self, design: FreeDesign) -> RecordArrays:
        """All grid points for one design; pressure varies fastest."""
        pts = np.array(list(product(self.dl_values, self.dphi_values, self.pressure_values)))
        n = len(pts)
        g, L, Ri, Ro = design.as_array()
        z = np.zeros(n)
        return RecordArrays(
            z + g, z + L, z + Ri, z + Ro,
            L + pts[:, 0] * MM, pts[:, 1] * DEG, pts[:, 2] * KPA, z.copy(), z.copy(),
        )


def name_seed(seed: int, name: str) -> int:
    """Seed for a named set that does not depend on where the set sits in a list."""
    ss = np.random.SeedSequence([seed & (2**64 - 1), zlib.crc32(name.encode("utf-8"))])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _labelled(designs) -> list[tuple[str, FreeDesign]]:
    out = []
    for i, d in enumerate(designs, 1):
        out.append((str(i), d) if isinstance(d, FreeDesign) else (str(d[0]), d[1]))
    return out


def generate_synthetic(designs, grid: ExperimentGrid, truth, noise_sigma: float = 0.0,
                       seed: int = 0, name: str = "synthetic") -> Dataset:
    """One record per (design, grid point) with forces from the ``truth`` model.

    ``designs`` holds FreeDesign objects (labelled 1, 2, ...) or (sample_id,
    design) pairs. Points the truth model cannot evaluate are flagged buckled.
    Gaussian noise scales with the per-design force and moment maxima.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    predictor = fitting.predictor_for(truth)
    records: list[LoadRecord] = []
    for sid, design in _labelled(designs):
        a = grid.arrays(design)
        F, M, ok = predictor(a)
        F = np.where(ok, F, 0.0)
        M = np.where(ok, M, 0.0)
        if noise_sigma > 0 and ok.any():
            rng = np.random.default_rng(name_seed(seed, sid))
            F_max, M_max = np.max(np.abs(F[ok])), np.max(np.abs(M[ok]))
            noise = rng.standard_normal((2, len(a)))
            F = np.where(ok, F + noise_sigma * F_max * noise[0], 0.0)
            M = np.where(ok, M + noise_sigma * M_max * noise[1], 0.0)
        for i in range(len(a)):
            records.append(LoadRecord(
                sid, design, KinematicState(float(a.l[i]), float(a.phi[i])), float(a.P[i]),
                GeneralizedForce(float(F[i]), float(M[i])), not bool(ok[i]),
            ))
    return Dataset(tuple(records), name)


def _natural_key(name: str):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", name)]


def split_by_sample(dataset: Dataset) -> list[tuple[str, Dataset]]:
    groups: dict[str, list[LoadRecord]] = {}
    for r in dataset.records:
        groups.setdefault(r.sample_id, []).append(r)
    return [(sid, Dataset(tuple(groups[sid]), sid)) for sid in sorted(groups, key=_natural_key)]


@dataclass
class HeatmapResult:
    train_set_names: list[str]
    test_set_names: list[str]
    errors: np.ndarray  # NaN marks a failed cell
    model_tag: str
    failures: dict = field(default_factory=dict)

    def __post_init__(self):
        self.errors = np.asarray(self.errors, dtype=float)
        if self.errors.shape != (len(self.train_set_names), len(self.test_set_names)):
            raise ValueError("error matrix shape does not match the set names")

    @property
    def mean(self) -> float:
        return float(np.nanmean(self.errors))

    def diagonal_mean(self) -> float:
        k = min(self.errors.shape)
        return float(np.nanmean(np.diag(self.errors[:k, :k])))

    def off_diagonal_mean(self) -> float:
        mask = ~np.eye(*self.errors.shape, dtype=bool)
        return float(np.nanmean(self.errors[mask]))

    def cell(self, train: str, test: str) -> float:
        return float(self.errors[self.train_set_names.index(train), self.test_set_names.index(test)])


Fitter = Callable[[Dataset, "Dataset | None", int], object]


def default_fitter(model_tag: str) -> Fitter:
    if model_tag not in fitting.MODEL_TAGS:
        raise ValueError(f"unknown model tag {model_tag!r}; expected one of {fitting.MODEL_TAGS}")

    def fit(train: Dataset, validation: Dataset | None, seed: int):
        return fitting.fit_model(model_tag, train, seed, validation=validation).params

    return fit


def _fit_cell(args):
    tag, train, val, seed = args
    try:
        return default_fitter(tag)(train, val, seed), None
    except (FreeModelError, ValueError, np.linalg.LinAlgError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def run_heatmap(datasets: Sequence[tuple[str, Dataset]], model_tag: str, seed: int = 0,
                fitter: Fitter | None = None, workers: int = 1) -> HeatmapResult:
    """Fit on every training set and evaluate on every test set.

    Each named dataset is split 80/20 (the network additionally holds out a
    validation part). With two or more datasets, "Evens" (every second sample
    in natural name order) and "All" aggregates are appended. Failed cells are
    NaN and their reasons are kept in ``failures``.
    """
    if not datasets:
        raise ValueError("need at least one dataset")
    names = [n for n, _ in datasets]
    if len(set(names)) != len(names):
        raise ValueError("dataset names must be unique")
    neural_split = model_tag == "neural"
    splits: dict[str, tuple[Dataset, Dataset, Dataset | None]] = {}
    for name, ds in datasets:
        s = name_seed(seed, name)
        if neural_split:
            tr, te, va = partition(ds, TRAIN_TEST_VAL, s)
        else:
            (tr, te), va = partition(ds, TRAIN_TEST, s), None
        splits[name] = (tr, te, va)

    set_names = list(names)
    if len(datasets) >= 2:
        ordered = sorted(names, key=_natural_key)
        for agg, members in ((EVENS, ordered[1::2]), (ALL, ordered)):
            parts = [splits[m] for m in members]
            splits[agg] = (
                Dataset.concat([p[0] for p in parts], f"{agg}/train"),
                Dataset.concat([p[1] for p in parts], f"{agg}/test"),
                Dataset.concat([p[2] for p in parts], f"{agg}/val") if neural_split else None,
            )
            set_names.append(agg)

    jobs = [(model_tag, splits[n][0], splits[n][2], name_seed(seed, "fit:" + n)) for n in set_names]
    failures: dict = {}
    if fitter is not None:
        fitted = []
        for _, tr, va, s in jobs:
            try:
                fitted.append((fitter(tr, va, s), None))
            except (FreeModelError, ValueError, np.linalg.LinAlgError) as exc:
                fitted.append((None, f"{type(exc).__name__}: {exc}"))
    elif workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            fitted = list(pool.map(_fit_cell, jobs))
    else:
        fitted = [_fit_cell(j) for j in jobs]

    errors = np.full((len(set_names), len(set_names)), np.nan)
    for i, (params, reason) in enumerate(fitted):
        if params is None:
            failures[set_names[i]] = reason
            continue
        for j, test_name in enumerate(set_names):
            try:
                errors[i, j] = fitting.evaluate(params, splits[test_name][1])
            except (FreeModelError, ValueError) as exc:
                failures[(set_names[i], test_name)] = f"{type(exc).__name__}: {exc}"
    return HeatmapResult(set_names, list(set_names), errors, model_tag, failures)


def _point_model(params, design: FreeDesign, P: float):
    predictor = fitting.predictor_for(params)
    g, L, Ri, Ro = (np.array([v]) for v in design.as_array())
    Pa, zero = np.array([P]), np.zeros(1)

    def tau(q: np.ndarray) -> np.ndarray:
        if not q[0] > 0:
            raise FreeModelError("non-positive length")
        a = RecordArrays(g, L, Ri, Ro, np.array([q[0]]), np.array([q[1]]), Pa, zero, zero)
        F, M, ok = predictor(a)
        if not ok[0]:
            raise FreeModelError("model not defined at this state")
        return np.array([F[0], M[0] / NMM])

    return tau


def invert(target_tau: GeneralizedForce, P: float, design: FreeDesign, params,
           initial_q: KinematicState | None = None, tol: float = INVERT_TOL,
           max_iter: int = INVERT_MAXITER) -> KinematicState:
    """Kinematic state at which the model produces ``target_tau`` under pressure ``P``.

    Damped Newton on the (N, N*mm) residual with a central-difference
    Jacobian; steps are halved until the residual norm decreases. When Newton
    from ``initial_q`` fails, it is restarted from the best points of a coarse
    scan over the default test range.
    """
    tau = _point_model(params, design, P)
    target = np.array([target_tau.axial_force_F, target_tau.axial_moment_M / NMM])
    q0 = initial_q or design.reference_state()
    q = np.array([q0.length_l, q0.twist_phi])
    h = np.array([1e-7 * design.length_L, 1e-7])
    q_hit, best_q, best = _newton(tau, target, q, h, tol, max_iter)
    if q_hit is None:
        for start in _scan_starts(tau, target, design):
            q_hit, bq, b = _newton(tau, target, start, h, tol, max_iter)
            if q_hit is not None:
                break
            if b < best:
                best_q, best = bq, b
    if q_hit is None:
        err = ConvergenceError(f"inversion did not converge; best residual {best:.3g} (N, N*mm)")
        err.best_q = KinematicState(float(best_q[0]), float(best_q[1]))  # type: ignore[attr-defined]
        err.best_residual = best  # type: ignore[attr-defined]
        raise err
    return KinematicState(float(q_hit[0]), float(q_hit[1]))


def _scan_starts(tau, target, design: FreeDesign, keep: int = 4) -> list[np.ndarray]:
    """Best few points of a coarse (length, twist) scan, ranked by residual."""
    scored = []
    for dl, dphi in product(np.arange(-5.0, 5.5, 1.0), np.arange(-120.0, 125.0, 10.0)):
        x = np.array([design.length_L + dl * MM, dphi * DEG])
        try:
            r = tau(x) - target
        except FreeModelError:
            continue
        if np.all(np.isfinite(r)):
            scored.append((float(np.linalg.norm(r)), dl, dphi, x))
    scored.sort(key=lambda t: t[:3])
    return [t[3] for t in scored[:keep]]


def _newton(tau, target, q, h, tol, max_iter):
    """Returns (solution or None, best point, best max-abs residual)."""

    def resid(x):
        try:
            r = tau(x) - target
        except FreeModelError:
            return None
        return r if np.all(np.isfinite(r)) else None

    r = resid(q)
    if r is None:
        return None, q, math.inf
    best_q, best = q.copy(), float(np.max(np.abs(r)))
    for _ in range(max_iter):
        norm = float(np.max(np.abs(r)))
        if norm < best:
            best_q, best = q.copy(), norm
        step = _newton_step(resid, q, r, h)
        if norm <= tol:
            # one more full step refines q well below the force tolerance
            if step is not None:
                r2 = resid(q + step)
                if r2 is not None and np.max(np.abs(r2)) <= norm:
                    q = q + step
            return q, q, norm
        if step is None:
            break
        alpha = 1.0
        while alpha > 1e-10:
            r_new = resid(q + alpha * step)
            if r_new is not None and np.linalg.norm(r_new) < np.linalg.norm(r):
                break
            alpha *= 0.5
        else:
            break
        q, r = q + alpha * step, r_new
    return None, best_q, best


def _newton_step(resid, q, r, h):
    J = np.empty((2, 2))
    for k in range(2):
        e = np.zeros(2)
        e[k] = h[k]
        rp, rm = resid(q + e), resid(q - e)
        if rp is None or rm is None:
            return None
        J[:, k] = (rp - rm) / (2.0 * h[k])
    try:
        return -np.linalg.solve(J, r)
    except np.linalg.LinAlgError:
        return None


def _cell_text(e: float) -> str:
    return "failed" if not math.isfinite(e) else f"{100.0 * e:.2f}"


def heatmap_csv(result: HeatmapResult) -> str:
    rows = [["train\\test", *result.test_set_names]]
    for name, row in zip(result.train_set_names, result.errors):
        rows.append([name, *(_cell_text(e) for e in row)])
    return "".join(",".join(r) + "\n" for r in rows)


def gray_ramp(t: float) -> str:
    """sRGB gray at fraction ``t`` of a ramp linear in CIE lightness, light to dark."""
    L = 95.0 - 75.0 * min(max(t, 0.0), 1.0)
    y = ((L + 16.0) / 116.0) ** 3 if L > 8.0 else L / 903.3
    c = 12.92 * y if y <= 0.0031308 else 1.055 * y ** (1 / 2.4) - 0.055
    v = int(round(255 * c))
    return f"#{v:02x}{v:02x}{v:02x}"


def heatmap_svg(result: HeatmapResult, cell: int = 56) -> str:
    E = result.errors
    finite = E[np.isfinite(E)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 0.0)
    i_min = i_max = None
    if finite.size:
        masked = np.where(np.isfinite(E), E, np.inf)
        i_min = np.unravel_index(np.argmin(masked), E.shape)
        i_max = np.unravel_index(np.argmax(np.where(np.isfinite(E), E, -np.inf)), E.shape)
    left, top = 80, 90
    n_r, n_c = E.shape
    width, height = left + n_c * cell + 20, top + n_r * cell + 20
    mean = f"{100 * result.mean:.2f}%" if finite.size else "n/a"
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<title>{result.model_tag} heatmap</title>',
        f'<text x="{left}" y="24" font-size="14">{result.model_tag}: mean normalized error {mean}</text>',
        f'<text x="{left}" y="44">rows: training set, columns: test set, values in %</text>',
    ]
    for j, name in enumerate(result.test_set_names):
        out.append(f'<text x="{left + j * cell + cell // 2}" y="{top - 8}" text-anchor="middle">{name}</text>')
    for i, name in enumerate(result.train_set_names):
        y = top + i * cell
        out.append(f'<text x="{left - 8}" y="{y + cell // 2 + 4}" text-anchor="end">{name}</text>')
        for j in range(n_c):
            x = left + j * cell
            e = E[i, j]
            if not math.isfinite(e):
                out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="#ffffff" stroke="#000000"/>')
                out.append(f'<text x="{x + cell // 2}" y="{y + cell // 2 + 4}" text-anchor="middle">failed</text>')
                continue
            t = (e - lo) / (hi - lo) if hi > lo else 0.0
            fill = gray_ramp(t)
            ink = "#000000" if t < 0.5 else "#ffffff"
            out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="#808080"/>')
            out.append(f'<text x="{x + cell // 2}" y="{y + cell // 2 + 4}" text-anchor="middle" '
                       f'fill="{ink}">{100 * e:.2f}</text>')
            tag = "max" if (i, j) == i_max else "min" if (i, j) == i_min else None
            if tag:
                out.append(f'<text x="{x + 3}" y="{y + 12}" font-size="9" fill="{ink}">{tag}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_heatmap(result: HeatmapResult, path_csv, path_svg=None) -> None:
    Path(path_csv).write_text(heatmap_csv(result), encoding="utf-8")
    if path_svg is not None:
        Path(path_svg).write_text(heatmap_svg(result), encoding="utf-8")


def load_grid(source: str) -> ExperimentGrid:
    if source == "default":
        return ExperimentGrid.default()
    return ExperimentGrid.from_json(json.loads(Path(source).read_text(encoding="utf-8")))


def datasets_from_files(paths: Iterable) -> list[tuple[str, Dataset]]:
    from .core import read_dataset

    parts = [read_dataset(p) for p in sorted(paths)]
    if not parts:
        raise ValueError("no dataset files")
    return split_by_sample(Dataset.concat(parts, "data"))
