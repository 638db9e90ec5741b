"""Domain types, unit conversion, the normalized error metric and dataset I/O.

Everything inside the package works in SI units (m, rad, Pa, N, N*m).
Conversion to the table units (mm, deg, kPa, N, N*mm) happens only when
reading or writing files and at the CLI boundary.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

MM = 1e-3
DEG = math.pi / 180.0
KPA = 1e3
NMM = 1e-3

CSV_COLUMNS = (
    "sample_id", "gamma_deg", "L_mm", "Ri_mm", "Ro_mm",
    "dl_mm", "dphi_deg", "P_kPa", "F_N", "M_Nmm", "buckled",
)


class FreeModelError(Exception):
    """Base class for numerical failures of a force model."""


class SingularConfiguration(FreeModelError):
    pass


class FiberOverstretch(FreeModelError):
    pass


class NoEquilibrium(FreeModelError):
    pass


class ConvergenceError(FreeModelError):
    pass


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class FreeDesign:
    """Unloaded actuator geometry: fiber angle, length, inner and outer radius (SI)."""

    gamma: float
    length_L: float
    inner_radius_Ri: float
    outer_radius_Ro: float

    def __post_init__(self):
        if not 0.0 < self.gamma < math.pi / 2:
            raise ValueError(f"fiber angle must lie in (0, 90) deg, got {math.degrees(self.gamma)}")
        if not self.length_L > 0:
            raise ValueError("length must be positive")
        if not 0.0 < self.inner_radius_Ri < self.outer_radius_Ro:
            raise ValueError("radii must satisfy 0 < Ri < Ro")

    @classmethod
    def from_table(cls, gamma_deg: float, L_mm: float, Ri_mm: float, Ro_mm: float) -> "FreeDesign":
        return cls(gamma_deg * DEG, L_mm * MM, Ri_mm * MM, Ro_mm * MM)

    def to_table(self) -> tuple[float, float, float, float]:
        return (self.gamma / DEG, self.length_L / MM, self.inner_radius_Ri / MM, self.outer_radius_Ro / MM)

    def as_array(self) -> np.ndarray:
        return np.array([self.gamma, self.length_L, self.inner_radius_Ri, self.outer_radius_Ro])

    def reference_state(self) -> "KinematicState":
        return KinematicState(self.length_L, 0.0)


@dataclass(frozen=True)
class KinematicState:
    length_l: float
    twist_phi: float

    def __post_init__(self):
        if not self.length_l > 0:
            raise ValueError("actuator length must be positive")

    def stretch(self, design: FreeDesign) -> float:
        return self.length_l / design.length_L

    def delta(self, design: FreeDesign) -> np.ndarray:
        return np.array([self.length_l - design.length_L, self.twist_phi])


@dataclass(frozen=True)
class GeneralizedForce:
    axial_force_F: float
    axial_moment_M: float

    def __post_init__(self):
        if not (math.isfinite(self.axial_force_F) and math.isfinite(self.axial_moment_M)):
            raise ValueError("generalized force components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.axial_force_F, self.axial_moment_M])


@dataclass(frozen=True)
class LoadRecord:
    sample_id: str
    design: FreeDesign
    state: KinematicState
    pressure_P: float
    tau: GeneralizedForce
    buckled: bool = False

    def __post_init__(self):
        if not self.pressure_P >= 0:
            raise ValueError("gauge pressure must be non-negative")


class RecordArrays(NamedTuple):
    """Column view of a dataset in SI units, one entry per record."""

    gamma: np.ndarray
    L: np.ndarray
    Ri: np.ndarray
    Ro: np.ndarray
    l: np.ndarray
    phi: np.ndarray
    P: np.ndarray
    F: np.ndarray
    M: np.ndarray

    def __len__(self) -> int:  # type: ignore[override]
        return len(self.l)

    def take(self, idx) -> "RecordArrays":
        return RecordArrays(*(a[idx] for a in self))


@dataclass(frozen=True)
class Dataset:
    records: tuple[LoadRecord, ...]
    name: str = "dataset"

    def __post_init__(self):
        if not isinstance(self.records, tuple):
            object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def unbuckled(self) -> "Dataset":
        if not any(r.buckled for r in self.records):
            return self
        return Dataset(tuple(r for r in self.records if not r.buckled), self.name)

    @cached_property
    def arrays(self) -> RecordArrays:
        recs = self.records
        cols = np.array(
            [
                (r.design.gamma, r.design.length_L, r.design.inner_radius_Ri, r.design.outer_radius_Ro,
                 r.state.length_l, r.state.twist_phi, r.pressure_P,
                 r.tau.axial_force_F, r.tau.axial_moment_M)
                for r in recs
            ],
            dtype=float,
        ).reshape(len(recs), 9)
        return RecordArrays(*(np.ascontiguousarray(cols[:, j]) for j in range(9)))

    def maxima(self) -> tuple[float, float]:
        """Normalizers max|F| and max|M| over the admissible records."""
        a = self.unbuckled().arrays
        if len(a) == 0:
            raise ValueError("no admissible records")
        return float(np.max(np.abs(a.F))), float(np.max(np.abs(a.M)))

    def designs(self) -> list[FreeDesign]:
        seen: dict[FreeDesign, None] = {}
        for r in self.records:
            seen.setdefault(r.design, None)
        return list(seen)

    @classmethod
    def concat(cls, parts: Sequence["Dataset"], name: str) -> "Dataset":
        return cls(tuple(r for p in parts for r in p.records), name)


def normalized_residuals(F_pred, M_pred, F_meas, M_meas, F_max: float, M_max: float):
    if not (F_max > 0 and M_max > 0):
        raise ValueError("degenerate normalization")
    return (np.asarray(F_meas) - F_pred) / F_max, (np.asarray(M_meas) - M_pred) / M_max


def error_from_arrays(F_pred, M_pred, F_meas, M_meas, F_max: float | None = None,
                      M_max: float | None = None) -> float:
    """RMS of the max-normalized force and moment residuals.

    Normalizers default to max|F| and max|M| of the measured arrays.
    """
    F_meas = np.asarray(F_meas, dtype=float)
    M_meas = np.asarray(M_meas, dtype=float)
    n = F_meas.size
    if n == 0:
        raise ValueError("no admissible records")
    if F_max is None:
        F_max = float(np.max(np.abs(F_meas)))
    if M_max is None:
        M_max = float(np.max(np.abs(M_meas)))
    rF, rM = normalized_residuals(F_pred, M_pred, F_meas, M_meas, F_max, M_max)
    return math.sqrt(float(np.sum(rF * rF) + np.sum(rM * rM)) / n)


def error_metric(model_predictions: Sequence[GeneralizedForce], measurements: Dataset) -> float:
    view = measurements.unbuckled()
    if len(view) == 0:
        raise ValueError("no admissible records")
    if len(model_predictions) != len(view):
        raise ValueError(
            f"got {len(model_predictions)} predictions for {len(view)} admissible records"
        )
    F_pred = np.array([p.axial_force_F for p in model_predictions])
    M_pred = np.array([p.axial_moment_M for p in model_predictions])
    a = view.arrays
    return error_from_arrays(F_pred, M_pred, a.F, a.M)


def partition(dataset: Dataset, fractions: Sequence[float], seed: int) -> tuple[Dataset, ...]:
    """Randomly split the admissible records into (train, test[, validation]).

    ``fractions`` is given in the same order as the returned splits. Test and
    validation sizes are ``round(f * n)``; train takes the remainder. The test
    split is drawn first, so for a fixed seed a two-way and a three-way split
    share the same test set.
    """
    if len(fractions) not in (2, 3):
        raise ValueError("expected 2 or 3 fractions")
    if abs(sum(fractions) - 1.0) > 1e-9 or any(f < 0 for f in fractions):
        raise ValueError(f"fractions must be non-negative and sum to 1, got {tuple(fractions)}")
    view = dataset.unbuckled()
    n = len(view)
    if n < 5:
        raise ValueError(f"need at least 5 admissible records to partition, got {n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_test = int(round(fractions[1] * n))
    n_val = int(round(fractions[2] * n)) if len(fractions) == 3 else 0
    if n_test + n_val > n:
        n_val = n - n_test
    recs = view.records
    test = Dataset(tuple(recs[i] for i in order[:n_test]), f"{dataset.name}/test")
    val = Dataset(tuple(recs[i] for i in order[n_test:n_test + n_val]), f"{dataset.name}/val")
    train = Dataset(tuple(recs[i] for i in order[n_test + n_val:]), f"{dataset.name}/train")
    if len(fractions) == 3:
        return train, test, val
    return train, test


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in dataset.records:
            d = r.design
            w.writerow([
                r.sample_id,
                _fmt(d.gamma / DEG), _fmt(d.length_L / MM), _fmt(d.inner_radius_Ri / MM),
                _fmt(d.outer_radius_Ro / MM),
                _fmt((r.state.length_l - d.length_L) / MM), _fmt(r.state.twist_phi / DEG),
                _fmt(r.pressure_P / KPA),
                _fmt(r.tau.axial_force_F), _fmt(r.tau.axial_moment_M / NMM),
                "1" if r.buckled else "0",
            ])


def read_dataset(path, name: str | None = None) -> Dataset:
    path = Path(path)
    records = []
    designs: dict[tuple, FreeDesign] = {}
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file, header required") from None
        if tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise DatasetFormatError(
                f"{path}: header/unit mismatch; expected {','.join(CSV_COLUMNS)}, got {','.join(header)}"
            )
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_COLUMNS):
                raise DatasetFormatError(f"{path}:{line}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
            try:
                sid = row[0].strip()
                g, L, Ri, Ro, dl, dphi, P, F, M = (float(c) for c in row[1:10])
                flag = row[10].strip()
                if flag not in ("0", "1"):
                    raise ValueError(f"buckled must be 0 or 1, got {flag!r}")
                key = (g, L, Ri, Ro)
                design = designs.get(key)
                if design is None:
                    design = designs[key] = FreeDesign.from_table(g, L, Ri, Ro)
                records.append(LoadRecord(
                    sid, design,
                    KinematicState(design.length_L + dl * MM, dphi * DEG),
                    P * KPA,
                    GeneralizedForce(F, M * NMM),
                    flag == "1",
                ))
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{line}: {exc}") from exc
    return Dataset(tuple(records), name if name is not None else path.stem)
