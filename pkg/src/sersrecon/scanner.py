"""Phantom geometry and a simulated two-axis raster acquisition.

The stage visits cell centers on a regular grid, dwells, and records one
spectrum per cell. The laser spot is a disk: where it straddles a region edge
the recorded spectrum is the area-weighted mix of the materials underneath.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .spectral_core import Spectrum, read_spectrum_csv, write_spectrum_csv
from .synthgen import MaterialSpec, _streams, add_noise, clean_intensities


@dataclass(frozen=True)
class Disk:
    center_mm: tuple[float, float]
    radius_mm: float
    material: str

    def __post_init__(self):
        object.__setattr__(self, "center_mm", tuple(float(c) for c in self.center_mm))
        if not self.radius_mm > 0:
            raise ValueError("disk radius must be > 0")

    @property
    def area_mm2(self) -> float:
        return math.pi * self.radius_mm**2

    def contains(self, x, y):
        cx, cy = self.center_mm
        return (np.asarray(x) - cx) ** 2 + (np.asarray(y) - cy) ** 2 <= self.radius_mm**2


@dataclass(frozen=True)
class PhantomLayout:
    """Disks painted in order over a background; later disks occlude earlier ones."""

    regions: tuple[Disk, ...] = ()
    background_material: str = "control_agarose"
    positive_labels: frozenset = frozenset({"cy75_agarose"})

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "positive_labels", frozenset(self.positive_labels))

    def labels(self) -> set[str]:
        return {self.background_material, *(r.material for r in self.regions)}

    def check_materials(self, materials: Mapping[str, MaterialSpec]) -> None:
        missing = sorted(self.labels() - set(materials))
        if missing:
            raise KeyError(f"unknown material label(s): {', '.join(missing)}")

    def positive_area_mm2(self) -> float:
        """Analytic positive area; exact when positive disks don't overlap."""
        return sum(r.area_mm2 for r in self.regions if r.material in self.positive_labels)


def default_layout() -> PhantomLayout:
    # 20 mm target plus two 5 mm fiducials 10 mm edge-to-edge along x
    return PhantomLayout(
        regions=(
            Disk((0.0, 0.0), 10.0, "cy75_agarose"),
            Disk((22.5, 0.0), 2.5, "cy75_agarose"),
            Disk((-22.5, 0.0), 2.5, "green_dye_agarose"),
        ),
        background_material="control_agarose",
        positive_labels=frozenset({"cy75_agarose"}),
    )


@dataclass(frozen=True)
class ScanPlan:
    origin_mm: tuple[float, float] = (-29.5, -14.5)
    n_cols: int = 60
    n_rows: int = 30
    step_mm: float = 1.0
    dwell_s: float = 0.350
    move_s_per_step: float = 0.0
    pattern: str = "unidirectional"

    def __post_init__(self):
        object.__setattr__(self, "origin_mm", tuple(float(c) for c in self.origin_mm))
        if self.n_cols < 1 or self.n_rows < 1:
            raise ValueError("n_cols and n_rows must be >= 1")
        if not self.step_mm > 0:
            raise ValueError("step_mm must be > 0")
        if self.dwell_s < 0 or self.move_s_per_step < 0:
            raise ValueError("dwell_s and move_s_per_step must be >= 0")
        if self.pattern not in ("unidirectional", "serpentine"):
            raise ValueError(f"unknown raster pattern {self.pattern!r}")

    @property
    def n_points(self) -> int:
        return self.n_cols * self.n_rows

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (self.origin_mm[0] + col * self.step_mm, self.origin_mm[1] + row * self.step_mm)

    def total_time_s(self, n: int | None = None) -> float:
        n = self.n_points if n is None else n
        return n * self.dwell_s + (n - 1) * self.move_s_per_step


@dataclass(frozen=True)
class SpotModel:
    radius_mm: float = 0.5

    def __post_init__(self):
        if not self.radius_mm > 0:
            raise ValueError("spot radius must be > 0")


class ScanPosition(NamedTuple):
    index: int
    row: int
    col: int
    x_mm: float
    y_mm: float


def plan_raster(p: ScanPlan) -> list[ScanPosition]:
    out = []
    for row in range(p.n_rows):
        cols = range(p.n_cols)
        if p.pattern == "serpentine" and row % 2 == 1:
            cols = reversed(cols)
        for col in cols:
            x, y = p.cell_center(row, col)
            out.append(ScanPosition(len(out), row, col, x, y))
    return out


# --- geometry -------------------------------------------------------------------

def circle_overlap_area(c1, r1: float, c2, r2: float) -> float:
    """Area of the intersection of two disks (lens formula)."""
    d = math.hypot(c1[0] - c2[0], c1[1] - c2[1])
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        return math.pi * min(r1, r2) ** 2
    a1 = (d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)
    a2 = (d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)
    a1 = min(1.0, max(-1.0, a1))
    a2 = min(1.0, max(-1.0, a2))
    kite = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)
    return r1 * r1 * math.acos(a1) + r2 * r2 * math.acos(a2) - 0.5 * math.sqrt(max(kite, 0.0))


def _disks_overlap(a: Disk, b: Disk) -> bool:
    d = math.hypot(a.center_mm[0] - b.center_mm[0], a.center_mm[1] - b.center_mm[1])
    return d < a.radius_mm + b.radius_mm


def _quadrature_fractions(regions: Sequence[Disk], point, r: float, n_r: int = 200, n_t: int = 400) -> list[float]:
    # equal-area polar midpoint rule over the spot; last containing region wins
    rho = r * np.sqrt((np.arange(n_r) + 0.5) / n_r)
    theta = 2.0 * np.pi * (np.arange(n_t) + 0.5) / n_t
    xs = point[0] + np.outer(rho, np.cos(theta)).ravel()
    ys = point[1] + np.outer(rho, np.sin(theta)).ravel()
    owner = np.full(xs.size, -1)
    for k, reg in enumerate(regions):
        owner[reg.contains(xs, ys)] = k
    return [np.count_nonzero(owner == k) / owner.size for k in range(len(regions))]


def material_fractions_at(layout: PhantomLayout, point_mm, spot: SpotModel = SpotModel()) -> dict[str, float]:
    """Fraction of the spot disk covered by each material.

    Analytic when the regions touching the spot don't overlap one another;
    otherwise a fine polar quadrature resolves the occlusion order.
    """
    r = spot.radius_mm
    spot_area = math.pi * r * r
    hits = [
        (k, circle_overlap_area(point_mm, r, reg.center_mm, reg.radius_mm))
        for k, reg in enumerate(layout.regions)
    ]
    hits = [(k, a) for k, a in hits if a > 0.0]
    touching = [layout.regions[k] for k, _ in hits]
    tangled = any(
        _disks_overlap(a, b) for i, a in enumerate(touching) for b in touching[i + 1:]
    )
    if tangled:
        fracs = _quadrature_fractions(touching, point_mm, r)
    else:
        fracs = [min(a / spot_area, 1.0) for _, a in hits]
    out: dict[str, float] = {}
    for reg, f in zip(touching, fracs):
        if f > 0.0:
            out[reg.material] = out.get(reg.material, 0.0) + f
    rest = 1.0 - sum(out.values())
    if rest > 1e-15:
        out[layout.background_material] = out.get(layout.background_material, 0.0) + rest
    return out


# --- acquisition ------------------------------------------------------------------

def acquire_mixture(
    fractions: Mapping[str, float],
    materials: Mapping[str, MaterialSpec],
    axis,
    seed,
) -> Spectrum:
    """Area-weighted clean spectra of each material, then one noise draw.

    Every material's background uses the same baseline stream, so a pure
    material reproduces :func:`synthgen.synth_spectrum` for the same seed.
    """
    axis = np.asarray(axis, dtype=float)
    mixed = None
    sigma_rel = 0.0
    for label, f in fractions.items():
        if label not in materials:
            raise KeyError(f"unknown material label {label!r}")
        m = materials[label]
        base_rng, _ = _streams(seed)
        term = f * clean_intensities(m, axis, base_rng)
        mixed = term if mixed is None else mixed + term
        sigma_rel += f * m.noise_sigma_rel
    if mixed is None:
        raise ValueError("no material fractions given")
    _, noise_rng = _streams(seed)
    return Spectrum(axis, add_noise(mixed, sigma_rel, noise_rng))


def acquire(
    layout: PhantomLayout,
    point_mm,
    spot: SpotModel,
    axis,
    seed,
    materials: Mapping[str, MaterialSpec],
) -> Spectrum:
    layout.check_materials(materials)
    return acquire_mixture(material_fractions_at(layout, point_mm, spot), materials, axis, seed)


@dataclass
class Acquisition:
    index: int
    row: int
    col: int
    position_mm: tuple[float, float]
    spectrum: Spectrum


@dataclass
class ScanRecord:
    plan: ScanPlan
    acquisitions: list = field(default_factory=list)
    total_time_s: float = 0.0

    def __len__(self):
        return len(self.acquisitions)

    @property
    def dwell_time_s(self) -> float:
        return len(self) * self.plan.dwell_s


def simulate_scan(
    layout: PhantomLayout,
    plan: ScanPlan,
    spot: SpotModel,
    axis,
    seed: int,
    materials: Mapping[str, MaterialSpec],
) -> ScanRecord:
    layout.check_materials(materials)
    rec = ScanRecord(plan)
    for pos in plan_raster(plan):
        s = acquire(layout, (pos.x_mm, pos.y_mm), spot, axis, (seed, pos.index), materials)
        rec.acquisitions.append(Acquisition(pos.index, pos.row, pos.col, (pos.x_mm, pos.y_mm), s))
    rec.total_time_s = plan.total_time_s(len(rec))
    return rec


def plan_to_dict(p: ScanPlan) -> dict:
    d = asdict(p)
    d["origin_mm"] = list(p.origin_mm)
    return d


def save_scan(rec: ScanRecord, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with (directory / "manifest.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "row", "col", "x_mm", "y_mm", "file"])
        for a in rec.acquisitions:
            name = f"r{a.row}_c{a.col}.csv"
            write_spectrum_csv(a.spectrum, directory / name)
            writer.writerow([a.index, a.row, a.col, repr(a.position_mm[0]), repr(a.position_mm[1]), name])
    timing = {
        "dwell_s": rec.plan.dwell_s,
        "move_s_per_step": rec.plan.move_s_per_step,
        "total_time_s": rec.total_time_s,
    }
    (directory / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")
    (directory / "plan.json").write_text(json.dumps(plan_to_dict(rec.plan), indent=2) + "\n")


def load_scan(directory) -> ScanRecord:
    directory = Path(directory)
    plan = ScanPlan(**json.loads((directory / "plan.json").read_text()))
    timing = json.loads((directory / "timing.json").read_text())
    rec = ScanRecord(plan, total_time_s=float(timing["total_time_s"]))
    with (directory / "manifest.csv").open(newline="") as fh:
        for row in csv.DictReader(fh):
            rec.acquisitions.append(Acquisition(
                int(row["index"]), int(row["row"]), int(row["col"]),
                (float(row["x_mm"]), float(row["y_mm"])),
                read_spectrum_csv(directory / row["file"]),
            ))
    return rec
