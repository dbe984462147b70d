"""Label grids, ground-truth rasterization and reconstruction metrics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import neuralnet
from .scanner import PhantomLayout, ScanPlan, ScanRecord
from .spectral_core import PreprocessConfig, preprocess_with

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


class MetricsError(ValueError):
    pass


@dataclass(eq=False)
class LabelGrid:
    """Binary labels indexed ``labels[row, col]``; cell (r, c) is centered at
    ``origin + (c, r) * cell_mm``."""

    labels: np.ndarray
    cell_mm: float = 1.0
    origin_mm: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2 or lab.size == 0:
            raise MetricsError("labels must be a non-empty 2-D array")
        if not np.isin(lab, (0, 1)).all():
            raise MetricsError("labels must be binary")
        if not self.cell_mm > 0:
            raise MetricsError("cell_mm must be > 0")
        self.labels = lab.astype(np.uint8)
        self.origin_mm = tuple(float(c) for c in self.origin_mm)

    @property
    def n_rows(self) -> int:
        return self.labels.shape[0]

    @property
    def n_cols(self) -> int:
        return self.labels.shape[1]

    @property
    def mask(self) -> np.ndarray:
        return self.labels.astype(bool)

    def area_mm2(self) -> float:
        return float(np.count_nonzero(self.labels)) * self.cell_mm**2

    def same_geometry(self, other: "LabelGrid") -> bool:
        return (
            self.labels.shape == other.labels.shape
            and self.cell_mm == other.cell_mm
            and self.origin_mm == other.origin_mm
        )

    def __eq__(self, other):
        if not isinstance(other, LabelGrid):
            return NotImplemented
        return self.same_geometry(other) and np.array_equal(self.labels, other.labels)

    @classmethod
    def for_plan(cls, plan: ScanPlan, labels=None) -> "LabelGrid":
        if labels is None:
            labels = np.zeros((plan.n_rows, plan.n_cols), dtype=np.uint8)
        return cls(labels, plan.step_mm, plan.origin_mm)


@dataclass
class MetricsReport:
    predicted_area_mm2: float
    expected_area_mm2: float
    area_accuracy_pct: float
    iou: float
    boundary_iou: float
    boundary_iou_tol0: float
    center_diameter_mm: float | None
    edge_to_edge_mm: float | None
    scan_time_s: float

    def to_dict(self) -> dict:
        return asdict(self)


def classify_scan(net: neuralnet.Network, rec: ScanRecord, pp: PreprocessConfig = PreprocessConfig()) -> LabelGrid:
    """Preprocess every acquisition, predict, and place the class in its cell."""
    if net.config.n_classes != 2:
        raise MetricsError(f"classify_scan needs a binary network, got {net.config.n_classes} classes")
    feats = np.empty((len(rec), pp.n_features))
    for k, a in enumerate(rec.acquisitions):
        try:
            feats[k] = preprocess_with(a.spectrum, pp).values
        except ValueError as exc:
            raise MetricsError(f"cell (row {a.row}, col {a.col}): {exc}") from exc
    try:
        classes = neuralnet.predict(net, feats)
    except ValueError as exc:
        raise MetricsError(f"network failed on scan features: {exc}") from exc
    grid = LabelGrid.for_plan(rec.plan)
    for a, c in zip(rec.acquisitions, classes):
        grid.labels[a.row, a.col] = c
    return grid


def rasterize_truth(layout: PhantomLayout, plan: ScanPlan) -> LabelGrid:
    """Cell is positive iff its center lies in the topmost region covering it
    and that region's material is positive."""
    rows, cols = np.mgrid[0:plan.n_rows, 0:plan.n_cols]
    xs = plan.origin_mm[0] + cols * plan.step_mm
    ys = plan.origin_mm[1] + rows * plan.step_mm
    labels = np.zeros((plan.n_rows, plan.n_cols), dtype=np.uint8)
    for reg in layout.regions:
        inside = reg.contains(xs, ys)
        labels[inside] = reg.material in layout.positive_labels
    return LabelGrid.for_plan(plan, labels)


def area_accuracy(pred: LabelGrid, expected_area_mm2: float) -> float:
    if not expected_area_mm2 > 0:
        raise MetricsError("expected area must be > 0")
    return area_accuracy_from_area(pred.area_mm2(), expected_area_mm2)


def area_accuracy_from_area(predicted_area_mm2: float, expected_area_mm2: float) -> float:
    if not expected_area_mm2 > 0:
        raise MetricsError("expected area must be > 0")
    err = abs(predicted_area_mm2 - expected_area_mm2) / expected_area_mm2
    return max(0.0, 100.0 * (1.0 - err))


def _check_geometry(a: LabelGrid, b: LabelGrid) -> None:
    if not a.same_geometry(b):
        raise MetricsError("label grids have different geometry")


def _mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def iou(pred: LabelGrid, truth: LabelGrid) -> float:
    _check_geometry(pred, truth)
    return _mask_iou(pred.mask, truth.mask)


def boundary_mask(mask: np.ndarray) -> np.ndarray:
    # off-grid counts as negative, so erode with a zero border
    interior = ndimage.binary_erosion(mask, structure=_FOUR_CONNECTED, border_value=0)
    return mask & ~interior


def extract_boundary(g: LabelGrid) -> LabelGrid:
    return LabelGrid(boundary_mask(g.mask).astype(np.uint8), g.cell_mm, g.origin_mm)


def _dilate(mask: np.ndarray, tol: int) -> np.ndarray:
    if tol == 0 or not mask.any():
        return mask
    return ndimage.binary_dilation(mask, structure=np.ones((2 * tol + 1, 2 * tol + 1), dtype=bool))


def boundary_iou(pred: LabelGrid, truth: LabelGrid, tol_cells: int = 1) -> float:
    """IoU of the two boundary sets, each dilated by ``tol_cells`` (Chebyshev)."""
    _check_geometry(pred, truth)
    if tol_cells < 0:
        raise MetricsError("tol_cells must be >= 0")
    bp = _dilate(boundary_mask(pred.mask), tol_cells)
    bt = _dilate(boundary_mask(truth.mask), tol_cells)
    return _mask_iou(bp, bt)


def feature_metrics(g: LabelGrid) -> dict[str, float]:
    """Largest component's x-extent and its x-gap to the nearest other component."""
    comp, n = ndimage.label(g.mask, structure=_FOUR_CONNECTED)
    if n < 2:
        raise MetricsError("insufficient components")
    sizes = np.bincount(comp.ravel())[1:]
    big = int(np.argmax(sizes)) + 1
    spans = {}
    for k in range(1, n + 1):
        cols = np.flatnonzero((comp == k).any(axis=0))
        spans[k] = (cols.min(), cols.max())
    lo, hi = spans[big]
    gaps = [
        max(0, max(o_lo - hi, lo - o_hi) - 1)
        for k, (o_lo, o_hi) in spans.items()
        if k != big
    ]
    return {
        "center_diameter_mm": float(hi - lo + 1) * g.cell_mm,
        "edge_to_edge_mm": float(min(gaps)) * g.cell_mm,
    }


def compute_metrics(
    pred: LabelGrid,
    truth: LabelGrid,
    expected_area_mm2: float,
    scan_time_s: float,
    tol_cells: int = 1,
) -> MetricsReport:
    try:
        feats = feature_metrics(pred)
    except MetricsError:
        feats = {"center_diameter_mm": None, "edge_to_edge_mm": None}
    return MetricsReport(
        predicted_area_mm2=pred.area_mm2(),
        expected_area_mm2=expected_area_mm2,
        area_accuracy_pct=area_accuracy(pred, expected_area_mm2),
        iou=iou(pred, truth),
        boundary_iou=boundary_iou(pred, truth, tol_cells),
        boundary_iou_tol0=boundary_iou(pred, truth, 0),
        scan_time_s=scan_time_s,
        **feats,
    )


# --- output files -----------------------------------------------------------------

def write_pgm(g: LabelGrid, path) -> None:
    """Plain (P2) PGM, row 0 first, positive cells 255."""
    lines = ["P2", f"{g.n_cols} {g.n_rows}", "255"]
    lines += [" ".join("255" if v else "0" for v in row) for row in g.labels]
    Path(path).write_text("\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    tokens = [
        t for line in Path(path).read_text().splitlines()
        if not line.startswith("#") for t in line.split()
    ]
    if tokens[0] != "P2":
        raise MetricsError(f"{path}: not a plain PGM")
    w, h, _maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    return np.array(tokens[4:4 + w * h], dtype=int).reshape(h, w)


def write_labels_csv(g: LabelGrid, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col", "label"])
        for r in range(g.n_rows):
            for c in range(g.n_cols):
                writer.writerow([r, c, int(g.labels[r, c])])


def read_labels_csv(path, cell_mm: float = 1.0, origin_mm=(0.0, 0.0)) -> LabelGrid:
    with Path(path).open(newline="") as fh:
        rows = [(int(d["row"]), int(d["col"]), int(d["label"])) for d in csv.DictReader(fh)]
    if not rows:
        raise MetricsError(f"{path}: no labels")
    n_rows = max(r for r, _, _ in rows) + 1
    n_cols = max(c for _, c, _ in rows) + 1
    labels = np.zeros((n_rows, n_cols), dtype=np.uint8)
    for r, c, v in rows:
        labels[r, c] = v
    return LabelGrid(labels, cell_mm, origin_mm)


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def metrics_json(m: MetricsReport) -> str:
    return json.dumps({k: _clean(v) for k, v in m.to_dict().items()}, indent=2, sort_keys=True) + "\n"


def write_outputs(g: LabelGrid, truth: LabelGrid, m: MetricsReport, directory) -> dict[str, Path]:
    directory = Path(directory)
    paths = {
        "prediction": directory / "prediction.pgm",
        "truth": directory / "truth.pgm",
        "labels": directory / "labels.csv",
        "metrics": directory / "metrics.json",
    }
    try:
        directory.mkdir(parents=True, exist_ok=True)
        write_pgm(g, paths["prediction"])
        write_pgm(truth, paths["truth"])
        write_labels_csv(g, paths["labels"])
        paths["metrics"].write_text(metrics_json(m))
    except OSError as exc:
        raise OSError(f"writing outputs to {directory}: {exc}") from exc
    return paths
