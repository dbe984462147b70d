"""Spectral preprocessing: crop, modified-polyfit baseline removal, min-max
normalization and linear resampling to a fixed feature length."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

N_FEATURES = 3397


class SpectrumError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Wavelength axis (nm) paired with intensities.

    ``flat`` is set by :func:`minmax_normalize` when the input had no dynamic
    range; it rides along so callers further down the chain can see it.
    """

    wavelengths_nm: np.ndarray
    intensities: np.ndarray
    flat: bool = False

    def __post_init__(self):
        w = np.asarray(self.wavelengths_nm, dtype=float)
        y = np.asarray(self.intensities, dtype=float)
        if w.ndim != 1 or y.ndim != 1:
            raise SpectrumError("wavelengths and intensities must be 1-D")
        if w.shape != y.shape:
            raise SpectrumError(
                f"length mismatch: {w.size} wavelengths vs {y.size} intensities"
            )
        if w.size < 2:
            raise SpectrumError("spectrum needs at least 2 samples")
        if not np.all(np.diff(w) > 0):
            raise SpectrumError("wavelengths must be strictly increasing")
        object.__setattr__(self, "wavelengths_nm", w)
        object.__setattr__(self, "intensities", y)

    def __len__(self):
        return self.wavelengths_nm.size

    def __eq__(self, other):
        if not isinstance(other, Spectrum):
            return NotImplemented
        return (
            np.array_equal(self.wavelengths_nm, other.wavelengths_nm)
            and np.array_equal(self.intensities, other.intensities)
            and self.flat == other.flat
        )

    def with_intensities(self, intensities, flat: bool = False) -> "Spectrum":
        return Spectrum(self.wavelengths_nm, intensities, flat=flat)


@dataclass(frozen=True)
class SpectralWindow:
    lo_nm: float = 810.0
    hi_nm: float = 920.0

    def __post_init__(self):
        if not self.lo_nm < self.hi_nm:
            raise SpectrumError(f"invalid window [{self.lo_nm}, {self.hi_nm}]")


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Fixed-length network input. Values from :func:`preprocess` lie in
    [0, 1]; :func:`resample_linear` alone keeps whatever range it is given."""

    values: np.ndarray
    flat: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise SpectrumError("feature vector must be 1-D")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def in_unit_range(self) -> bool:
        return bool(self.values.min() >= 0.0 and self.values.max() <= 1.0)


@dataclass(frozen=True)
class BaselineConfig:
    order: int = 3
    max_iterations: int = 100
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.order < 1:
            raise SpectrumError("baseline order must be >= 1")
        if self.max_iterations < 1:
            raise SpectrumError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise SpectrumError("tolerance must be > 0")


def crop_window(s: Spectrum, w: SpectralWindow) -> Spectrum:
    keep = (s.wavelengths_nm >= w.lo_nm) & (s.wavelengths_nm <= w.hi_nm)
    if np.count_nonzero(keep) < 2:
        raise SpectrumError("window too narrow for axis")
    return Spectrum(s.wavelengths_nm[keep], s.intensities[keep])


def _scaled_axis(x: np.ndarray) -> np.ndarray:
    # map onto [-1, 1]; raw nm powers are badly conditioned
    return 2.0 * (x - x[0]) / (x[-1] - x[0]) - 1.0


def modpoly_iterations(s: Spectrum, cfg: BaselineConfig = BaselineConfig()) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(fit, working_signal)`` after every modified-polyfit step.

    The working signal starts as the raw intensities and is clipped to the
    fit each round, so it never increases.
    """
    if len(s) <= cfg.order:
        raise SpectrumError(
            f"axis of length {len(s)} too short for order-{cfg.order} baseline"
        )
    if not np.all(np.isfinite(s.intensities)):
        raise SpectrumError("intensities contain non-finite values")
    vander = np.vander(_scaled_axis(s.wavelengths_nm), cfg.order + 1, increasing=True)
    # same design matrix every round: orthonormal basis once, projection after
    q, _ = np.linalg.qr(vander)
    work = s.intensities.copy()
    prev = None
    for _ in range(cfg.max_iterations):
        fit = q @ (q.T @ work)
        work = np.minimum(work, fit)
        yield fit, work
        if prev is not None:
            change = np.max(np.abs(fit - prev)) / (np.max(np.abs(fit)) + 1e-12)
            if change < cfg.tolerance:
                return
        prev = fit


def modpoly_baseline(s: Spectrum, cfg: BaselineConfig = BaselineConfig()) -> Spectrum:
    fit = None
    for fit, _ in modpoly_iterations(s, cfg):
        pass
    return s.with_intensities(fit)


def correct_baseline(s: Spectrum, baseline: Spectrum) -> Spectrum:
    if not np.array_equal(s.wavelengths_nm, baseline.wavelengths_nm):
        raise SpectrumError("spectrum and baseline axes differ")
    return s.with_intensities(np.clip(s.intensities - baseline.intensities, 0.0, None))


def minmax_normalize(s: Spectrum, atol: float = 0.0) -> Spectrum:
    """Rescale intensities onto [0, 1].

    A range of ``atol`` or less counts as flat: the result is all zeros with
    ``flat=True`` instead of an error.
    """
    lo = s.intensities.min()
    hi = s.intensities.max()
    span = hi - lo
    if span <= atol or span == 0.0:
        return s.with_intensities(np.zeros(len(s)), flat=True)
    out = (s.intensities - lo) / span
    # rounding can leave 1 + 1ulp
    return s.with_intensities(np.clip(out, 0.0, 1.0), flat=s.flat)


def resample_linear(s: Spectrum, n: int = N_FEATURES) -> FeatureVector:
    if n < 2:
        raise SpectrumError("need at least 2 output samples")
    x = s.wavelengths_nm
    grid = np.linspace(x[0], x[-1], n)
    values = np.interp(grid, x, s.intensities)
    # interpolation is a convex combination; keep rounding inside the input range
    values = np.clip(values, s.intensities.min(), s.intensities.max())
    values[0] = s.intensities[0]
    values[-1] = s.intensities[-1]
    return FeatureVector(values, flat=s.flat)


@dataclass(frozen=True)
class PreprocessConfig:
    window: SpectralWindow = field(default_factory=SpectralWindow)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    n_features: int = N_FEATURES
    # residual ranges below this fraction of the cropped raw magnitude are flat
    flat_rtol: float = 1e-9


def preprocess(
    raw: Spectrum,
    w: SpectralWindow = SpectralWindow(),
    cfg: BaselineConfig = BaselineConfig(),
    n: int = N_FEATURES,
    flat_rtol: float = 1e-9,
) -> FeatureVector:
    cropped = crop_window(raw, w)
    baseline = modpoly_baseline(cropped, cfg)
    corrected = correct_baseline(cropped, baseline)
    scale = np.max(np.abs(cropped.intensities))
    normalized = minmax_normalize(corrected, atol=flat_rtol * scale)
    fv = resample_linear(normalized, n)
    if not fv.in_unit_range():
        raise SpectrumError("preprocessed features left [0, 1]")
    return fv


def preprocess_with(raw: Spectrum, pp: PreprocessConfig) -> FeatureVector:
    return preprocess(raw, pp.window, pp.baseline, pp.n_features, pp.flat_rtol)


def wavelength_to_raman_shift(lambda_nm: float, excitation_nm: float) -> float:
    """Raman shift in cm^-1 for a scattered wavelength under a given excitation."""
    if lambda_nm <= 0 or excitation_nm <= 0:
        raise SpectrumError("wavelengths must be positive")
    return 1e7 * (1.0 / excitation_nm - 1.0 / lambda_nm)


def write_spectrum_csv(s: Spectrum, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["wavelength_nm", "intensity"])
        for x, y in zip(s.wavelengths_nm, s.intensities):
            writer.writerow([repr(float(x)), repr(float(y))])


def read_spectrum_csv(path) -> Spectrum:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["wavelength_nm", "intensity"]:
            raise SpectrumError(f"{path}: expected header 'wavelength_nm,intensity'")
        xs, ys = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                xs.append(float(row[0]))
                ys.append(float(row[1]))
            except (ValueError, IndexError) as exc:
                raise SpectrumError(f"{path}:{lineno}: bad row {row!r}") from exc
    return Spectrum(np.array(xs), np.array(ys))
