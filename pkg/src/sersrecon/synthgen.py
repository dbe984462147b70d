"""Synthetic Raman-like spectra, labeled datasets, and the RRUFF ASCII format.

All generated peak positions and amplitudes are surrogates chosen to give
distinguishable classes inside the 810-920 nm window; they make no claim to
match measured agarose, Cy 7.5 or mineral spectra.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .spectral_core import Spectrum, SpectrumError, read_spectrum_csv, write_spectrum_csv

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


def default_axis() -> np.ndarray:
    """810-920 nm inclusive at 0.1 nm (1101 samples)."""
    return np.round(np.linspace(810.0, 920.0, 1101), 10)


@dataclass(frozen=True)
class PeakModel:
    center_nm: float
    fwhm_nm: float
    amplitude: float
    shape: str = "gaussian"

    def __post_init__(self):
        if not self.fwhm_nm > 0:
            raise ValueError("fwhm_nm must be > 0")
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.shape not in ("gaussian", "lorentzian"):
            raise ValueError(f"unknown peak shape {self.shape!r}")

    def evaluate(self, axis: np.ndarray) -> np.ndarray:
        dx = np.asarray(axis, dtype=float) - self.center_nm
        if self.shape == "gaussian":
            sigma = self.fwhm_nm * FWHM_TO_SIGMA
            return self.amplitude * np.exp(-0.5 * (dx / sigma) ** 2)
        hwhm = 0.5 * self.fwhm_nm
        return self.amplitude * hwhm**2 / (dx**2 + hwhm**2)


@dataclass(frozen=True)
class MaterialSpec:
    """A material class: peaks on a random cubic background plus noise.

    The cubic is evaluated in the reduced coordinate
    ``t = (lambda - baseline_center_nm) / baseline_halfwidth_nm``; each of
    the four coefficients (constant term first) is drawn uniformly from its
    interval.
    """

    label: str
    peaks: tuple[PeakModel, ...] = ()
    baseline_coeff_ranges: tuple[tuple[float, float], ...] = ((0.0, 0.0),) * 4
    noise_sigma_rel: float = 0.0
    baseline_center_nm: float = 865.0
    baseline_halfwidth_nm: float = 55.0

    def __post_init__(self):
        object.__setattr__(self, "peaks", tuple(self.peaks))
        ranges = tuple(tuple(float(v) for v in r) for r in self.baseline_coeff_ranges)
        if len(ranges) != 4 or any(len(r) != 2 or r[0] > r[1] for r in ranges):
            raise ValueError(f"{self.label}: need 4 (lo, hi) cubic coefficient ranges")
        object.__setattr__(self, "baseline_coeff_ranges", ranges)
        if self.noise_sigma_rel < 0:
            raise ValueError(f"{self.label}: noise_sigma_rel must be >= 0")
        if not self.baseline_halfwidth_nm > 0:
            raise ValueError(f"{self.label}: baseline_halfwidth_nm must be > 0")


# Shared background family: ~1000 counts with a random tilt and curvature.
_AGAROSE_BACKGROUND = ((900.0, 1100.0), (-150.0, 150.0), (-80.0, 80.0), (-40.0, 40.0))
_MINERAL_BACKGROUND = ((400.0, 600.0), (-120.0, 120.0), (-60.0, 60.0), (-30.0, 30.0))


def default_materials(noise_sigma_rel: float = 0.01) -> list[MaterialSpec]:
    control_peaks = (
        PeakModel(838.0, 14.0, 150.0),
        PeakModel(893.0, 16.0, 120.0),
    )
    cy75_peaks = (
        PeakModel(824.0, 2.5, 300.0),
        PeakModel(852.0, 2.0, 380.0),
        PeakModel(879.0, 3.0, 260.0),
        PeakModel(907.0, 2.5, 320.0),
    )
    return [
        MaterialSpec("control_agarose", control_peaks, _AGAROSE_BACKGROUND, noise_sigma_rel),
        MaterialSpec("cy75_agarose", cy75_peaks, _AGAROSE_BACKGROUND, noise_sigma_rel),
        # the dye fiducial carries no SERS reporter: spectrally it is control
        MaterialSpec("green_dye_agarose", control_peaks, _AGAROSE_BACKGROUND, noise_sigma_rel),
    ]


def mineral_materials(noise_sigma_rel: float = 0.01) -> list[MaterialSpec]:
    """Four pretraining classes with disjoint peak sets."""
    centers = (
        (815.0, 846.0, 872.0),
        (829.0, 861.0, 901.0),
        (835.0, 884.0, 914.0),
        (820.0, 856.0, 890.0),
    )
    widths = ((3.0, 5.0, 2.5), (4.0, 2.0, 6.0), (2.0, 3.5, 3.0), (6.0, 2.5, 4.5))
    amps = ((250.0, 180.0, 300.0), (200.0, 320.0, 150.0), (280.0, 220.0, 190.0), (170.0, 260.0, 240.0))
    out = []
    for k, (cs, ws, As) in enumerate(zip(centers, widths, amps)):
        peaks = tuple(
            PeakModel(c, w, a, "lorentzian" if k % 2 else "gaussian")
            for c, w, a in zip(cs, ws, As)
        )
        out.append(MaterialSpec(f"mineral_{k}", peaks, _MINERAL_BACKGROUND, noise_sigma_rel))
    return out


def _streams(seed) -> tuple[np.random.Generator, np.random.Generator]:
    baseline_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(baseline_ss), np.random.default_rng(noise_ss)


def clean_intensities(m: MaterialSpec, axis: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random cubic background plus peaks, no noise."""
    axis = np.asarray(axis, dtype=float)
    u = rng.random(4)
    coeffs = [lo + ui * (hi - lo) for ui, (lo, hi) in zip(u, m.baseline_coeff_ranges)]
    t = (axis - m.baseline_center_nm) / m.baseline_halfwidth_nm
    y = coeffs[0] + t * (coeffs[1] + t * (coeffs[2] + t * coeffs[3]))
    y = np.broadcast_to(y, axis.shape).astype(float)
    for p in m.peaks:
        y = y + p.evaluate(axis)
    return y


def add_noise(clean: np.ndarray, sigma_rel: float, rng: np.random.Generator) -> np.ndarray:
    if sigma_rel == 0:
        return clean
    sigma = sigma_rel * np.max(np.abs(clean))
    return clean + rng.normal(0.0, sigma, clean.shape)


def synth_spectrum(m: MaterialSpec, axis: Sequence[float], seed) -> Spectrum:
    """Deterministic synthetic spectrum for ``(m, axis, seed)``.

    ``seed`` is anything :class:`numpy.random.SeedSequence` accepts (an int
    or a sequence of ints).
    """
    axis = np.asarray(axis, dtype=float)
    base_rng, noise_rng = _streams(seed)
    clean = clean_intensities(m, axis, base_rng)
    return Spectrum(axis, add_noise(clean, m.noise_sigma_rel, noise_rng))


def mix_spectra(a: Spectrum, b: Spectrum, f: float) -> Spectrum:
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"mixing fraction {f} outside [0, 1]")
    if not np.array_equal(a.wavelengths_nm, b.wavelengths_nm):
        raise SpectrumError("cannot mix spectra on different axes")
    if f == 0.0:
        return Spectrum(a.wavelengths_nm, a.intensities.copy())
    if f == 1.0:
        return Spectrum(b.wavelengths_nm, b.intensities.copy())
    return Spectrum(a.wavelengths_nm, (1.0 - f) * a.intensities + f * b.intensities)


@dataclass
class LabeledDataset:
    features: list
    labels: np.ndarray
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if len(self.features) != self.labels.size:
            raise ValueError("features and labels differ in length")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ValueError("label out of range for class_names")

    def __len__(self):
        return self.labels.size

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=int)
        return LabeledDataset([self.features[i] for i in idx], self.labels[idx], list(self.class_names))


def make_dataset(materials: Sequence[MaterialSpec], n_per_class: int, axis=None, seed: int = 0) -> LabeledDataset:
    """``n_per_class`` raw spectra per material; label is the material index."""
    if len(materials) < 2:
        raise ValueError("need at least 2 materials")
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    names = [m.label for m in materials]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate material labels in {names}")
    axis = default_axis() if axis is None else np.asarray(axis, dtype=float)
    spectra, labels = [], []
    for k, m in enumerate(materials):
        for i in range(n_per_class):
            spectra.append(synth_spectrum(m, axis, (seed, k, i)))
            labels.append(k)
    return LabeledDataset(spectra, np.array(labels), names)


def save_dataset(ds: LabeledDataset, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with (directory / "labels.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "label", "class_name"])
        for i, (s, lab) in enumerate(zip(ds.features, ds.labels)):
            name = f"spectrum_{i:05d}.csv"
            write_spectrum_csv(s, directory / name)
            writer.writerow([name, int(lab), ds.class_names[lab]])


def load_dataset(directory) -> LabeledDataset:
    directory = Path(directory)
    rows = list(csv.DictReader((directory / "labels.csv").open(newline="")))
    n_classes = max(int(r["label"]) for r in rows) + 1 if rows else 0
    names = [""] * n_classes
    spectra, labels = [], []
    for r in rows:
        lab = int(r["label"])
        names[lab] = r["class_name"]
        spectra.append(read_spectrum_csv(directory / r["filename"]))
        labels.append(lab)
    return LabeledDataset(spectra, np.array(labels, dtype=int), names)


# --- RRUFF ASCII -----------------------------------------------------------

class RruffParseError(ValueError):
    pass


@dataclass
class RruffRecord:
    name: str
    metadata: dict
    spectrum: Spectrum


def parse_rruff(text) -> RruffRecord:
    """Parse a RRUFF-style ASCII file.

    ``##KEY=VALUE`` lines are metadata (``NAMES`` supplies the record name),
    ``x, y`` lines are data, ``##END`` stops parsing and blank lines are
    skipped. Accepts bytes, str, or a binary/text file object.
    """
    if hasattr(text, "read"):
        text = text.read()
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8-sig", errors="replace")
    metadata: dict[str, str] = {}
    xs, ys = [], []
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("##"):
            key, _, value = line[2:].partition("=")
            key = key.strip()
            if key.upper() == "END":
                break
            metadata[key] = value.strip()
            continue
        parts = [p for p in line.replace("\t", ",").split(",") if p.strip()]
        if len(parts) != 2:
            raise RruffParseError(f"line {lineno}: expected 'x, y', got {line!r}")
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise RruffParseError(f"line {lineno}: non-numeric data {line!r}") from exc
        if xs and x <= xs[-1]:
            raise RruffParseError(f"line {lineno}: x values must be increasing")
        xs.append(x)
        ys.append(y)
    if not xs:
        raise RruffParseError("empty spectrum")
    if len(xs) < 2:
        raise RruffParseError("spectrum needs at least 2 data lines")
    return RruffRecord(metadata.get("NAMES", ""), metadata, Spectrum(np.array(xs), np.array(ys)))


def serialize_rruff(rec: RruffRecord) -> str:
    meta = dict(rec.metadata)
    meta["NAMES"] = rec.name
    lines = [f"##{k}={v}" for k, v in meta.items()]
    lines += [f"{x!r}, {y!r}" for x, y in zip(rec.spectrum.wavelengths_nm.tolist(), rec.spectrum.intensities.tolist())]
    lines.append("##END=")
    return "\n".join(lines) + "\n"
