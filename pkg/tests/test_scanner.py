import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import mc_fractions
from sersrecon.scanner import (
    Disk,
    PhantomLayout,
    ScanPlan,
    SpotModel,
    acquire,
    acquire_mixture,
    circle_overlap_area,
    default_layout,
    load_scan,
    material_fractions_at,
    plan_raster,
    save_scan,
    simulate_scan,
)
from sersrecon.synthgen import MaterialSpec, default_axis, default_materials, synth_spectrum

AXIS = default_axis()
MATS = {m.label: m for m in default_materials()}
QUIET = {m.label: MaterialSpec(m.label, m.peaks, m.baseline_coeff_ranges, 0.0) for m in default_materials()}


# --- planning ---------------------------------------------------------------------------

def test_default_plan_has_1800_positions():
    pos = plan_raster(ScanPlan())
    assert len(pos) == 1800
    assert pos[0].x_mm == -29.5 and pos[0].y_mm == -14.5
    assert pos[-1].x_mm == 29.5 and pos[-1].y_mm == 14.5
    assert [p.index for p in pos] == list(range(1800))


def test_single_position_at_origin():
    pos = plan_raster(ScanPlan(origin_mm=(3.0, -4.0), n_cols=1, n_rows=1))
    assert len(pos) == 1
    assert (pos[0].x_mm, pos[0].y_mm) == (3.0, -4.0)


def test_serpentine_order():
    pos = plan_raster(ScanPlan(n_cols=2, n_rows=2, pattern="serpentine"))
    assert [(p.col, p.row) for p in pos] == [(0, 0), (1, 0), (1, 1), (0, 1)]
    uni = plan_raster(ScanPlan(n_cols=2, n_rows=2))
    assert [(p.col, p.row) for p in uni] == [(0, 0), (1, 0), (0, 1), (1, 1)]


def test_plan_validation():
    with pytest.raises(ValueError):
        ScanPlan(n_cols=0)
    with pytest.raises(ValueError):
        ScanPlan(step_mm=0.0)
    with pytest.raises(ValueError):
        ScanPlan(dwell_s=-1.0)
    with pytest.raises(ValueError):
        ScanPlan(pattern="spiral")
    with pytest.raises(ValueError):
        SpotModel(0.0)
    with pytest.raises(ValueError):
        Disk((0, 0), -1.0, "x")


def test_default_layout_geometry():
    lay = default_layout()
    center, fa, fb = lay.regions
    assert center.radius_mm == 10.0 and center.center_mm == (0.0, 0.0)
    assert fa.center_mm[0] - fa.radius_mm - center.radius_mm == 10.0
    assert -fb.center_mm[0] - fb.radius_mm - center.radius_mm == 10.0
    assert 2 * fa.radius_mm == 5.0 and 2 * center.radius_mm == 20.0
    # ROI fully contains all three disks
    plan = ScanPlan()
    xs = [p.x_mm for p in plan_raster(plan)]
    assert min(xs) < -25.0 and max(xs) > 25.0


def test_positive_area_of_default_layout():
    assert default_layout().positive_area_mm2() == pytest.approx(math.pi * (100 + 6.25), abs=1e-12)


# --- fractions ------------------------------------------------------------------------

def test_fraction_inside_center():
    assert material_fractions_at(default_layout(), (1.0, 2.0)) == {"cy75_agarose": 1.0}


def test_fraction_far_from_regions():
    assert material_fractions_at(default_layout(), (0.0, 14.0)) == {"control_agarose": 1.0}


def test_fraction_on_edge_matches_monte_carlo():
    lay = default_layout()
    got = material_fractions_at(lay, (10.0, 0.0), SpotModel(0.5))
    oracle = mc_fractions(lay.regions, lay.background_material, (10.0, 0.0), 0.5, 1_000_000)
    assert got["cy75_agarose"] == pytest.approx(0.5, abs=0.01)
    assert abs(got["cy75_agarose"] - oracle["cy75_agarose"]) < 0.01
    assert set(got) == {"cy75_agarose", "control_agarose"}


def test_overlap_special_cases():
    assert circle_overlap_area((0, 0), 1.0, (3, 0), 1.0) == 0.0
    assert circle_overlap_area((0, 0), 1.0, (2, 0), 1.0) == 0.0
    assert circle_overlap_area((0, 0), 1.0, (0.2, 0), 3.0) == pytest.approx(math.pi)
    assert circle_overlap_area((0, 0), 2.0, (0, 0), 2.0) == pytest.approx(4 * math.pi)
    # unit circles one radius apart: 2*pi/3 - sqrt(3)/2
    r = 1.0
    lens = 2 * r * r * math.acos(0.5) - 0.5 * math.sqrt(3) * r * r
    assert circle_overlap_area((0, 0), r, (1, 0), r) == pytest.approx(lens, rel=1e-12)


def test_overlap_matches_monte_carlo_random_cases():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for case in range(100):
        r_spot = rng.uniform(0.2, 2.0)
        r_reg = rng.uniform(0.2, 5.0)
        d = rng.uniform(0.0, r_spot + r_reg)
        ang = rng.uniform(0, 2 * np.pi)
        reg = Disk((d * np.cos(ang), d * np.sin(ang)), r_reg, "a")
        got = circle_overlap_area((0.0, 0.0), r_spot, reg.center_mm, r_reg) / (math.pi * r_spot**2)
        mc = mc_fractions([reg], "bg", (0.0, 0.0), r_spot, 200_000, seed=case).get("a", 0.0)
        worst = max(worst, abs(got - mc))
    assert worst < 0.01


def test_overlapping_regions_use_occlusion_order():
    regions = (Disk((0.0, 0.0), 1.0, "a"), Disk((0.6, 0.0), 1.0, "b"))
    lay = PhantomLayout(regions, "bg", {"a"})
    got = material_fractions_at(lay, (0.3, 0.2), SpotModel(0.8))
    oracle = mc_fractions(regions, "bg", (0.3, 0.2), 0.8, 1_000_000, seed=5)
    for k in oracle:
        assert got.get(k, 0.0) == pytest.approx(oracle[k], abs=0.01)
    assert sum(got.values()) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(-32, 32), st.floats(-17, 17), st.floats(0.05, 3.0))
def test_fractions_sum_to_one(x, y, r):
    got = material_fractions_at(default_layout(), (x, y), SpotModel(r))
    assert sum(got.values()) == pytest.approx(1.0, abs=1e-9)
    assert all(0.0 <= v <= 1.0 for v in got.values())


# --- acquisition --------------------------------------------------------------------------

def test_pure_background_equals_synth_spectrum():
    s = acquire(default_layout(), (0.0, 14.0), SpotModel(), AXIS, 17, QUIET)
    ref = synth_spectrum(QUIET["control_agarose"], AXIS, 17)
    assert np.array_equal(s.intensities, ref.intensities)
    noisy = acquire(default_layout(), (0.0, 14.0), SpotModel(), AXIS, 17, MATS)
    assert np.array_equal(noisy.intensities, synth_spectrum(MATS["control_agarose"], AXIS, 17).intensities)


def test_half_mix_is_midpoint():
    mix = acquire_mixture({"control_agarose": 0.5, "cy75_agarose": 0.5}, QUIET, AXIS, 3)
    a = synth_spectrum(QUIET["control_agarose"], AXIS, 3).intensities
    b = synth_spectrum(QUIET["cy75_agarose"], AXIS, 3).intensities
    np.testing.assert_allclose(mix.intensities, 0.5 * (a + b), rtol=1e-14)


def test_acquire_deterministic():
    a = acquire(default_layout(), (10.0, 0.0), SpotModel(), AXIS, (4, 2), MATS)
    b = acquire(default_layout(), (10.0, 0.0), SpotModel(), AXIS, (4, 2), MATS)
    assert a == b


def test_unknown_label_errors():
    lay = PhantomLayout((Disk((0, 0), 1.0, "unobtainium"),), "control_agarose", {"unobtainium"})
    with pytest.raises(KeyError, match="unobtainium"):
        acquire(lay, (0.0, 0.0), SpotModel(), AXIS, 0, MATS)
    with pytest.raises(KeyError):
        acquire_mixture({"nope": 1.0}, MATS, AXIS, 0)


# --- simulate_scan ----------------------------------------------------------------------------

def test_single_cell_scan_time():
    rec = simulate_scan(default_layout(), ScanPlan(n_cols=1, n_rows=1, move_s_per_step=2.0), SpotModel(), AXIS, 0, MATS)
    assert len(rec) == 1
    assert rec.total_time_s == 0.35


def test_default_scan_bookkeeping():
    plan = ScanPlan()
    rec = simulate_scan(default_layout(), plan, SpotModel(), AXIS, 8, MATS)
    assert len(rec) == 1800
    assert rec.total_time_s == 1800 * 0.35
    assert [a.index for a in rec.acquisitions] == list(range(1800))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.floats(0.0, 2.0), st.floats(0.0, 1.0), st.sampled_from(["unidirectional", "serpentine"]))
def test_timing_formula_property(nc, nr, dwell, move, pattern):
    plan = ScanPlan(n_cols=nc, n_rows=nr, dwell_s=dwell, move_s_per_step=move, pattern=pattern)
    rec = simulate_scan(default_layout(), plan, SpotModel(), AXIS, 1, MATS)
    n = nc * nr
    assert len(rec) == n
    assert rec.total_time_s == n * dwell + (n - 1) * move
    assert {(a.row, a.col) for a in rec.acquisitions} == {(r, c) for r in range(nr) for c in range(nc)}


def test_scan_deterministic_and_round_trip(tmp_path):
    plan = ScanPlan(origin_mm=(8.0, -1.0), n_cols=4, n_rows=3, move_s_per_step=0.1)
    a = simulate_scan(default_layout(), plan, SpotModel(), AXIS, 3, MATS)
    b = simulate_scan(default_layout(), plan, SpotModel(), AXIS, 3, MATS)
    assert all(x.spectrum == y.spectrum for x, y in zip(a.acquisitions, b.acquisitions))
    save_scan(a, tmp_path / "scan")
    names = {p.name for p in (tmp_path / "scan").iterdir()}
    assert {"manifest.csv", "timing.json", "r0_c0.csv", "r2_c3.csv"} <= names
    header = (tmp_path / "scan" / "manifest.csv").read_text().splitlines()[0]
    assert header == "index,row,col,x_mm,y_mm,file"
    back = load_scan(tmp_path / "scan")
    assert back.plan == plan and back.total_time_s == a.total_time_s
    for x, y in zip(a.acquisitions, back.acquisitions):
        assert (x.index, x.row, x.col, x.position_mm) == (y.index, y.row, y.col, y.position_mm)
        assert x.spectrum == y.spectrum
