import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tlfno.grid import (BATHY_FAMILIES, PROFILE_FAMILIES, Grid2D, GridError, Scenario, SoundSpeedField,
                        SynthConfig, build_grid, synth_components, synth_environment)


def test_build_grid_spacing():
    g = build_grid(100, 51, 5000.0, 1000.0)
    assert g.shape == (51, 100)
    assert g.dr == pytest.approx(50.0)
    assert g.dz == pytest.approx(20.0)
    assert g.ranges[0] == pytest.approx(50.0)
    assert g.ranges[-1] == pytest.approx(5000.0)
    assert g.depths[-1] == pytest.approx(1000.0)


def test_grid_roundtrip_dict():
    g = build_grid(10, 8, 1000.0, 300.0)
    assert Grid2D.from_dict(g.to_dict()) == g


def test_refined_keeps_extent():
    g = build_grid(64, 48, 5000.0, 1200.0)
    f = g.refined(2)
    assert f.shape == (96, 128)
    assert f.range_extent == pytest.approx(g.range_extent)
    assert f.depth_extent == pytest.approx(g.depth_extent)


@pytest.mark.parametrize("args", [(0, 5, 1.0, 1.0), (5, 1, 1.0, 1.0), (5, 5, -1.0, 1.0)])
def test_bad_grid_rejected(args):
    with pytest.raises(GridError):
        build_grid(*args)


def test_ssf_rejects_nonpositive_speed(small_grid):
    c = np.full(small_grid.shape, 1500.0)
    c[3, 4] = 0.0
    with pytest.raises(GridError):
        SoundSpeedField(small_grid, c, np.full(small_grid.n_range, 300.0))


def test_ssf_rejects_bathy_outside_grid(small_grid):
    c = np.full(small_grid.shape, 1500.0)
    with pytest.raises(GridError):
        SoundSpeedField(small_grid, c, np.full(small_grid.n_range, 5000.0))


def test_ssf_arrays_are_read_only(homogeneous):
    with pytest.raises(ValueError):
        homogeneous.ssf.c[0, 0] = 1.0


def test_scenario_wavenumber(homogeneous):
    assert homogeneous.k0 == pytest.approx(2 * np.pi * 200.0 / 1500.0)
    assert homogeneous.wavelength == pytest.approx(7.5)


def test_synth_is_deterministic(synth_cfg):
    a = synth_environment(synth_cfg, 2)
    b = synth_environment(synth_cfg, 2)
    assert np.array_equal(a.ssf.c, b.ssf.c)
    assert np.array_equal(a.ssf.bathy, b.ssf.bathy)
    c = synth_environment(synth_cfg, 3)
    assert not np.array_equal(a.ssf.c, c.ssf.c)


def test_synth_index_out_of_range(synth_cfg):
    with pytest.raises(GridError):
        synth_environment(synth_cfg, synth_cfg.n_samples)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), index=st.integers(0, 9),
       profile=st.sampled_from(PROFILE_FAMILIES), bathy=st.sampled_from(BATHY_FAMILIES),
       scale=st.floats(0.0, 20.0))
def test_synth_respects_invariants(seed, index, profile, bathy, scale):
    g = build_grid(24, 16, 4000.0, 900.0)
    cfg = SynthConfig(seed=seed, n_samples=10, grid=g, profile_family=profile, bathy_family=bathy,
                      perturbation_scale=scale)
    d = synth_components(cfg, index)
    assert np.all(np.abs(d.perturbation) <= scale + 1e-12)
    assert np.all(d.bathy <= g.depth_extent + 1e-9)
    assert np.all(d.bathy > cfg.source_depth)
    scn = synth_environment(cfg, index)
    assert np.all(scn.ssf.c > 0)


def test_refined_grid_samples_same_field(synth_cfg):
    coarse = synth_environment(synth_cfg, 1)
    fine = synth_environment(synth_cfg, 1, synth_cfg.grid.refined(2))
    # coarse range columns coincide with every other fine column at matching depths
    fz = fine.grid.depths
    cz = coarse.grid.depths
    rows = [int(np.argmin(np.abs(fz - z))) for z in cz]
    cols = np.arange(1, fine.grid.n_range, 2)
    assert np.allclose(fine.grid.ranges[cols], coarse.grid.ranges)
    np.testing.assert_allclose(fine.ssf.bathy[cols], coarse.ssf.bathy, rtol=0, atol=1e-9)
    sub = fine.ssf.c[np.ix_(rows, cols)]
    exact = np.isclose(fz[rows], cz)
    np.testing.assert_allclose(sub[exact], coarse.ssf.c[exact], atol=1e-9)


def test_scenario_source_checks(small_grid):
    ssf = SoundSpeedField(small_grid, np.full(small_grid.shape, 1500.0), np.full(small_grid.n_range, 300.0))
    with pytest.raises(GridError):
        Scenario(ssf, source_freq=-1.0)
