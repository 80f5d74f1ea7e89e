import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsar import fileio
from dsar.canonical import canonical_lift
from dsar.errors import FormatError, TruncatedPayloadError
from dsar.forward import (
    DataGrid,
    GridAxes,
    ScenarioParams,
    Scene,
    Window,
    doppler_terms,
    linearized_forward,
    simulate_raw,
    spectrum_decay_threshold,
    window_eval,
    window_spectrum,
    window_spectrum_quad,
    windowed_transform_oracle,
)
from dsar.geometry import CircularPath, LinearPath, range_state

from oracles import window_spectrum_trapezoid

P = ScenarioParams(2 * np.pi * 1e3, 100.0, 100.0)
LIN = LinearPath(1.0)

# Frozen values. The plateau plus the two ramps of the mollifier sum to 3L
# exactly, since step(z) + step(1 - z) = 1. The decay threshold is the scan
# result on the 0.01 grid of the cached unit spectrum.
SPECTRUM_AT_ZERO_PER_L = 3.0
DECAY_THRESHOLD_TIMES_L = 133.45


def small_axes(traj=LIN, params=P, n_s=32, n_omega=48, span=2.5):
    half = span * traj.speed / params.c0 * params.omega0
    lo, hi = params.omega0 - half, params.omega0 + half
    if traj.kind == "circular":
        return GridAxes.from_ranges(0.0, 2 * np.pi, n_s, lo, hi, n_omega)
    return GridAxes.from_ranges(-2.0, 2.0, n_s, lo, hi, n_omega, endpoint_s=True)


# ---------------------------------------------------------------- window


def test_window_examples():
    w = Window(100.0)
    assert window_eval(w, 0.0) == 1.0
    assert window_eval(w, 250.0) == 0.0 and window_eval(w, -250.0) == 0.0
    mid = window_eval(w, 150.0)
    assert 0.0 < mid < 1.0 and mid == window_eval(w, -150.0)
    np.testing.assert_array_equal(window_eval(w, np.linspace(-100, 100, 11)), 1.0)
    assert window_eval(w, 200.0) == 0.0


def test_window_monotone_on_ramp():
    w = Window(2.0)
    t = np.linspace(2.0, 4.0, 2001)
    assert np.all(np.diff(window_eval(w, t)) <= 0)


def test_window_rejects_bad_L():
    with pytest.raises(ValueError):
        Window(0.0)


def test_spectrum_at_zero():
    for L in (1.0, 7.0, 100.0):
        assert window_spectrum(Window(L), 0.0) == pytest.approx(SPECTRUM_AT_ZERO_PER_L * L, rel=1e-12)
        assert window_spectrum(Window(L), 0.0) > 2 * L


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 50.0), st.floats(0.0, 200.0))
def test_spectrum_even(L, nu):
    w = Window(L)
    assert window_spectrum(w, nu) == window_spectrum(w, -nu)


def test_spectrum_cache_matches_quadrature_and_trapezoid():
    w = Window(1.0)
    for nu in (0.0, 0.37, 1.9, 3.3, 12.0, 40.0):
        cached = float(window_spectrum(w, nu))
        assert cached == pytest.approx(window_spectrum_quad(w, nu), abs=1e-9)
        assert cached == pytest.approx(window_spectrum_trapezoid(1.0, nu), abs=1e-8)


def test_spectrum_decay():
    w = Window(1.0)
    nu_star = spectrum_decay_threshold(w)
    assert nu_star == pytest.approx(DECAY_THRESHOLD_TIMES_L, abs=0.02)
    nu = np.linspace(nu_star, 3 * nu_star, 5000)
    assert np.all(np.abs(window_spectrum(w, nu)) < 1e-8 * window_spectrum(w, 0.0))
    assert spectrum_decay_threshold(Window(100.0)) == pytest.approx(nu_star / 100.0, rel=1e-9)


# ---------------------------------------------------------------- raw signal


def test_simulate_raw_examples():
    t = np.linspace(-1, 1, 9)
    np.testing.assert_array_equal(simulate_raw(LIN, Scene(np.zeros((0, 2)), []), P, t), 0)
    x, V = np.array([0.4, 1.2]), 2.0 - 1.0j
    d = simulate_raw(LIN, Scene([x], [V]), P, t)
    R = range_state(LIN, x, t).R
    np.testing.assert_allclose(np.abs(d), abs(V) / (4 * np.pi * R) ** 2, rtol=1e-13)
    pair = simulate_raw(LIN, Scene([x, x * [1, -1]], [V, V]), P, t)
    np.testing.assert_allclose(pair, 2 * d, rtol=1e-13)


def test_scene_validation_and_raster():
    with pytest.raises(ValueError):
        Scene([[0.0, 0.0]], [np.nan])
    with pytest.raises(ValueError):
        Scene.from_raster(np.ones((2, 2)), (0, 0), (0.0, 1.0))
    sc = Scene.from_raster(np.array([[1.0, 0.0], [2.0, 3.0]]), (0.0, 0.0), (0.5, 0.25))
    assert len(sc) == 4
    np.testing.assert_allclose(sc.points[-1], [0.75, 0.375])
    np.testing.assert_allclose(sc.amplitudes.sum(), 6.0 * 0.125)


# ---------------------------------------------------------------- oracle


def test_oracle_empty_scene():
    out = windowed_transform_oracle(LIN, Scene(np.zeros((0, 2)), []), P, 0.0, [P.omega0, 1.01 * P.omega0])
    np.testing.assert_array_equal(out, 0)


def test_oracle_peaks_at_carrier_when_rdot_vanishes():
    x = np.array([0.3, 1.5])
    omega = P.omega0 + np.linspace(-0.02, 0.02, 81) * P.omega0
    mag = np.abs(windowed_transform_oracle(LIN, Scene([x], [1.0]), P, 0.3, omega))
    assert omega[np.argmax(mag)] == pytest.approx(P.omega0, abs=omega[1] - omega[0])


def test_oracle_matches_linearized_on_small_grid():
    axes = small_axes(n_s=12, n_omega=24)
    scene = Scene([[0.5, 2.0]], [1.0])
    lin = linearized_forward(LIN, scene, P, axes).values
    orc = np.array([windowed_transform_oracle(LIN, scene, P, s, axes.omega_axis) for s in axes.s_axis])
    assert np.linalg.norm(lin - orc) / np.linalg.norm(orc) < 1e-2


# ---------------------------------------------------------------- linearised forward


def test_linearized_empty_scene():
    g = linearized_forward(LIN, Scene(np.zeros((0, 2)), []), P, small_axes())
    assert g.values.shape == (32, 48) and not np.any(g.values)


@pytest.mark.parametrize("traj", [LIN, CircularPath(1.0, 1.0)], ids=repr)
def test_peak_frequency_matches_lift(traj):
    axes = small_axes(traj, n_s=16, n_omega=128)
    x = np.array([0.5, 1.0])
    g = linearized_forward(traj, Scene([x], [1.0]), P, axes)
    for i, s in enumerate(axes.s_axis):
        pred = canonical_lift(traj, s, 1.0, x, P).omega
        peak = axes.omega_axis[np.argmax(np.abs(g.values[i]))]
        assert abs(peak - pred) <= axes.domega


def test_corrected_vs_start_stop_when_rdot_vanishes():
    x = np.array([0.2, 0.9])
    s = 0.2
    D0, *_ = doppler_terms(LIN, x, s, P, "start-stop")
    D1, *_, st_ = doppler_terms(LIN, x, s, P, "corrected")
    assert float(st_.Rdot) == 0.0
    assert float(D1 - D0) == pytest.approx(float(st_.R * st_.Rddot) / P.c0**2, rel=1e-14)
    axes = GridAxes(s, 1.0, 1, P.omega0 * 0.99, P.omega0 * 0.0002, 101)
    a = linearized_forward(LIN, Scene([x], [1.0]), P, axes, "start-stop").values
    b = linearized_forward(LIN, Scene([x], [1.0]), P, axes, "corrected").values
    # No arrival-time correction, so the amplitude at matched Doppler offsets is unchanged.
    assert np.abs(b).max() == pytest.approx(np.abs(a).max(), rel=1e-3)
    assert np.angle(b[0, np.argmax(np.abs(b))]) == pytest.approx(
        np.angle(a[0, np.argmax(np.abs(a))]), abs=1e-9
    )


def test_linearity():
    rng = np.random.default_rng(2)
    axes = small_axes()
    s1 = Scene(rng.uniform(-2, 2, (3, 2)), rng.normal(size=3) + 1j * rng.normal(size=3))
    s2 = Scene(rng.uniform(-2, 2, (2, 2)), rng.normal(size=2) + 1j * rng.normal(size=2))
    for model in ("start-stop", "corrected"):
        a = linearized_forward(LIN, s1 + s2, P, axes, model).values
        b = linearized_forward(LIN, s1, P, axes, model).values + linearized_forward(LIN, s2, P, axes, model).values
        assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


def test_reflection_symmetry_of_data():
    axes = small_axes()
    a = linearized_forward(LIN, Scene([[0.4, 1.1]], [1.0]), P, axes).values
    b = linearized_forward(LIN, Scene([[0.4, -1.1]], [1.0]), P, axes).values
    np.testing.assert_array_equal(a, b)


def test_support_outside_doppler_band():
    axes = small_axes(n_s=16, n_omega=200, span=6.0)
    x = np.array([0.3, 0.7])
    g = linearized_forward(LIN, Scene([x], [1.0]), P, axes)
    nu_star = spectrum_decay_threshold(Window(P.L))
    mag = np.abs(g.values)
    for i, s in enumerate(axes.s_axis):
        D, *_ = doppler_terms(LIN, x, s, P)
        off = np.abs(axes.omega_axis - P.omega0 + 2 * P.omega0 * D)
        assert np.all(mag[i, off > nu_star * P.omega0] < 1e-8 * mag.max())


def test_tau_quadrature_path_agrees():
    axes = small_axes(n_s=4, n_omega=16)
    scene = Scene([[0.5, 1.0], [-0.3, 0.6]], [1.0, 0.5j])
    for model in ("start-stop", "corrected"):
        a = linearized_forward(LIN, scene, P, axes, model).values
        b = linearized_forward(LIN, scene, P, axes, model, tau_quadrature=True).values
        assert np.linalg.norm(a - b) / np.linalg.norm(b) < 1e-7


def test_threads_do_not_change_result():
    axes = small_axes(CircularPath(1.0, 1.0))
    scene = Scene([[0.5, 0.2]], [1.0])
    a = linearized_forward(CircularPath(1.0, 1.0), scene, P, axes, threads=1).values
    b = linearized_forward(CircularPath(1.0, 1.0), scene, P, axes, threads=4).values
    np.testing.assert_array_equal(a, b)


def test_argument_errors():
    with pytest.raises(ValueError):
        linearized_forward(LIN, Scene([[0, 1]], [1]), P, small_axes(), "born")
    with pytest.raises(ValueError):
        linearized_forward(LIN, Scene([[0, 1]], [1]), ScenarioParams(1.0, 0.5, 1.0), small_axes())
    with pytest.raises(ValueError):
        ScenarioParams(-1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        GridAxes(0.0, -1.0, 4, 1.0, 1.0, 4)


# ---------------------------------------------------------------- DSAR1 file format


def _grid():
    rng = np.random.default_rng(9)
    axes = small_axes(n_s=5, n_omega=7)
    vals = rng.normal(size=(5, 7)) + 1j * rng.normal(size=(5, 7))
    return axes.grid(vals, "corrected", P, LIN.to_dict())


def test_datagrid_round_trip(tmp_path):
    g = _grid()
    fileio.write_datagrid(g, tmp_path / "g.dsar")
    r = fileio.read_datagrid(tmp_path / "g.dsar")
    assert r.values.tobytes() == g.values.tobytes()
    assert (r.s0, r.ds, r.omega_start, r.domega, r.model) == (g.s0, g.ds, g.omega_start, g.domega, g.model)
    assert r.params == g.params and r.trajectory == g.trajectory


def test_datagrid_layout(tmp_path):
    g = _grid()
    fileio.write_datagrid(g, tmp_path / "g.dsar")
    raw = (tmp_path / "g.dsar").read_bytes()
    assert raw[:6] == b"DSAR1\n"
    header, payload = raw[6:].split(b"\n", 1)
    meta = json.loads(header)
    assert meta["n_s"] == 5 and meta["n_omega"] == 7 and meta["model"] == "corrected"
    assert {"omega0", "c0", "L"} <= set(meta["scenario"])
    np.testing.assert_array_equal(np.frombuffer(payload, "<f8")[:2], [g.values[0, 0].real, g.values[0, 0].imag])


def test_datagrid_bad_magic(tmp_path):
    fileio.write_datagrid(_grid(), tmp_path / "g.dsar")
    raw = (tmp_path / "g.dsar").read_bytes()
    (tmp_path / "bad.dsar").write_bytes(b"DSAR2\n" + raw[6:])
    with pytest.raises(FormatError):
        fileio.read_datagrid(tmp_path / "bad.dsar")


def test_datagrid_truncated(tmp_path):
    fileio.write_datagrid(_grid(), tmp_path / "g.dsar")
    raw = (tmp_path / "g.dsar").read_bytes()
    (tmp_path / "short.dsar").write_bytes(raw[:-16])
    with pytest.raises(TruncatedPayloadError):
        fileio.read_datagrid(tmp_path / "short.dsar")
    (tmp_path / "long.dsar").write_bytes(raw + b"\0" * 16)
    with pytest.raises(FormatError):
        fileio.read_datagrid(tmp_path / "long.dsar")


@pytest.mark.parametrize(
    "header",
    [b"not json", b'{"model": "start-stop"}', b'{"model": "x", "n_s": 1, "s0": 0, "ds": 1, "n_omega": 1, '
     b'"omega0_axis_start": 1, "domega": 1, "scenario": {"omega0": 1, "c0": 2, "L": 1}}'],
)
def test_datagrid_malformed_header(tmp_path, header):
    (tmp_path / "h.dsar").write_bytes(b"DSAR1\n" + header + b"\n" + b"\0" * 16)
    with pytest.raises(FormatError):
        fileio.read_datagrid(tmp_path / "h.dsar")


def test_datagrid_dimension_mismatch():
    with pytest.raises(ValueError):
        DataGrid(0.0, 1.0, 1.0, 1.0, np.zeros(3, complex), "start-stop", P)
    with pytest.raises(ValueError):
        DataGrid(0.0, 1.0, 1.0, 1.0, np.zeros((2, 3), complex), "unknown", P)


def test_datagrid_csv(tmp_path):
    g = _grid()
    fileio.write_datagrid_csv(g, tmp_path / "g.csv")
    rows = np.loadtxt(tmp_path / "g.csv", delimiter=",", skiprows=1)
    assert rows.shape == (35, 4)
    np.testing.assert_allclose(rows[8], [g.s_axis[1], g.omega_axis[1], g.values[1, 1].real, g.values[1, 1].imag])
