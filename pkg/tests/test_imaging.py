import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsar import canonical as cn
from dsar import fileio
from dsar.forward import GridAxes, ScenarioParams, Scene, linearized_forward
from dsar.geometry import CircularPath, LinearPath
from dsar.imaging import (
    BeamPattern,
    Image,
    ImageGrid,
    artifact_metrics,
    backproject,
    backproject_points,
    beam_weight,
    find_peaks,
    predict_mirror_artifact,
    smooth_taper,
)
from dsar.verify import adjoint_gap

P = ScenarioParams(2 * np.pi * 1e3, 100.0, 100.0)
LIN = LinearPath(1.0)
CIRC = CircularPath(1.0, 1.0)


def lin_axes(n_s=48, n_omega=32):
    half = 2.5 / P.c0 * P.omega0
    return GridAxes.from_ranges(-3.0, 3.0, n_s, P.omega0 - half, P.omega0 + half, n_omega, endpoint_s=True)


# ---------------------------------------------------------------- beams


def test_beam_examples():
    assert np.all(beam_weight(BeamPattern("isotropic"), LIN, 0.0, np.random.default_rng(0).normal(size=(9, 2))) == 1)
    assert beam_weight(BeamPattern("left_looking"), LIN, 0.0, [0.0, -5.0]) == 0.0
    assert beam_weight(BeamPattern("left_looking"), LIN, 0.0, [0.0, 5.0]) == 1.0
    assert beam_weight(BeamPattern("right_looking"), LIN, 0.0, [0.0, -5.0]) == 1.0
    x = cn.uv_to_ground(CIRC, 0.3, 0.95, 0.2)
    assert beam_weight(BeamPattern("angular_mask", u_max=0.9), CIRC, 0.3, x) == 0.0
    x = cn.uv_to_ground(CIRC, 0.3, 0.5, 0.2)
    assert beam_weight(BeamPattern("angular_mask", u_max=0.9), CIRC, 0.3, x) == 1.0


def test_range_gate():
    b = BeamPattern("range_gate", taper=0.1, labels=("injective_safe",))
    assert beam_weight(b, CIRC, 0.0, [0.0, 0.0]) == 1.0
    assert beam_weight(b, CIRC, 0.0, [1.5, 0.0]) == 0.0
    g = BeamPattern("range_gate", taper=0.1, labels=("graph_safe",))
    assert beam_weight(g, CIRC, 0.0, [1.5, 0.0]) == 1.0
    with pytest.raises(ValueError):
        beam_weight(b, LIN, 0.0, [0.0, 0.0])


def test_circular_left_is_towards_centre():
    b = BeamPattern("left_looking", taper=0.05)
    assert beam_weight(b, CIRC, 0.0, [0.0, 0.0]) == 1.0
    assert beam_weight(b, CIRC, 0.0, [2.0, 0.0]) == 0.0


def test_beam_validation_and_round_trip():
    with pytest.raises(ValueError):
        BeamPattern("spotlight")
    with pytest.raises(ValueError):
        BeamPattern("isotropic", taper=0.0)
    with pytest.raises(ValueError):
        BeamPattern("angular_mask", u_max=1.5)
    b = BeamPattern("product", parts=(BeamPattern("angular_mask", u_max=0.8), BeamPattern("left_looking")))
    assert BeamPattern.from_dict(b.to_dict()) == b


def test_taper_is_c1():
    z = np.array([0.0, 1.0])
    step = 1e-6
    left = (smooth_taper(z) - smooth_taper(z - step)) / step
    right = (smooth_taper(z + step) - smooth_taper(z)) / step
    np.testing.assert_allclose(left, right, atol=1e-5)
    t = np.linspace(-0.5, 1.5, 2001)
    assert np.all(np.diff(smooth_taper(t)) >= 0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.2, 0.95), st.floats(0.0, 0.5), st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 6.3))
def test_beam_monotone_in_mask(u_max, shrink, x1, x2, s):
    wide = BeamPattern("angular_mask", u_max=u_max)
    narrow = BeamPattern("angular_mask", u_max=max(u_max - shrink, 0.01))
    x = [x1, x2]
    a, b = beam_weight(narrow, CIRC, s, x), beam_weight(wide, CIRC, s, x)
    assert 0.0 <= a <= b <= 1.0


# ---------------------------------------------------------------- mirror map


def test_mirror_examples():
    x, xi = predict_mirror_artifact([3.0, 2.0], [1.0, 1.0])
    np.testing.assert_array_equal(x, [3.0, -2.0])
    np.testing.assert_array_equal(xi, [1.0, -1.0])
    x, xi = predict_mirror_artifact([3.0, 0.0], [1.0, 0.0])
    np.testing.assert_array_equal(x, [3.0, 0.0])


@settings(max_examples=200)
@given(st.lists(st.floats(-1e6, 1e6), min_size=4, max_size=4))
def test_mirror_involution(v):
    x, xi = predict_mirror_artifact(*predict_mirror_artifact(v[:2], v[2:]))
    np.testing.assert_array_equal(np.concatenate([x, xi]), v)


# ---------------------------------------------------------------- backprojection


def test_zero_data_zero_image():
    axes = lin_axes(8, 8)
    grid = axes.grid(np.zeros((8, 8), complex), "start-stop", P, LIN.to_dict())
    img = backproject(grid, LIN, P, ImageGrid.from_bounds((-1, 1), (-1, 1), 5, 5))
    assert not np.any(img.values) and find_peaks(img) == []


def test_mismatched_grid_rejected():
    axes = lin_axes(8, 8)
    grid = axes.grid(np.ones((8, 8), complex), "start-stop", P, LIN.to_dict())
    with pytest.raises(ValueError):
        backproject_points(grid, LinearPath(2.0), P, [[0.0, 1.0]])
    with pytest.raises(ValueError):
        backproject_points(grid, LIN, ScenarioParams(P.omega0, 50.0, P.L), [[0.0, 1.0]])
    with pytest.raises(ValueError):
        backproject_points(grid, LIN, P, [[0.0, 1.0]], filt="hann")


@pytest.mark.parametrize("traj,params", [(LIN, P), (CIRC, ScenarioParams(20.0, 20.0, 10.0))], ids=["linear", "circular"])
@pytest.mark.parametrize("model", ["start-stop", "corrected"])
def test_adjoint_pairing(traj, params, model):
    assert adjoint_gap(np.random.default_rng(5), traj, params, model) < 1e-8


def test_reflection_equivariance():
    axes = lin_axes()
    grid_img = ImageGrid.from_bounds((-1.0, 1.0), (-1.5, 1.5), 9, 13)
    x = np.array([0.2, 0.9])
    a = backproject(linearized_forward(LIN, Scene([x], [1.0]), P, axes), LIN, P, grid_img).values
    b = backproject(linearized_forward(LIN, Scene([x * [1, -1]], [1.0]), P, axes), LIN, P, grid_img).values
    assert np.max(np.abs(a - b[:, ::-1])) <= 1e-10 * np.max(np.abs(a))


def test_thread_count_does_not_change_image():
    axes = lin_axes()
    data = linearized_forward(LIN, Scene([[0.2, 0.7]], [1.0]), P, axes)
    pts = np.random.default_rng(3).uniform(-1, 1, (300, 2))
    a = backproject_points(data, LIN, P, pts, threads=1, chunk=64)
    b = backproject_points(data, LIN, P, pts, threads=4, chunk=64)
    np.testing.assert_array_equal(a, b)


def test_excluded_side_contributes_nothing():
    axes = lin_axes()
    data = linearized_forward(LIN, Scene([[0.2, 0.7]], [1.0]), P, axes)
    out = backproject_points(data, LIN, P, [[0.2, -0.7], [0.0, -3.0]], beam=BeamPattern("left_looking", taper=0.2))
    np.testing.assert_array_equal(out, 0)


def test_ramp_filter_runs():
    axes = lin_axes(16, 16)
    data = linearized_forward(LIN, Scene([[0.0, 0.5]], [1.0]), P, axes)
    a = backproject_points(data, LIN, P, [[0.0, 0.5]], filt="ramp")
    assert np.isfinite(a).all() and abs(a[0]) > 0


# ---------------------------------------------------------------- peaks and metrics


def _blob_image(centre, shape=(41, 41)):
    grid = ImageGrid.from_bounds((-2, 2), (-2, 2), *shape)
    X = grid.points()
    vals = np.exp(-np.sum((X - centre) ** 2, axis=-1) / (2 * 0.15**2)).astype(complex)
    return Image(grid, vals)


def test_gaussian_blob_metrics():
    img = _blob_image(np.array([0.4, -0.6]))
    rep = artifact_metrics(img, Scene([[0.4, -0.6]], [1.0]), LIN)
    sc = rep["scatterers"][0]
    assert sc["location_error_cells"] == pytest.approx(0.0, abs=1e-9)
    assert sc["secondary_peak"] is None
    assert sc["mirror_location"] == [0.4, 0.6]


def test_subcell_peak_refinement():
    img = _blob_image(np.array([0.43, 0.0]))
    peak = find_peaks(img)[0]
    assert peak.position[0] == pytest.approx(0.43, abs=0.02)


def test_metrics_circular_reports_ranges():
    grid = ImageGrid.from_bounds((-1, 1), (-1, 1), 41, 41)
    X = grid.points()
    g = lambda c: np.exp(-np.sum((X - c) ** 2, axis=-1) / (2 * 0.05**2))
    img = Image(grid, (g(np.array([0.3, 0.2])) + 0.5 * g(np.array([-0.5, -0.5]))).astype(complex))
    sc = artifact_metrics(img, Scene([[0.3, 0.2]], [1.0]), CIRC)["scatterers"][0]
    assert sc["secondary_ratio_db"] == pytest.approx(20 * np.log10(0.5), abs=0.05)
    assert sc["min_relative_range_gap"] > 0
    assert len(sc["ranges"]["R_main"]) == 16


def test_metrics_need_truth():
    with pytest.raises(ValueError):
        artifact_metrics(_blob_image(np.zeros(2)), Scene(np.zeros((0, 2)), []), LIN)


def test_image_grid_indexing():
    g = ImageGrid.from_bounds((-1, 1), (0, 2), 5, 3)
    np.testing.assert_allclose(g.index_of([0.5, 1.0]), [3.0, 1.0])
    np.testing.assert_allclose(g.position((3.0, 1.0)), [0.5, 1.0])
    with pytest.raises(ValueError):
        ImageGrid((0.0, 0.0), (0.0, 1.0), (3, 3))


def test_pgm_and_csv(tmp_path):
    img = _blob_image(np.zeros(2), shape=(6, 4))
    fileio.write_pgm(img.magnitude, tmp_path / "i.pgm")
    raw = (tmp_path / "i.pgm").read_bytes()
    assert raw.startswith(b"P5\n")
    back = fileio.read_pgm(tmp_path / "i.pgm")
    assert back.shape == (4, 6) and back.max() == 65535
    fileio.write_image_csv(img, tmp_path / "i.csv")
    rows = np.loadtxt(tmp_path / "i.csv", delimiter=",", skiprows=1)
    assert rows.shape == (24, 4)
    fileio.write_pgm(np.zeros((3, 3)), tmp_path / "z.pgm")
    assert not fileio.read_pgm(tmp_path / "z.pgm").any()
