import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spsl.channel import render_frames
from spsl.codebook import gray_codebook, long_run_gray_codebook, repetition_codebook
from spsl.decode import FAILED, make_decoder
from spsl.montecarlo import make_strategy
from spsl.photon_stats import DARK_ROOM, NOISELESS, condition_for
from spsl.scene_sim import (
    INLIER_MM,
    DepthMetrics,
    Geometry,
    SceneSpec,
    concat_stacks,
    decode_stack,
    evaluate,
    make_scene,
    read_correspondence_pgm,
    read_depth_text,
    reconstruct_depth,
    run_pipeline,
    sliding_window_decode,
    sliding_window_fps,
    write_correspondence_pgm,
    write_depth_text,
    write_metrics_csv,
)

SEEDS = range(10)


def marched_sphere_depth(width, height, geometry, z_plane, center, radius, step=2e-5):
    """Walk each pixel ray forward in depth until it enters the sphere or hits the plane."""
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    dx = (x - (width - 1) / 2) / geometry.f
    dy = (y - (height - 1) / 2) / geometry.f
    out = np.full((height, width), float(z_plane))
    found = np.zeros((height, width), bool)
    for z in np.arange(center[2] - radius - 0.01, z_plane, step):
        inside = (dx * z - center[0]) ** 2 + (dy * z - center[1]) ** 2 + (z - center[2]) ** 2 <= radius**2
        new = inside & ~found
        out[new] = z
        found |= inside
    return out


def test_plane_constant_disparity():
    g = Geometry()
    s = make_scene("plane", 64, 4, g, z0=0.5)
    disp = s.columns - np.arange(64)
    assert (disp == round(g.fb / 0.5)).all()
    assert s.meta["f"] == g.f and s.meta["b"] == g.b


def test_v_groove_apex_is_deepest():
    s = make_scene("v-groove", 641, 2, z0=0.5, depth_range=0.1)
    row = s.depth[0]
    assert row.argmax() == 320
    assert row.max() == pytest.approx(0.55)
    assert row.min() == pytest.approx(0.45)
    assert np.all(np.diff(row[:321]) > 0) and np.all(np.diff(row[320:]) < 0)


def test_sphere_matches_ray_march():
    g = Geometry()
    s = make_scene("sphere-on-plane", 240, 12, g, z0=0.5, depth_range=0.1, sphere_radius=0.06)
    ref = marched_sphere_depth(240, 12, g, 0.55, (0.0, 0.0, 0.55), 0.06)
    oracle_cols = np.arange(240)[None, :] + np.rint(g.fb / ref).astype(np.int64)
    assert np.abs(s.columns - oracle_cols).max() <= 1
    assert s.depth.min() < 0.5
    assert s.depth[0, 0] == pytest.approx(0.55)


def test_scene_validation():
    with pytest.raises(ValueError):
        make_scene("cube")
    with pytest.raises(ValueError):
        make_scene("plane", 0, 4)
    with pytest.raises(ValueError, match="columns"):
        make_scene("plane", 640, 4, num_columns=512)
    with pytest.raises(ValueError):
        make_scene("plane", 16, 4, albedo=0.0)
    with pytest.raises(ValueError):
        Geometry(mismatch=0)
    with pytest.raises(ValueError):
        Geometry(f=-1)


def test_scene_arrays_read_only():
    s = make_scene("plane", 16, 2)
    with pytest.raises(ValueError):
        s.depth[0, 0] = 1.0


def test_column_scale_near_two_mm():
    # One column of disparity at the working distance is worth about 2 mm.
    assert 1.0 <= Geometry().mm_per_column(0.5) <= 3.0


def test_reconstruct_off_by_one_column():
    g = Geometry(f=250.0, b=0.1)
    x = np.arange(4)
    z = reconstruct_depth((x + 51)[None], g)
    assert z[0, 0] == pytest.approx(25 / 51)
    assert (0.5 - z[0, 0]) / 0.5 == pytest.approx(0.0196, abs=5e-4)


def test_reconstruct_invalid_pixels():
    g = Geometry()
    z = reconstruct_depth(np.array([[0, 1, FAILED, 300]]), g)
    assert np.isnan(z[0, :3]).all()
    assert z[0, 3] == pytest.approx(g.fb / 297)


@pytest.mark.parametrize("kind", ["plane", "sphere-on-plane", "v-groove"])
def test_round_trip_within_one_column(kind):
    s = make_scene(kind, 320, 8)
    z = reconstruct_depth(s.columns, s.geometry)
    # Half a column of rounding, as depth.
    half_col = 1e-3 * s.geometry.mm_per_column(float(s.depth.max())) / 2
    assert np.abs(z - s.depth).max() <= half_col * 1.05


def test_evaluate_perfect():
    s = make_scene("v-groove", 64, 4)
    m = evaluate(s.depth, s)
    assert (m.rmse_all, m.inlier_fraction, m.rmse_inliers) == (0.0, 1.0, 0.0)
    assert not m.empty_inliers


def test_evaluate_all_off_10mm():
    s = make_scene("plane", 32, 4)
    m = evaluate(s.depth + 0.010, s)
    assert m.rmse_all == pytest.approx(10.0)
    assert m.inlier_fraction == 0.0
    assert m.rmse_inliers == 0.0 and m.empty_inliers


def test_evaluate_half_fixture():
    s = make_scene("plane", 4, 2, z0=0.5)
    z = s.depth.copy()
    z[:, 2] += 0.003  # inlier at 3 mm
    z[:, 3] = np.nan  # invalid
    z[1, 1] += 0.020  # outlier at 20 mm
    m = evaluate(z, s)
    err = np.array([0, 0, 3, 0, 20, 3])
    assert m.rmse_all == pytest.approx(math.sqrt(np.mean(err**2)))
    assert m.inlier_fraction == pytest.approx(5 / 8)
    assert m.rmse_inliers == pytest.approx(math.sqrt(18 / 5))
    assert m.valid_fraction == pytest.approx(6 / 8)


def test_evaluate_nothing_valid():
    s = make_scene("plane", 4, 2)
    m = evaluate(np.full((2, 4), np.nan), s)
    assert m.inlier_fraction == 0.0 and m.empty_inliers and m.valid_fraction == 0.0


def test_evaluate_shape_and_quantized_reference():
    s = make_scene("v-groove", 64, 2)
    with pytest.raises(ValueError):
        evaluate(np.zeros((3, 3)), s)
    assert evaluate(s.quantized_depth(), s, reference="quantized").rmse_all == 0.0


@given(st.lists(st.floats(-0.05, 0.05), min_size=8, max_size=8))
def test_rmse_inliers_below_threshold(offsets):
    s = make_scene("plane", 4, 2)
    m = evaluate(s.depth + np.reshape(offsets, (2, 4)), s)
    assert m.rmse_inliers <= INLIER_MM
    assert 0.0 <= m.inlier_fraction <= 1.0
    if m.inlier_fraction > 0:
        assert m.rmse_inliers <= m.rmse_all + 1e-12


def test_pipeline_noiseless_exact():
    scene = make_scene("v-groove", 640, 4)
    s = make_strategy("hybrid63")
    corr, m = run_pipeline(scene, s.book, condition_for(NOISELESS), seed=1)
    np.testing.assert_array_equal(corr, scene.columns)
    assert m.inlier_fraction == 1.0
    assert m.rmse_all < 1.0
    assert evaluate(reconstruct_depth(corr, scene.geometry), scene, "quantized").rmse_all == 0.0


def test_pipeline_deterministic():
    scene = make_scene("sphere-on-plane", 320, 4)
    s = make_strategy("lrrep3")
    cond = condition_for(DARK_ROOM)
    a = run_pipeline(scene, s.book, cond, 1.0, seed=5)
    b = run_pipeline(scene, s.book, cond, 1.0, seed=5)
    c = run_pipeline(scene, s.book, cond, 1.0, seed=6)
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1] == b[1]
    assert not np.array_equal(a[0], c[0])


@pytest.fixture(scope="module")
def groove():
    return make_scene("v-groove", 640, 16)


@pytest.fixture(scope="module")
def groove_mismatch():
    return make_scene("v-groove", 640, 16, Geometry(mismatch=2))


def test_ordering_dark_room(groove):
    cond = condition_for(DARK_ROOM)
    books = {n: make_strategy(n) for n in ("hybrid63", "lrrep8", "gray")}
    for seed in SEEDS:
        f = {n: run_pipeline(groove, s.book, cond, decoder=s.decoder, seed=seed)[1].inlier_fraction for n, s in books.items()}
        assert f["hybrid63"] >= f["lrrep8"] >= f["gray"], (seed, f)


def test_ordering_under_defocus(groove_mismatch):
    cond = condition_for(DARK_ROOM)
    hyb, bch = make_strategy("hybrid63"), make_strategy("bch63")
    for seed in SEEDS:
        a = run_pipeline(groove_mismatch, hyb.book, cond, 2.0, hyb.decoder, seed)[1]
        b = run_pipeline(groove_mismatch, bch.book, cond, 2.0, bch.decoder, seed)[1]
        assert a.inlier_fraction > b.inlier_fraction
        assert a.rmse_all < b.rmse_all


def test_decode_stack_window():
    book = gray_codebook(10)
    scene = make_scene("plane", 64, 2)
    stack = render_frames(scene, book, condition_for(NOISELESS))
    np.testing.assert_array_equal(decode_stack(stack, make_decoder(book)), scene.columns)
    with pytest.raises(ValueError):
        decode_stack(stack, make_decoder(book), start=1)


@pytest.fixture(scope="module")
def rep6():
    return repetition_codebook(gray_codebook(10), 6)


def test_sliding_full_stride(rep6):
    scene = make_scene("plane", 64, 2)
    one = render_frames(scene, rep6, condition_for(NOISELESS))
    stack = concat_stacks(one, one, one)
    maps = sliding_window_decode(stack, make_decoder(rep6), rep6.T)
    assert len(maps) == 3
    for m in maps:
        np.testing.assert_array_equal(m, scene.columns)


def test_sliding_half_stride(rep6):
    scene = make_scene("v-groove", 96, 2)
    one = render_frames(scene, rep6, condition_for(NOISELESS))
    maps = sliding_window_decode(concat_stacks(one, one), make_decoder(rep6), rep6.T // 2)
    assert len(maps) == 3
    for m in maps:
        np.testing.assert_array_equal(m, scene.columns)


def test_sliding_two_bursts_monotone(rep6):
    near = make_scene("plane", 128, 2, z0=0.50)
    far = make_scene("plane", 128, 2, z0=0.52)
    cond = condition_for(NOISELESS)
    stack = concat_stacks(render_frames(near, rep6, cond), render_frames(far, rep6, cond))
    maps = sliding_window_decode(stack, make_decoder(rep6), 6)
    fracs = [evaluate(reconstruct_depth(m, near.geometry), near).inlier_fraction for m in maps]
    assert len(fracs) == 11
    assert fracs[0] == 1.0 and fracs[-1] == 0.0
    assert all(a >= b for a, b in zip(fracs, fracs[1:]))
    assert any(0.0 < f < 1.0 for f in fracs)
    np.testing.assert_array_equal(maps[-1], far.columns)


def test_sliding_window_errors(rep6):
    scene = make_scene("plane", 16, 2)
    stack = render_frames(scene, rep6, condition_for(NOISELESS))
    dec = make_decoder(rep6)
    for bad in (0, -3, rep6.T + 1, 2.5):
        with pytest.raises(ValueError):
            sliding_window_decode(stack, dec, bad)
    short = render_frames(scene, gray_codebook(10), condition_for(NOISELESS))
    with pytest.raises(ValueError):
        sliding_window_decode(short, dec, 10)


def test_sliding_fps():
    assert sliding_window_fps(20000, 20) == 1000
    assert sliding_window_fps(20000, 10) == 2000
    with pytest.raises(ValueError):
        sliding_window_fps(20000, 0)


def test_long_exposure_average():
    book = long_run_gray_codebook(10)
    scene = make_scene("plane", 32, 2)
    stack = render_frames(scene, book, condition_for(NOISELESS))
    np.testing.assert_allclose(stack.average(), book.table[scene.columns].mean(axis=-1))


def test_pgm_round_trip(tmp_path):
    corr = np.array([[0, 5, FAILED], [1023, 300, 7]])
    path = tmp_path / "c.pgm"
    write_correspondence_pgm(path, corr)
    data = path.read_bytes()
    assert data.startswith(b"P5\n3 2\n65535\n")
    payload = data[len(b"P5\n3 2\n65535\n"):]
    assert [int.from_bytes(payload[i:i + 2], "big") for i in range(0, 12, 2)] == [0, 5, 65535, 1023, 300, 7]
    np.testing.assert_array_equal(read_correspondence_pgm(path), corr)


def test_pgm_rejects_large(tmp_path):
    with pytest.raises(ValueError):
        write_correspondence_pgm(tmp_path / "x.pgm", [[70000]])


def test_depth_text_round_trip(tmp_path):
    z = np.array([[0.5, np.nan], [0.4321, 0.6]])
    path = tmp_path / "d.txt"
    write_depth_text(path, z)
    lines = path.read_text().splitlines()
    assert lines[0] == "depth-mm 2 2"
    assert lines[1] == "500.0000 nan"
    back = read_depth_text(path)
    np.testing.assert_allclose(back, z, equal_nan=True)


def test_depth_text_bad_header(tmp_path):
    path = tmp_path / "d.txt"
    path.write_text("depth 2 2\n1 2\n3 4\n")
    with pytest.raises(ValueError):
        read_depth_text(path)
    path.write_text("depth-mm 3 2\n1 2\n3 4\n")
    with pytest.raises(ValueError):
        read_depth_text(path)


def test_metrics_csv(tmp_path):
    path = tmp_path / "m.csv"
    write_metrics_csv(path, [(212.0, 15000.0, "hybrid63", DepthMetrics(1.5, 0.9, 1.2), 3)])
    lines = path.read_text().splitlines()
    assert lines[0] == "phi_a,phi_p,strategy,metric,value,n_iter,seed"
    assert lines[1:] == [
        "212.0,15000.0,hybrid63,rmse_all,1.5,1,3",
        "212.0,15000.0,hybrid63,inlier_fraction,0.9,1,3",
        "212.0,15000.0,hybrid63,rmse_inliers,1.2,1,3",
    ]


def test_scene_spec_direct():
    z = np.full((2, 3), 0.5)
    with pytest.raises(ValueError):
        SceneSpec("plane", Geometry(), z, np.zeros((3, 2), int), 1.0)
    with pytest.raises(ValueError):
        SceneSpec("plane", Geometry(), -z, np.zeros((2, 3), int), 1.0)
