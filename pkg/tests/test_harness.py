import itertools
import json
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from nerfdiff.errors import ContractError, DimensionError, SizeError, StageError
from nerfdiff.field import generate_rays, look_at
from nerfdiff.field.sampling import ray_box_bounds
from nerfdiff.harness import (FeatureExtractor, MetricsReport, PipelineConfig, VoxelScene, camera_rig,
                              comparison_strip, extract_patches, fid, gaussian_window, gen_voxel_scene,
                              image_features, kid, oracle_render, oracle_render_rays, psnr, psnr_from_mse,
                              run_pipeline, smoke_config, split_indices, ssim, zoom_camera, zoom_experiment)

SPHERE = {"resolution": 16, "shapes": [
    {"type": "sphere", "center": [0, 0, 0], "radius": 0.5, "color": [0.8, 0.2, 0.1], "density": 10}]}


def cam(eye, size=12, far=8.0):
    return look_at(np.asarray(eye, float), np.zeros(3), size, size, 1.2 * size, near=0.1, far=far)


# -- voxel scenes ------------------------------------------------------------

def test_empty_shape_list_gives_zero_grid():
    s = gen_voxel_scene({"shapes": [], "resolution": 8})
    assert s.density.shape == (8, 8, 8) and not s.density.any()


def test_missing_shapes_key_is_rejected():
    with pytest.raises(ContractError):
        gen_voxel_scene({})


def test_centered_sphere_geometry():
    s = gen_voxel_scene({"resolution": 17, "shapes": [
        {"type": "sphere", "center": [0, 0, 0], "radius": 0.5, "color": [1, 1, 1], "density": 10}]})
    assert s.density[8, 8, 8] == 10
    assert s.density[0, 0, 0] == 0
    assert s.density_at(np.zeros(3))[0] == 10


def test_later_shapes_overwrite():
    s = gen_voxel_scene({"resolution": 8, "shapes": [
        {"type": "box", "min": [-1, -1, -1], "max": [1, 1, 1], "color": [1, 0, 0], "density": 1},
        {"type": "box", "min": [0, 0, 0], "max": [1, 1, 1], "color": [0, 1, 0], "density": 5}]})
    assert s.density[7, 7, 7] == 5 and s.density[0, 0, 0] == 1
    np.testing.assert_array_equal(s.color[7, 7, 7], [0, 1, 0])


@pytest.mark.parametrize("shape", [
    {"type": "sphere", "center": [0.8, 0, 0], "radius": 0.5, "color": [1, 1, 1], "density": 1},
    {"type": "box", "min": [0, 0, 0], "max": [1.5, 1, 1], "color": [1, 1, 1], "density": 1},
    {"type": "cone", "color": [1, 1, 1], "density": 1},
    {"type": "sphere", "center": [0, 0, 0], "radius": 0.2, "color": [2, 1, 1], "density": 1},
    {"type": "sphere", "center": [0, 0, 0], "color": [1, 1, 1], "density": 1},
])
def test_bad_shapes(shape):
    with pytest.raises(ContractError):
        gen_voxel_scene({"shapes": [shape]})


def test_texture_is_seeded():
    spec = dict(SPHERE, texture=0.2)
    a, b, c = gen_voxel_scene(spec, 1), gen_voxel_scene(spec, 1), gen_voxel_scene(spec, 2)
    np.testing.assert_array_equal(a.color, b.color)
    assert not np.array_equal(a.color, c.color)
    np.testing.assert_array_equal(a.color[a.density == 0], 0)


def test_texture_blocks_share_offsets():
    big = {"resolution": 8, "texture": 0.2, "texture_block": 4,
           "shapes": [{"type": "box", "min": [-1, -1, -1], "max": [1, 1, 1], "color": [0.5] * 3, "density": 1}]}
    s = gen_voxel_scene(big, 5)
    for i in (0, 4):
        for j in (0, 4):
            for k in (0, 4):
                block = s.color[i:i + 4, j:j + 4, k:k + 4].reshape(-1, 3)
                np.testing.assert_array_equal(block, np.broadcast_to(block[0], block.shape))
    assert len(np.unique(s.color[..., 0])) > 1
    # block 1 is the per-voxel default
    np.testing.assert_array_equal(gen_voxel_scene(dict(big, texture_block=1), 5).color,
                                  gen_voxel_scene({k: v for k, v in big.items() if k != "texture_block"}, 5).color)
    with pytest.raises(ContractError):
        gen_voxel_scene(dict(big, texture_block=0), 5)


def test_scene_file_round_trip(tmp_path):
    s = gen_voxel_scene(dict(SPHERE, texture=0.1), 3)
    s.save(tmp_path / "scene.json")
    back = VoxelScene.load(tmp_path / "scene.json")
    np.testing.assert_array_equal(back.density, s.density)
    np.testing.assert_array_equal(back.color, s.color)


def test_scene_rejects_negative_density():
    with pytest.raises(ContractError):
        VoxelScene(-np.ones((2, 2, 2)), np.zeros((2, 2, 2, 3)))


# -- oracle renderer ---------------------------------------------------------

def test_empty_scene_renders_background():
    s = gen_voxel_scene({"shapes": [], "resolution": 4})
    im = oracle_render(s, cam([0, 0, 3]), background=(0.2, 0.4, 0.6))
    np.testing.assert_allclose(im.pixels, np.broadcast_to([0.2, 0.4, 0.6], im.pixels.shape), atol=1e-7)


def _slab_chords(o, d, lo, hi):
    """Chord length through an axis-aligned box, by the slab method."""
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        t_a, t_b = (lo - o) / d, (hi - o) / d
    t_in = np.max(np.minimum(t_a, t_b), axis=1)
    t_out = np.min(np.maximum(t_a, t_b), axis=1)
    return np.maximum(t_out - np.maximum(t_in, 0), 0)


@pytest.mark.parametrize("eye", [[0, 0, 3.0], [2.0, 1.5, -2.5], [0.3, 0.2, 0.1]])
def test_uniform_slab_matches_closed_form(eye):
    n, sigma, color = 8, 1.7, np.array([0.3, 0.6, 0.9])
    s = VoxelScene(np.full((n, n, n), sigma), np.broadcast_to(color, (n, n, n, 3)).copy())
    c = cam(eye, size=9)
    im = oracle_render_rays(s, *generate_rays(c), c.near, c.far, background=(0, 0, 0))
    o, d = generate_rays(c)
    chord = _slab_chords(o, d, -1.0, 1.0)
    # the near plane trims the chord when the eye is inside the cube
    if np.all(np.abs(eye) < 1):
        chord = chord - c.near
    expect = (1 - np.exp(-sigma * chord))[:, None] * color
    np.testing.assert_allclose(im, expect, rtol=0, atol=1e-10)


def test_axis_ray_through_two_voxel_slabs():
    d = np.zeros((2, 2, 2))
    d[0] = 2.0  # x < 0 half
    col = np.zeros((2, 2, 2, 3))
    col[0] = [1, 0, 0]
    col[1] = [0, 1, 0]
    d[1] = 0.5
    s = VoxelScene(d, col)
    out = oracle_render_rays(s, np.array([[-3.0, 0.5, 0.5]]), np.array([[1.0, 0, 0]]), 0.1, 10, (0, 0, 0))
    w1 = 1 - np.exp(-2.0)
    w2 = np.exp(-2.0) * (1 - np.exp(-0.5))
    np.testing.assert_allclose(out[0], [w1, w2, 0], atol=1e-12)


def test_quadrature_converges_to_oracle():
    s = gen_voxel_scene({"resolution": 16, "texture": 0.2, "shapes": [
        {"type": "sphere", "center": [-0.2, 0, 0], "radius": 0.5, "color": [0.8, 0.3, 0.2], "density": 6},
        {"type": "box", "min": [0.1, -0.4, -0.3], "max": [0.6, 0.4, 0.5], "color": [0.2, 0.4, 0.9],
         "density": 4}]}, 0)
    c = cam([2.2, 1.3, 2.0], size=16)
    o, d = generate_rays(c)
    exact = oracle_render_rays(s, o, d, c.near, c.far, (1, 1, 1))
    t0, t1, hit = ray_box_bounds(o, d, c.near, c.far, -1.0, 1.0)
    n = 1024
    u = (np.arange(n) + 0.5) / n
    ts = t0[:, None] + (t1 - t0)[:, None] * u[None]
    delta = np.broadcast_to(((t1 - t0) / n)[:, None], ts.shape)
    pts = o[:, None] + ts[..., None] * d[:, None]
    sig = s.density_at(pts.reshape(-1, 3)).reshape(ts.shape)
    idx = np.clip(np.floor((pts + 1) / 2 * 16).astype(int), 0, 15)
    rgb = s.color[idx[..., 0], idx[..., 1], idx[..., 2]]
    tau = np.where(hit[:, None], sig * delta, 0.0)
    cum = np.cumsum(tau, 1)
    w = np.exp(-(cum - tau)) * (1 - np.exp(-tau))
    approx = np.einsum("rs,rsc->rc", w, rgb) + np.exp(-cum[:, -1])[:, None]
    assert np.mean(np.abs(approx - exact)) < 1e-3


def test_zero_direction_is_rejected():
    s = gen_voxel_scene(SPHERE)
    with pytest.raises(ContractError):
        oracle_render_rays(s, np.zeros((1, 3)), np.zeros((1, 3)), 0.1, 4.0)


# -- psnr / ssim -------------------------------------------------------------

def test_psnr_examples():
    a = np.zeros((4, 4, 3))
    assert psnr(a, a) == float("inf")
    assert psnr_from_mse(0.01) == 20.0
    assert psnr(a, a + 0.5) == pytest.approx(6.0206, abs=1e-4)


def test_psnr_shape_mismatch():
    with pytest.raises(DimensionError):
        psnr(np.zeros((2, 2)), np.zeros((2, 3)))


@given(hnp.arrays(np.float64, (6, 6), elements=st.floats(0, 1)), hnp.arrays(np.float64, (6, 6), elements=st.floats(0, 1)))
def test_psnr_symmetric(a, b):
    assert psnr(a, b) == psnr(b, a)


def test_ssim_identical_and_degenerate(rng):
    a = rng.uniform(0, 1, (16, 16, 3))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    flat = np.full((12, 12, 3), 0.5)
    assert ssim(flat, 1 - flat) == pytest.approx(1.0, abs=1e-12)


def _ssim_direct(a, b):
    """Windowed SSIM evaluated window by window with explicit weighted sums."""
    ga = to_luma(a)
    gb = to_luma(b)
    x = np.arange(11) - 5.0
    g1 = np.exp(-x ** 2 / (2 * 1.5 ** 2))
    w = np.outer(g1, g1)
    w /= w.sum()
    vals = []
    for i in range(ga.shape[0] - 10):
        for j in range(ga.shape[1] - 10):
            pa, pb = ga[i:i + 11, j:j + 11], gb[i:i + 11, j:j + 11]
            ma, mb = np.sum(w * pa), np.sum(w * pb)
            va, vb = np.sum(w * (pa - ma) ** 2), np.sum(w * (pb - mb) ** 2)
            cv = np.sum(w * (pa - ma) * (pb - mb))
            c1, c2 = 0.01 ** 2, 0.03 ** 2
            vals.append((2 * ma * mb + c1) * (2 * cv + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return np.mean(vals)


def to_luma(img):
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def test_ssim_matches_direct_formula(rng):
    a = rng.uniform(0, 1, (20, 17, 3))
    b = np.clip(a + rng.normal(0, 0.2, a.shape), 0, 1)
    assert ssim(a, b) == pytest.approx(_ssim_direct(a, b), abs=1e-6)


def test_ssim_range_and_size(rng):
    a, b = rng.uniform(0, 1, (2, 12, 12, 3))
    assert -1 <= ssim(a, b) <= 1
    with pytest.raises(SizeError):
        ssim(np.zeros((10, 10, 3)), np.zeros((10, 10, 3)))


def test_gaussian_window_normalized():
    g = gaussian_window()
    assert g.size == 11 and g.sum() == pytest.approx(1.0) and np.argmax(g) == 5


# -- fid / kid ---------------------------------------------------------------

def test_fid_identical_sets(rng):
    a = rng.standard_normal((200, 16))
    assert fid(a, a) <= 1e-6


def test_fid_degenerate_gaussians():
    assert fid(np.zeros((2, 1)), np.ones((2, 1))) == pytest.approx(1.0, abs=1e-12)


def _with_diagonal_covariance(rng, n, mean, std):
    """Samples whose sample covariance is exactly diag(std**2)."""
    x = rng.standard_normal((n, len(std)))
    q, _ = np.linalg.qr(x - x.mean(0))
    q -= q.mean(0)
    q, _ = np.linalg.qr(q)
    return q * np.sqrt(n - 1) * std + mean


def test_fid_diagonal_closed_form(rng):
    sa, sb = np.array([1, 2, 0.5, 3]), np.array([2, 1, 1, 0.2])
    a = _with_diagonal_covariance(rng, 500, np.array([0, 1, 2, 3]), sa)
    b = _with_diagonal_covariance(rng, 400, -1.0, sb)
    np.testing.assert_allclose(np.cov(a, rowvar=False), np.diag(sa ** 2), atol=1e-9)
    mu = a.mean(0) - b.mean(0)
    expect = mu @ mu + np.sum((sa - sb) ** 2)
    assert fid(a, b) == pytest.approx(expect, abs=1e-6)


def test_fid_nonnegative_and_checked(rng):
    assert fid(rng.standard_normal((5, 8)), rng.standard_normal((6, 8))) >= 0
    with pytest.raises(DimensionError):
        fid(np.zeros((3, 2)), np.zeros((3, 4)))
    with pytest.raises(SizeError):
        fid(np.zeros((1, 2)), np.zeros((3, 2)))


def test_kid_identical_sets(rng):
    a = rng.standard_normal((100, 8))
    assert kid(a, a) <= 1e-6


def test_kid_matches_double_sum_oracle(rng):
    a = np.concatenate([rng.normal(0, 1, (6, 1)), rng.normal(10, 1, (3, 1))])
    b = np.concatenate([rng.normal(10, 1, (5, 1)), rng.normal(0, 1, (2, 1))])
    k = lambda x, y: (x * y + 1.0) ** 3
    m, n = len(a), len(b)
    saa = sum(k(a[i, 0], a[j, 0]) for i in range(m) for j in range(m) if i != j) / (m * (m - 1))
    sbb = sum(k(b[i, 0], b[j, 0]) for i in range(n) for j in range(n) if i != j) / (n * (n - 1))
    sab = sum(k(a[i, 0], b[j, 0]) for i in range(m) for j in range(n)) / (m * n)
    assert kid(a, b) == pytest.approx(saa + sbb - 2 * sab, rel=1e-12)


def test_kid_permutation_invariant(rng):
    a, b = rng.standard_normal((30, 5)), rng.standard_normal((20, 5)) + 0.3
    assert kid(a[rng.permutation(30)], b[rng.permutation(20)]) == pytest.approx(kid(a, b), rel=1e-12)


# -- features ----------------------------------------------------------------

def test_patches_and_features(rng):
    imgs = rng.uniform(0, 1, (2, 16, 16, 3)).astype(np.float32)
    p = extract_patches(imgs, 8, 4)
    assert p.shape == (2 * 9, 8, 8, 3)
    np.testing.assert_array_equal(p[1], imgs[0, 0:8, 4:12])
    ext = FeatureExtractor(0)
    f = ext(p)
    assert f.shape == (18, 64) and ext.dim == 64
    np.testing.assert_array_equal(f, FeatureExtractor(0)(p))
    assert not np.array_equal(f, FeatureExtractor(1)(p))
    np.testing.assert_array_equal(image_features(imgs[:1], ext), f[:9])
    with pytest.raises(DimensionError):
        extract_patches(np.zeros((4, 4, 3)), 8, 4)


def test_identical_patches_identical_features(rng):
    p = np.repeat(rng.uniform(0, 1, (1, 8, 8, 3)), 3, axis=0)
    f = FeatureExtractor(3)(p)
    np.testing.assert_array_equal(f[0], f[2])


# -- report ------------------------------------------------------------------

def test_report_serialization(tmp_path):
    r = MetricsReport(rows=[("render", 0, "psnr", float("inf")), ("render", 0, "kid", -0.25)],
                      aggregate={"render": {"psnr": float("inf"), "kid": -0.25}})
    assert r.csv_text() == "variant,view,metric,value\nrender,0,psnr,inf\nrender,0,kid,-0.25\n"
    r.save(tmp_path)
    assert json.loads((tmp_path / "report.json").read_text()) == {"render": {"kid": -0.25, "psnr": "inf"}}


def test_split_is_nine_to_one():
    train, test = split_indices(72, 9)
    assert len(train) == 64 and test == list(range(0, 72, 9))
    assert not set(train) & set(test)


def test_camera_rig_looks_at_origin():
    cams = camera_rig(PipelineConfig())
    assert len(cams) == 72
    for c in cams[:5]:
        assert np.linalg.norm(c.translation) == pytest.approx(3.2)
        fwd = c.rotation[:, 2]
        np.testing.assert_allclose(np.cross(fwd, -c.translation), 0, atol=1e-9)


def test_zoom_camera_distance_and_repositioning():
    s = gen_voxel_scene(SPHERE)
    c = cam([0, 0, 3.2])
    z = zoom_camera(c, 2, s)
    assert np.linalg.norm(z.translation) == pytest.approx(1.6)
    np.testing.assert_array_equal(z.rotation, c.rotation)
    with pytest.warns(UserWarning, match="moved out"):
        inside = zoom_camera(c, 16, s)
    assert s.density_at(inside.translation)[0] == 0
    assert np.linalg.norm(inside.translation) > 0.2
    with pytest.raises(ContractError):
        zoom_camera(c, 0, s)


def test_comparison_strip_layout(rng):
    from nerfdiff.field import PosedImage
    c = cam([0, 0, 3], size=4)
    ims = [PosedImage(c, np.full((4, 4, 3), v, np.float32)) for v in (0.1, 0.2, 0.3)]
    strip = comparison_strip(*ims, gap=1)
    assert strip.shape == (4, 14, 3)
    assert strip[0, 0, 0] == np.float32(0.2) and strip[0, 5, 0] == np.float32(0.3)
    assert strip[0, 10, 0] == np.float32(0.1) and strip[0, 4, 0] == 1.0


# -- pipeline ----------------------------------------------------------------

@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    return run_pipeline(SPHERE, smoke_config(), 7, out_dir=out), out


def test_smoke_pipeline_outputs(smoke_run):
    res, out = smoke_run
    assert len(res.renders) == len(res.enhanced) == 8
    for name in ("oracle", "render", "enhanced"):
        assert sorted(p.name for p in (out / name).iterdir()) == [f"view_{v:03d}.png" for v in res.test_idx]
    lines = (out / "report.csv").read_text().splitlines()
    assert lines[0] == "variant,view,metric,value" and len(lines) == 1 + 2 * 8 * 4
    agg = json.loads((out / "report.json").read_text())
    assert set(agg) == {"render", "enhanced"} and set(agg["render"]) == {"psnr", "ssim", "fid", "kid"}
    assert agg["render"]["psnr"] > 15


def test_zoom_one_reproduces_test_metrics(smoke_run):
    res, _ = smoke_run
    z = zoom_experiment(res, 1)
    assert z.report.csv_text() == res.report.csv_text()


def test_zoom_changes_views(smoke_run):
    res, _ = smoke_run
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        z = zoom_experiment(res, 2)
    assert len(z.renders) == 8
    assert not np.array_equal(z.oracle[0].pixels, res.oracle[res.test_idx[0]].pixels)


def test_stage_errors_are_tagged():
    with pytest.raises(StageError) as info:
        run_pipeline({"shapes": [{"type": "cone"}]}, smoke_config(), 0)
    assert info.value.stage == "scene"
