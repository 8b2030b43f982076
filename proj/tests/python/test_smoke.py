import math

import numpy as np
import pytest

import flowssm


def tetra():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    f = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]], dtype=np.int32)
    return v, f


def rotation_z(deg):
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def test_chamfer_hand_case():
    a = np.zeros((1, 3))
    b = np.array([[1.0, 0, 0], [3.0, 0, 0]])
    assert flowssm.chamfer_distance(a, b) == 1.5
    assert flowssm.chamfer_distance(a, b, one_sided=True) == 1.0


def test_mesh_round_trip(tmp_path):
    v, f = tetra()
    path = tmp_path / "t.obj"
    flowssm.save_mesh(v, f, path)
    v2, f2 = flowssm.load_mesh(path)
    np.testing.assert_allclose(v2, v)
    np.testing.assert_array_equal(f2, f)


def test_errors_map_to_python_exceptions(tmp_path):
    v, f = tetra()
    with pytest.raises(flowssm.TopologyError):
        flowssm.save_mesh(v, f + 10, tmp_path / "bad.obj")
    with pytest.raises(flowssm.IoError):
        flowssm.Model.load(tmp_path / "missing.fssm")
    assert issubclass(flowssm.ConfigError, flowssm.Error)


def test_icp_recovers_rotation():
    members, _, template = flowssm.generate_family({"family": "ellipsoid", "subdivisions": 2, "jitter": False}, 1)
    v, f = members[0]
    moved = v @ rotation_z(8).T + np.array([0.05, 0.0, -0.02])
    r = flowssm.icp_align((moved, f), (v, f))
    assert r["converged"]
    np.testing.assert_allclose(r["aligned"], v, atol=1e-6)


def test_synth_is_reproducible_and_intersection_free():
    spec = {"family": "bumpy_ellipsoid", "subdivisions": 2, "seed": 3}
    a, pa, _ = flowssm.generate_family(spec, 3)
    b, pb, _ = flowssm.generate_family(spec, 3)
    for (va, fa), (vb, fb) in zip(a, b):
        np.testing.assert_array_equal(va, vb)
        np.testing.assert_array_equal(fa, fb)
        assert flowssm.self_intersections(va, fa) == 0
    assert len(pa) == 3


def test_classification_of_separable_clusters():
    rng = np.random.default_rng(0)
    x = np.vstack([rng.normal(size=(30, 2)) + [10, 0], rng.normal(size=(30, 2)) - [10, 0]])
    y = [1] * 30 + [-1] * 30
    curve = flowssm.classify_monte_carlo(x, y, [0.2, 0.5], n_splits=50)
    assert [round(fr, 2) for fr, _, _ in curve] == [0.2, 0.5]
    assert all(mean == 1.0 for _, mean, _ in curve)


def test_train_fit_sample(tmp_path):
    members, _, template = flowssm.generate_family({"family": "ellipsoid", "subdivisions": 2, "seed": 5}, 5)
    meshes, scale, _ = flowssm.normalize_to_unit_box(members)
    (tmpl,), _, _ = flowssm.normalize_to_unit_box([template], 1.0 / scale)
    config = {
        "epochs": 2,
        "batch_size": 2,
        "n_sample_points": 200,
        "latent_dim": 4,
        "global_hidden": [12, 12, 12, 12],
        "local_hidden": [12, 12, 12, 12],
        "n_control_points": 8,
    }
    seen = []
    model, curve = flowssm.train(meshes[:4], tmpl, config, progress=lambda s, e, l: seen.append((s, e)))
    assert len(curve) == 4 and seen == [(1, 0), (1, 1), (2, 0), (2, 1)]
    assert all(math.isfinite(loss) for _, _, loss in curve)
    assert model.latent_dim == 4 and model.control_point_count == 8

    path = tmp_path / "m.fssm"
    model.save(path)
    loaded = flowssm.Model.load(path)
    v, f = loaded.sample(seed=1)
    assert v.shape == tmpl[0].shape
    np.testing.assert_array_equal(f, tmpl[1])

    target = flowssm.sample_surface(*meshes[4], 300, seed=2)
    fit = loaded.fit(target, iters=5, n_points=200)
    assert fit["z_global"].shape == (4,)
    assert fit["z_local"].shape == (8, 4)
    assert fit["final_loss"] <= fit["global_loss"] + 1e-12

    z = loaded.training_latents[0]
    zero = loaded.deform(tmpl[0], np.zeros(4), np.zeros((8, 4)))
    np.testing.assert_array_equal(zero, tmpl[0])
    moved = loaded.deform(tmpl[0], z["z_global"], z["z_local"])
    assert moved.shape == tmpl[0].shape
