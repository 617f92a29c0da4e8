"""Smoke tests for the parcv2 extension module.

These exercise the binding layer end to end: stencils on analytic fields,
ground-truth generation, snapshot file round trips, a miniature two-stage
training run, and the exception mapping. Numerical depth lives in the C++
test suite; here the point is that the python surface works.
"""

import numpy as np
import pytest

import parcv2


def grid_xy(n, dx):
    j = np.arange(n) * dx
    return np.meshgrid(j, j, indexing="xy")


def test_stencils_exact_on_polynomials():
    n, dx = 12, 0.25
    x, y = grid_xy(n, dx)

    gx, gy = parcv2.gradient(2.0 * x + 3.0 * y, dx)
    assert np.allclose(gx, 2.0, atol=1e-12)
    assert np.allclose(gy, 3.0, atol=1e-12)

    lap = parcv2.laplacian(x * x + y * y, dx)
    assert np.allclose(lap, 4.0, atol=1e-10)

    div = parcv2.divergence(x, y, dx)
    assert np.allclose(div, 2.0, atol=1e-12)


def test_replicate_boundary_differs():
    n, dx = 8, 0.5
    x, _ = grid_xy(n, dx)
    gx_metric, _ = parcv2.gradient(x * x, dx, boundary="one_sided2")
    gx_model, _ = parcv2.gradient(x * x, dx, boundary="replicate")
    assert not np.allclose(gx_metric[:, 0], gx_model[:, 0])
    with pytest.raises(ValueError):
        parcv2.gradient(x, dx, boundary="diagonal")


def test_burgers_trajectory_basics():
    data = parcv2.burgers_trajectory(R=1000.0, a=0.9, w=1.0, n=32, dx=6.0 / 32.0,
                                     dt=0.02, steps=5, substeps=10)
    assert data.shape == (6, 2, 32, 32)
    assert np.isfinite(data).all()
    # The upwind backward-Euler solver is monotone: no frame exceeds the
    # initial cellwise max, and the fields stay nonnegative.
    assert np.abs(data).max() <= data[0].max() * (1 + 1e-9)
    assert data.min() >= -1e-9
    # u and v start identical and stay identical under the symmetric dynamics.
    assert np.allclose(data[-1, 0], data[-1, 1].T, atol=1e-8)

    resid = parcv2.burgers_residual(data, ["u_x", "u_y"], 6.0 / 32.0, 0.02, 1000.0)
    assert resid < 1.0


def test_taylor_green_nearly_divergence_free():
    snap = parcv2.taylor_green(n=64, nu=0.1, rho=1.0, t=0.3)
    assert snap.shape == (3, 64, 64)
    dx = 2.0 * np.pi / 64
    signed, abs_mean = parcv2.divergence_error(snap[0], snap[1], dx)
    assert abs(signed) < 1e-6
    assert abs_mean < 5e-3


def test_trajectory_file_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    data = rng.uniform(-1.0, 1.0, size=(3, 4, 6, 5))
    channels = ["u_x", "u_y", "T", "mu"]
    path = str(tmp_path / "traj.fld")
    parcv2.save_trajectory(path, data, channels, dx=0.125, dt=0.05, t0=1.5)

    back = parcv2.load_trajectory(path)
    assert back["channels"] == channels
    assert back["dx"] == 0.125
    assert back["dt"] == 0.05
    assert back["t0"] == 1.5
    # Payload is float32 on disk; the round trip is exact at that precision.
    assert np.array_equal(back["data"], data.astype(np.float32).astype(np.float64))

    with pytest.raises(OSError):
        parcv2.load_trajectory(str(tmp_path / "missing.fld"))
    with pytest.raises(ValueError):
        parcv2.save_trajectory(str(tmp_path / "bad.fld"), data,
                               ["u_y", "u_x", "T", "mu"], dx=0.125, dt=0.05)


def test_hotspot_series():
    dx, dt = 0.5, 0.1
    frames = np.full((2, 3, 4, 4), 800.0)
    frames[:, :2] = 0.0  # still velocities
    frames[0, 2, :1] = 900.0  # 4 hot cells
    frames[1, 2, :2] = 900.0  # 8 hot cells
    hs = parcv2.hotspot_series(frames, ["u_x", "u_y", "T"], dx, dt,
                               channel="T", threshold=875.0)
    assert hs["temp"] == [900.0, 900.0]
    assert hs["area"] == [4 * dx * dx, 8 * dx * dx]
    assert hs["area_rate"] == [(8 - 4) * dx * dx / dt]


def write_manifest(path, entries, channels, data_concat, dt, split="train"):
    lines = [f"channels={','.join(channels)}", f"dt={dt!r}", "schema=1", f"split={split}"]
    for c, name in enumerate(channels):
        vals = data_concat[:, c]
        lines.append("stat.%s=%r,%r,%r,%r" % (name, float(vals.min()), float(vals.max()),
                                              float(vals.mean()), float(vals.std())))
    for i, (fname, consts) in enumerate(entries):
        lines.append(f"traj.{i}.file={fname}")
        for k, v in consts.items():
            lines.append(f"traj.{i}.const.{k}={v!r}")
    path.write_text("\n".join(lines) + "\n")


def test_train_and_model_round_trip(tmp_path):
    # Two tiny trajectories whose temperature field relaxes toward zero.
    n, frames, dt, dx = 8, 4, 0.1, 0.25
    rng = np.random.default_rng(3)
    entries = []
    all_data = []
    for i, rate in enumerate([0.5, 0.8]):
        base = rng.uniform(0.5, 1.0, size=(n, n))
        data = np.zeros((frames, 3, n, n))
        for k in range(frames):
            data[k, 2] = base * np.exp(-rate * k * dt)
        fname = f"traj_{i}.fld"
        parcv2.save_trajectory(str(tmp_path / fname), data, ["u_x", "u_y", "T"],
                               dx=dx, dt=dt)
        entries.append((fname, {"rate": rate}))
        all_data.append(data.astype(np.float32).astype(np.float64))
    write_manifest(tmp_path / "manifest.txt", entries, ["u_x", "u_y", "T"],
                   np.concatenate(all_data), dt)

    ckpt = str(tmp_path / "model.ckpt")
    res = parcv2.train(str(tmp_path / "manifest.txt"), stage=1, out=ckpt,
                       consts=["rate"], reaction=(2, 4, 3, "tanh"),
                       correction=(2, 4, 3, "tanh"), epochs=3, batch_size=2,
                       lr0=1e-3, seed=11)
    assert res["curve"].shape == (4, 4)
    assert np.isfinite(res["curve"]).all()
    assert res["best_val"] <= res["curve"][0, 2]

    m = parcv2.Model.load(ckpt)
    assert m.stage == 1
    assert m.channels == ["u_x", "u_y", "T"]
    assert m.const_names == ["rate"]

    F = m.differentiate(all_data[0][0], [0.5], dx)
    assert F.shape == (3, n, n)
    assert np.isfinite(F).all()

    roll = m.rollout(all_data[0][0], [0.5], dx, dt, steps=3)
    assert roll.shape == (4, 3, n, n)
    assert np.array_equal(roll[0], all_data[0][0])

    # Stage 2 picks up from the stage-1 checkpoint.
    res2 = parcv2.train(str(tmp_path / "manifest.txt"), stage=2, checkpoint=ckpt,
                        epochs=2, batch_size=2, lr0=1e-3, seed=11)
    assert res2["curve"].shape == (3, 4)
    assert res2["curve"][0, 2] <= res["best_val"] + 1e-12

    with pytest.raises(ValueError):
        parcv2.train(str(tmp_path / "manifest.txt"), stage=2)


def test_rmse():
    a = np.zeros((4, 4))
    b = np.full((4, 4), 2.0)
    assert parcv2.rmse(a, b) == 2.0
