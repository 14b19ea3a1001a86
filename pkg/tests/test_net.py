import io
import math

import numpy as np
import pytest

from symnet.loss import INIT_PLANES, INIT_QUATS
from symnet.net import (
    WEIGHT_MAGIC,
    AdamState,
    TrainConfig,
    TrainRecord,
    WeightFormatError,
    adam_step,
    backward,
    channel_schedule,
    forward,
    init_weights,
    load_weights,
    load_weights_from,
    predict,
    save_weights,
    train,
    weights_bytes,
    write_loss_csv,
)
from symnet.transforms import ParameterError


@pytest.fixture(scope="module")
def net32():
    return init_weights(0, 32)


def _toy_net(seed=0):
    """16^3 float64 net with a non-zero output layer so every parameter matters."""
    net = init_weights(seed, 16, dtype=np.float64)
    rng = np.random.default_rng(seed + 100)
    net.params["fc2.w"] = rng.normal(0, 0.3, net.params["fc2.w"].shape)
    for k in net.param_names():
        if k.endswith(".b"):
            net.params[k] = net.params[k] + rng.normal(0, 0.05, net.params[k].shape)
    return net


def _objective(net, vox, up_p, up_q):
    raw, cache = forward(net, vox)
    q = raw[:, 3:] / np.linalg.norm(raw[:, 3:], axis=-1, keepdims=True)
    return float(np.sum(raw[:, :3] * up_p) + np.sum(q * up_q)), cache


def test_channel_schedule():
    assert channel_schedule(32) == [4, 8, 16, 32, 64]
    assert channel_schedule(16) == [8, 16, 32, 64]
    with pytest.raises(ParameterError):
        channel_schedule(20)


def test_init_outputs_are_canonical(net32, box_prepared):
    cand = predict(net32, box_prepared.voxels)[0]
    assert np.array_equal(cand.planes, INIT_PLANES)
    assert np.array_equal(cand.quats, INIT_QUATS)


def test_init_candidates_have_zero_regularization(net32, box_prepared):
    from symnet.loss import regularization

    assert regularization(predict(net32, box_prepared.voxels)[0]) == 0.0


def test_forward_deterministic_and_shape(net32, box_prepared):
    a, _ = forward(net32, box_prepared.voxels)
    b, _ = forward(net32, box_prepared.voxels)
    assert a.shape == (1, 6, 4)
    assert np.array_equal(a, b)


def test_zero_input_is_finite(net32):
    raw, _ = forward(net32, np.zeros((32, 32, 32), bool))
    assert np.all(np.isfinite(raw))


def test_identical_batch_rows_identical():
    net = _toy_net(1)
    vox = np.random.default_rng(0).random((16, 16, 16)) < 0.1
    raw, _ = forward(net, np.stack([vox, vox, vox]))
    assert np.array_equal(raw[0], raw[1]) and np.array_equal(raw[0], raw[2])


def test_wrong_resolution_rejected(net32):
    with pytest.raises(ParameterError):
        forward(net32, np.zeros((16, 16, 16)))


def test_zero_upstream_gradient_gives_zero_grads():
    net = _toy_net(2)
    vox = np.random.default_rng(1).random((2, 16, 16, 16)) < 0.1
    _, cache = forward(net, vox)
    grads = backward(net, cache, np.zeros((2, 3, 4)), np.zeros((2, 3, 4)))
    assert all(not np.any(g) for g in grads.values())
    assert set(grads) == set(net.param_names())


def test_backward_matches_finite_differences():
    net = _toy_net(3)
    rng = np.random.default_rng(5)
    vox = rng.random((2, 16, 16, 16)) < 0.15
    up_p = rng.normal(size=(2, 3, 4))
    up_q = rng.normal(size=(2, 3, 4))
    _, cache = _objective(net, vox, up_p, up_q)
    grads = backward(net, cache, up_p, up_q)
    names = net.param_names()
    h = 1e-6
    rel = []
    for _ in range(100):
        k = names[rng.integers(len(names))]
        idx = tuple(rng.integers(s) for s in net.params[k].shape)
        orig = net.params[k][idx]
        net.params[k][idx] = orig + h
        fp, _ = _objective(net, vox, up_p, up_q)
        net.params[k][idx] = orig - h
        fm, _ = _objective(net, vox, up_p, up_q)
        net.params[k][idx] = orig
        fd = (fp - fm) / (2 * h)
        an = grads[k][idx]
        rel.append(abs(fd - an) / max(abs(fd), abs(an), 1e-6))
    # leaky-relu and max-pool kinks may spoil a few probes
    assert np.mean(np.array(rel) < 1e-4) >= 0.95


def test_batch_gradients_add_up():
    net = _toy_net(4)
    rng = np.random.default_rng(7)
    vox = rng.random((2, 16, 16, 16)) < 0.1
    up_p = rng.normal(size=(2, 3, 4))
    up_q = rng.normal(size=(2, 3, 4))
    _, cache = forward(net, vox)
    both = backward(net, cache, up_p, up_q)
    _, c0 = forward(net, vox[:1])
    _, c1 = forward(net, vox[1:])
    g0 = backward(net, c0, up_p[:1], up_q[:1])
    g1 = backward(net, c1, up_p[1:], up_q[1:])
    for k in both:
        assert np.allclose(both[k], g0[k] + g1[k], rtol=1e-10, atol=1e-12)


# -- Adam --------------------------------------------------------------------------


def test_adam_first_step_closed_form():
    net = init_weights(0, 16, dtype=np.float64)
    before = {k: v.copy() for k, v in net.params.items()}
    g = {k: np.full_like(v, 0.5) for k, v in net.params.items()}
    state = AdamState(lr=0.01)
    adam_step(net, g, state)
    # bias-corrected first step: lr * g / (|g| + eps)
    expect = 0.01 * 0.5 / (0.5 + 1e-8)
    for k in net.params:
        assert np.allclose(before[k] - net.params[k], expect, rtol=1e-12)


def test_adam_zero_gradient_no_change():
    net = init_weights(0, 16)
    before = {k: v.copy() for k, v in net.params.items()}
    adam_step(net, {k: np.zeros_like(v) for k, v in net.params.items()}, AdamState())
    for k in net.params:
        assert np.array_equal(before[k], net.params[k])


def test_adam_rejects_nan():
    from symnet.net import TrainingError

    net = init_weights(0, 16)
    g = {k: np.zeros_like(v) for k, v in net.params.items()}
    g["fc1.b"][0, 0] = np.nan
    with pytest.raises(TrainingError):
        adam_step(net, g, AdamState())


# -- weight files -------------------------------------------------------------------


def test_weights_roundtrip_bitwise(tmp_path):
    net = init_weights(7, 32)
    net.params["fc2.w"] += np.float32(0.125)
    save_weights(net, tmp_path / "w.prsw")
    back = load_weights(tmp_path / "w.prsw")
    assert back.resolution == 32 and back.slope == pytest.approx(0.01)
    for k in net.param_names():
        assert np.array_equal(back.params[k], net.params[k])
    assert weights_bytes(back) == weights_bytes(net)
    assert (tmp_path / "w.prsw").read_bytes()[:4] == WEIGHT_MAGIC


@pytest.mark.parametrize("cut", [0, 4, 10, 20, 1000, -1])
def test_truncated_weights(cut):
    data = weights_bytes(init_weights(0, 16))
    with pytest.raises(WeightFormatError):
        load_weights_from(io.BytesIO(data[:cut]))


def test_bad_weight_magic():
    data = weights_bytes(init_weights(0, 16))
    with pytest.raises(WeightFormatError):
        load_weights_from(io.BytesIO(b"NOPE" + data[4:]))


# -- training --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_records(box_prepared, cylinder_prepared):
    from symnet.pipeline import prepare

    recs = []
    for shape in (box_prepared, cylinder_prepared):
        p = prepare(shape.mesh, 16, seed=0)
        recs.append(p.record())
    return recs


def test_predicted_quaternions_unit_norm(tiny_records):
    net, _ = train(TrainConfig(batch_size=2, epochs=3, resolution=16, lr=0.01), tiny_records)
    for cand in predict(net, [r.voxels for r in tiny_records]):
        assert np.allclose(np.linalg.norm(cand.quats, axis=1), 1.0)


def test_training_deterministic_and_logged(tiny_records, tmp_path):
    cfg = TrainConfig(batch_size=1, epochs=2, resolution=16, lr=0.003, seed=3)
    a, log_a = train(cfg, tiny_records)
    b, log_b = train(cfg, tiny_records)
    assert weights_bytes(a) == weights_bytes(b)
    assert [e.total for e in log_a] == [e.total for e in log_b]
    assert all(math.isfinite(e.total) for e in log_a)
    assert [e.step for e in log_a] == list(range(1, 5))
    write_loss_csv(log_a, tmp_path / "loss.csv")
    lines = (tmp_path / "loss.csv").read_text().splitlines()
    assert lines[0] == "step,epoch,l_sd,l_r,total"
    steps = [int(x.split(",")[0]) for x in lines[1:]]
    assert steps == sorted(steps) and len(steps) == 4


def test_training_reduces_loss_on_fixed_shape():
    from symnet import dataset as ds
    from symnet.pipeline import prepare

    # rotated, so the canonical starting candidates are far from optimal
    rec = prepare(ds.generate("box", None, seed=1, rotation_seed=3).mesh, 16, seed=0).record()
    net, log = train(TrainConfig(batch_size=1, epochs=30, resolution=16, lr=0.003), [rec])
    assert log[-1].l_sd < 0.8 * log[0].l_sd


def test_training_resolution_mismatch(tiny_records):
    with pytest.raises(ParameterError):
        train(TrainConfig(resolution=32, epochs=1), tiny_records)


def test_empty_training_set():
    with pytest.raises(ParameterError):
        train(TrainConfig(epochs=1), [])
