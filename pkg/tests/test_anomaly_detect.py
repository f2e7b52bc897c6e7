import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import cd_lasso
from tbsd.anomaly_detect import (
    AnomalyMask,
    DetectionParams,
    anomaly_mask,
    estimate_theta_t,
    model2_objective,
    ssd_baseline_detect,
    tbsd_detect,
)
from tbsd.decompose import Decomposition, soft_threshold
from tbsd.postprocess import evaluate
from tbsd.simulate import Anomaly, SimSpec, generate
from tbsd.smooth_basis import SmoothBasis
from tbsd.texture_learning import LearnConfig, TextureBasis, TileLayout, learn_texture_basis

EXACT = dict(tile_layers=1, tile_edge="pad", phi_bt=1.0)


def random_basis(rng, shape=(5, 5), k=6):
    Q, _ = np.linalg.qr(rng.normal(size=(shape[0] * shape[1], k)))
    return TextureBasis(Q, shape)


def test_params_validation_and_defaults():
    p = DetectionParams()
    assert (p.lam, p.gamma, p.eta, p.iter_times, p.phi_bt, p.phi_a) == (0.1, 0.2, 0.05, 1, 0.5, 0.02)
    assert p.to_dict()["binarize_eps"] == 1e-3
    for bad in (dict(lam=0), dict(eta=-1), dict(iter_times=0), dict(phi_a=1.5), dict(phi_bt=0)):
        with pytest.raises(ValueError):
            DetectionParams(**bad)


def test_theta_t_examples(rng):
    b = random_basis(rng)
    lay = TileLayout((5, 5), (5, 5))
    P = np.eye(25) - b.atoms @ b.atoms.T
    orth = (P @ rng.normal(size=25)).reshape(5, 5)
    assert np.allclose(estimate_theta_t(orth, b, 0.2, lay), 0, atol=1e-12)
    c = estimate_theta_t(b.atoms[:, 2].reshape(5, 5), b, 0.2, lay)
    want = np.zeros(6)
    want[2] = 0.9
    np.testing.assert_allclose(c[0], want, atol=1e-12)
    with pytest.raises(ValueError):
        estimate_theta_t(orth, b, 0.2, TileLayout((5, 5), (3, 3)))


@given(st.integers(0, 10_000), st.floats(0.01, 1.0))
def test_theta_t_matches_lasso_oracle(seed, gamma):
    r = np.random.default_rng(seed)
    b = random_basis(r)
    tile = r.normal(size=(5, 5))
    got = estimate_theta_t(tile, b, gamma)[0]
    ref = cd_lasso(b.atoms, tile.ravel(), gamma)
    assert np.linalg.norm(got - ref) <= 1e-6 * max(np.linalg.norm(ref), 1.0)


def _instance(seed, shape=(20, 20)):
    r = np.random.default_rng(seed)
    basis = SmoothBasis.for_shape(shape, 3)
    Y = r.random(shape)
    return Y, basis, random_basis(r)


def test_additivity_and_monotone_objective():
    Y, smooth, tb = _instance(0)
    params = DetectionParams(iter_times=10, **EXACT)
    dec = tbsd_detect(Y, smooth, tb, params, track=True)
    np.testing.assert_allclose(dec.total(), Y, atol=1e-9)
    h = np.array(dec.history)
    assert len(h) == 30 and np.all(np.diff(h) <= 1e-9)
    assert h[-1] == pytest.approx(model2_objective(Y, dec, smooth, 0.1, 0.2, 0.05))


def test_default_layout_additivity():
    Y, smooth, tb = _instance(1, (23, 21))
    dec = tbsd_detect(Y, smooth, tb, DetectionParams(iter_times=3))
    np.testing.assert_allclose(dec.total(), Y, atol=1e-9)


def test_anomaly_block_is_exact_minimiser():
    Y, smooth, tb = _instance(2)
    params = DetectionParams(**EXACT)
    dec = tbsd_detect(Y, smooth, tb, params)
    base = model2_objective(Y, dec, smooth, 0.1, 0.2, 0.05)
    r = np.random.default_rng(0)
    for _ in range(20):
        trial = Decomposition(dec.background, dec.texture, dec.anomaly + 1e-3 * r.normal(size=Y.shape), dec.residual,
                              dec.theta, dec.theta_t)
        assert model2_objective(Y, trial, smooth, 0.1, 0.2, 0.05) >= base - 1e-12


def test_phi_one_recovers_unscaled_update():
    Y, smooth, tb = _instance(3)
    dec = tbsd_detect(Y, smooth, tb, DetectionParams(**EXACT))
    np.testing.assert_allclose(dec.anomaly, soft_threshold(Y - dec.background - dec.texture, 0.025), atol=1e-15)
    half = tbsd_detect(Y, smooth, tb, DetectionParams(tile_layers=1, tile_edge="pad", phi_bt=0.5))
    np.testing.assert_allclose(half.anomaly, soft_threshold(Y - half.background - 0.5 * half.texture, 0.025),
                               atol=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_zero_texture_degenerates_to_baseline(seed):
    Y, smooth, tb = _instance(seed)
    params = DetectionParams(gamma=1e9, iter_times=4)
    a = tbsd_detect(Y, smooth, tb, params)
    b = ssd_baseline_detect(Y, smooth, params)
    assert np.all(a.texture == 0)
    for name in ("background", "anomaly", "residual"):
        assert np.max(np.abs(getattr(a, name) - getattr(b, name))) <= 1e-12


def test_no_texture_image_agrees_with_baseline():
    shape = (40, 40)
    Y = np.full(shape, 0.4)
    Y[10:16, 20:26] += 0.3
    smooth = SmoothBasis.for_shape(shape)
    tb = random_basis(np.random.default_rng(0), (8, 8), 4)
    # a texture basis that never fires leaves the same decomposition
    a = tbsd_detect(Y, smooth, tb, DetectionParams(gamma=1e9))
    b = ssd_baseline_detect(Y, smooth, DetectionParams(gamma=1e9))
    assert np.max(np.abs(a.anomaly - b.anomaly)) <= 1e-9


def test_huge_eta_empties_anomaly(rng):
    Y = rng.random((20, 20))
    smooth = SmoothBasis.for_shape((20, 20))
    assert np.all(ssd_baseline_detect(Y, smooth, DetectionParams(eta=1e9)).anomaly == 0)


@given(st.integers(0, 1000), st.floats(0.01, 0.3), st.floats(1.1, 4.0))
def test_anomaly_count_nonincreasing_in_eta(seed, eta, f):
    Y, smooth, tb = _instance(seed)
    a = tbsd_detect(Y, smooth, tb, DetectionParams(eta=eta, **EXACT)).anomaly
    b = tbsd_detect(Y, smooth, tb, DetectionParams(eta=eta * f, **EXACT)).anomaly
    assert np.count_nonzero(b) <= np.count_nonzero(a)


def test_baseline_history_monotone(rng):
    Y = rng.random((20, 20))
    dec = ssd_baseline_detect(Y, SmoothBasis.for_shape((20, 20), 3), DetectionParams(iter_times=10), track=True)
    assert np.all(np.diff(dec.history) <= 1e-9)
    assert np.all(dec.texture == 0)


def test_errors(rng):
    Y, smooth, tb = _instance(0)
    with pytest.raises(ValueError):
        tbsd_detect(Y[:10], smooth, tb)
    with pytest.raises(ValueError):
        tbsd_detect(Y, smooth, TextureBasis(np.zeros((25, 0)), (5, 5)))
    with pytest.raises(ValueError):
        ssd_baseline_detect(Y[:, :5], smooth)


def test_anomaly_mask_examples():
    z = np.zeros((10, 10))
    dec = Decomposition(z, z, z, z)
    m = anomaly_mask(dec)
    assert isinstance(m, AnomalyMask) and m.proportion == 0 and not m.alarm
    a = z.copy()
    a[:3, :3] = 0.5
    dec = Decomposition(z, z, a, z)
    assert anomaly_mask(dec, np.inf).mask.sum() == 0
    m = anomaly_mask(dec)
    assert m.proportion == pytest.approx(0.09) and m.alarm


@pytest.fixture(scope="module")
def cross_study():
    """Basis learned with the default configuration on a full-size defect-free cross image."""
    train = generate(SimSpec(seed=11))
    smooth = SmoothBasis.for_shape(train.image.shape)
    return smooth, learn_texture_basis(train.image).basis


@pytest.mark.xfail(strict=True, reason="gamma/2 coefficient shrinkage leaves 5-9% residual pixels under the "
                   "default parameters; see the decisions ledger")
def test_defect_free_image_raises_no_alarm(cross_study):
    smooth, basis = cross_study
    img = generate(SimSpec(seed=12)).image
    assert anomaly_mask(tbsd_detect(img, smooth, basis)).proportion < 0.02


def test_defect_free_false_alarms_come_from_shrinkage(cross_study):
    smooth, basis = cross_study
    img = generate(SimSpec(seed=12)).image
    default = anomaly_mask(tbsd_detect(img, smooth, basis)).proportion
    mild = anomaly_mask(tbsd_detect(img, smooth, basis, DetectionParams(gamma=1e-4))).proportion
    # most of the residual pixels vanish when the coefficients are barely shrunk
    assert mild < default / 3 and 0.02 < default < 0.12


def test_square_anomaly_found(cross_study):
    smooth, basis = cross_study
    spec = SimSpec(seed=13, anomalies=(Anomaly("square", (170.5, 190.5), 12, 0.4),))
    sim = generate(spec)
    assert sim.truth.sum() == 144
    rep = evaluate(anomaly_mask(tbsd_detect(sim.image, smooth, basis)).mask, sim.truth)
    assert rep.tpr > 0.3 and rep.fpr < 0.12
