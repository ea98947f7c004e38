import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roadgp.fusion import (
    LocalSummary,
    SupportSet,
    check_equivalence,
    collapse_observations,
    global_summary,
    local_summary,
    pitc_oracle,
    predict_decentralized,
)
from roadgp.gp import GpModel, entropy
from roadgp.network import Embedding, KernelHyper
from roadgp.verify import random_fusion_instance, random_model


def line_model(xs, sf=1.0, ell=1.0, noise=0.1, mean=0.0):
    return GpModel(Embedding(np.asarray(xs, dtype=float)[:, None], 0.0), KernelHyper(sf, ell, noise), mean)


@pytest.fixture
def model(rng):
    return random_model(rng, 24)[1]


def summaries_for(model, support, blocks, z):
    out, start = [], 0
    for k, b in enumerate(blocks):
        out.append(local_summary(model, support, b, z[start:start + len(b)], sensor=k))
        start += len(b)
    return out


# -- local summary ---------------------------------------------------------------


def test_empty_local_summary_is_zero(model):
    sup = SupportSet.from_model(model, [0, 5, 9])
    s = local_summary(model, sup, [], [], sensor=3)
    assert s.sensor == 3
    np.testing.assert_array_equal(s.z, np.zeros(3))
    np.testing.assert_array_equal(s.cov, np.zeros((3, 3)))


def test_scalar_local_summary():
    m = line_model([0.0, 0.5], sf=1.0, ell=1.0, noise=0.2, mean=1.0)
    sup = SupportSet.from_model(m, [0])
    k = np.exp(-0.125)
    cond = 1.2 - k * k / 1.2
    s = local_summary(m, sup, [1], [3.0])
    assert s.z[0] == pytest.approx(k * 2.0 / cond, rel=1e-13)
    assert s.cov[0, 0] == pytest.approx(k * k / cond, rel=1e-13)


def test_local_summary_covariance_symmetric_psd(model, rng):
    sup = SupportSet.from_model(model, [1, 4, 8, 12])
    D = rng.choice(24, size=10, replace=False)
    s = local_summary(model, sup, D, rng.normal(size=10))
    np.testing.assert_array_equal(s.cov, s.cov.T)
    assert np.linalg.eigvalsh(s.cov).min() >= -1e-10 * np.abs(s.cov).max()


def test_repeated_segment_keeps_latest_measurement():
    D, z = collapse_observations([3, 1, 3], [1.0, 2.0, 5.0])
    assert D.tolist() == [1, 3]
    assert z.tolist() == [2.0, 5.0]


def test_summary_byte_round_trip(model, rng):
    sup = SupportSet.from_model(model, [2, 3, 7])
    s = local_summary(model, sup, [0, 10, 11], rng.normal(size=3), sensor=6)
    data = s.to_bytes()
    assert len(data) == 8 + 8 * 3 + 8 * 9
    back = LocalSummary.from_bytes(data, sup.key())
    assert back.sensor == 6
    np.testing.assert_array_equal(back.z, s.z)
    np.testing.assert_array_equal(back.cov, s.cov)


# -- global summary ---------------------------------------------------------------


def test_global_summary_of_no_data_is_prior(model):
    sup = SupportSet.from_model(model, [0, 1, 2])
    g = global_summary(sup, [local_summary(model, sup, [], [], k) for k in range(3)])
    np.testing.assert_array_equal(g.z, np.zeros(3))
    np.testing.assert_array_equal(g.cov, sup.cov)
    assert g.n_sensors == 3


def test_global_summary_adds_local_terms():
    sup = SupportSet(np.array([0]), np.array([[2.0]]), np.array([[np.sqrt(2.0)]]))
    parts = [LocalSummary(k, np.array([v]), np.array([[c]])) for k, (v, c) in enumerate([(1, 0.5), (2, 0.25)])]
    g = global_summary(sup, parts)
    assert g.z.tolist() == [3.0]
    assert g.cov.tolist() == [[2.75]]


def test_global_summary_bit_identical_under_arrival_order(model, rng):
    sup = SupportSet.from_model(model, [0, 6, 13, 20])
    blocks = [rng.choice(24, size=5, replace=False) for _ in range(5)]
    parts = summaries_for(model, sup, blocks, rng.normal(size=25))
    a = global_summary(sup, parts)
    for _ in range(5):
        b = global_summary(sup, [parts[i] for i in rng.permutation(5)])
        assert a.z.tobytes() == b.z.tobytes()
        assert a.cov.tobytes() == b.cov.tobytes()


def test_global_summary_rejects_foreign_support(model):
    sup = SupportSet.from_model(model, [0, 1])
    other = SupportSet.from_model(model, [0, 2])
    with pytest.raises(ValueError, match="different support"):
        global_summary(sup, [local_summary(model, other, [5], [1.0])])
    with pytest.raises(ValueError, match="expected 2"):
        global_summary(sup, [LocalSummary(0, np.zeros(3), np.zeros((3, 3)))])


# -- prediction ---------------------------------------------------------------------


def test_prediction_without_data_is_prior(model):
    sup = SupportSet.from_model(model, [3, 4])
    g = global_summary(sup, [])
    p = predict_decentralized(model, sup, g, [7, 9])
    np.testing.assert_allclose(p.mean, model.mean([7, 9]), rtol=1e-14)
    np.testing.assert_allclose(p.cov, model.gram([7, 9]), rtol=1e-12)


def test_target_uncorrelated_with_support_keeps_prior():
    m = line_model([0.0, 0.3, 500.0], mean=2.0)
    sup = SupportSet.from_model(m, [0])
    g = global_summary(sup, [local_summary(m, sup, [1], [9.0])])
    p = predict_decentralized(m, sup, g, [2])
    assert p.mean[0] == 2.0
    assert p.cov[0, 0] == pytest.approx(1.1, rel=1e-14)


def test_full_and_marginal_prediction_agree(model, rng):
    sup = SupportSet.from_model(model, [0, 8, 16])
    g = global_summary(sup, [local_summary(model, sup, [1, 2, 3], rng.normal(size=3))])
    full = predict_decentralized(model, sup, g, [5, 6, 7])
    marg = predict_decentralized(model, sup, g, [5, 6, 7], full_cov=False)
    np.testing.assert_allclose(marg.variance, np.diag(full.cov), rtol=1e-12)


def test_more_data_never_raises_predictive_entropy(model, rng):
    sup = SupportSet.from_model(model, [0, 7, 14, 21])
    Y = [2, 9, 16]
    prev = entropy(predict_decentralized(model, sup, global_summary(sup, []), Y))
    parts = []
    for k in range(4):
        parts.append(local_summary(model, sup, rng.choice(24, 3, replace=False), rng.normal(size=3), k))
        cur = entropy(predict_decentralized(model, sup, global_summary(sup, parts), Y))
        assert cur <= prev + 1e-9
        prev = cur


# -- oracle and equivalence ---------------------------------------------------------


def test_oracle_single_block_transcription(rng):
    _, m = random_model(rng, 15)
    U, D, Y = np.array([0, 4, 9]), np.array([1, 2, 5, 11]), np.array([3, 14])
    z = rng.normal(size=4)
    S_UU = m.gram(U)
    Q = lambda a, b: m.cross(a, U) @ np.linalg.inv(S_UU) @ m.cross(U, b)  # noqa: E731
    # one block: the block-diagonal correction restores the exact D covariance
    M = Q(D, D) + (m.gram(D) - Q(D, D))
    mean = m.mean(Y) + Q(Y, D) @ np.linalg.inv(M) @ (z - m.mean(D))
    cov = m.gram(Y) - Q(Y, D) @ np.linalg.inv(M) @ Q(D, Y)
    p = pitc_oracle(m, U, [D], z, Y)
    np.testing.assert_allclose(p.mean, mean, rtol=1e-9)
    np.testing.assert_allclose(p.cov, cov, rtol=1e-9, atol=1e-12)


def test_refining_the_partition_changes_prediction(rng):
    _, m = random_model(rng, 20, length=(1.5, 2.0))
    U = [0, 10]
    D = np.array([2, 3, 4, 5, 6, 7])
    z = rng.normal(size=6)
    a = pitc_oracle(m, U, [D], z, [15])
    b = pitc_oracle(m, U, [D[:3], D[3:]], z, [15])
    assert abs(a.mean[0] - b.mean[0]) > 1e-8


def test_equivalence_with_empty_data_is_exact(model):
    r = check_equivalence(model, [0, 1], [[], []], [], [4, 5])
    assert r.deviation == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_decentralized_route_equals_oracle(seed):
    inst = random_fusion_instance(np.random.default_rng(seed))
    r = check_equivalence(inst.model, inst.U, inst.partition, inst.z, inst.Y)
    assert r.passed, r


def test_observations_inside_the_support(model, rng):
    # D overlapping U is legal: the conditional covariance reduces to noise
    U = [0, 1, 2, 3]
    r = check_equivalence(model, U, [[0, 1, 10], [2, 11]], rng.normal(size=5), [5, 6])
    assert r.passed


def test_near_duplicate_support_reports_jitter():
    m = line_model([0.0, 1e-9, 3.0, 4.0], noise=0.0)
    r = check_equivalence(m, [0, 1], [[2], [3]], [1.0, -1.0], [2, 3], tol=1e-4)
    assert r.jitter_used
    assert r.max_jitter > 0


def test_mismatched_measurement_count(model):
    with pytest.raises(ValueError, match="measurements"):
        pitc_oracle(model, [0], [[1, 2]], [1.0], [3])
    with pytest.raises(ValueError, match="measurements"):
        collapse_observations([1, 2], [1.0])
    with pytest.raises(ValueError, match="empty"):
        SupportSet.from_model(model, [])
