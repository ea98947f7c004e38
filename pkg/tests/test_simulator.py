import io
from dataclasses import astuple, replace

import numpy as np
import pytest

from roadgp.generate import random_network, ring_network
from roadgp.gp import GpModel, posterior_full
from roadgp.network import KernelHyper, mds_embed, shortest_path_distances
from roadgp.simulator import (
    CSV_COLUMNS,
    TIMING_COLUMNS,
    Bus,
    Message,
    Phenomenon,
    World,
    broadcast,
    load_phenomenon,
    observe,
    read_metrics,
    rmse,
    run_round,
    sample_phenomenon,
    save_phenomenon,
    simulate,
    write_metrics,
)


def setup(net=None, signal=4.0, noise=0.25):
    net = net if net is not None else random_network(24, seed=1)
    model = GpModel(mds_embed(shortest_path_distances(net)), KernelHyper(signal, 1.5, noise), 0.0)
    return net, model, sample_phenomenon(model, 3, mean=10.0, std=2.0)


@pytest.fixture(scope="module")
def small():
    return setup()


def world(small, alg="d2fas", K=2, L=2, seed=0, eps=0.1, u=6, drop=0.0):
    net, model, ph = small
    return World(net, model, ph, alg, K, L, u, eps, seed, drop_probability=drop)


# -- phenomenon and measurements ------------------------------------------------------


def test_phenomenon_is_reproducible(small):
    _, model, _ = small
    a = sample_phenomenon(model, 7)
    b = sample_phenomenon(model, 7)
    c = sample_phenomenon(model, 8)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_phenomenon_moment_matching(small):
    _, model, _ = small
    ph = sample_phenomenon(model, 1, mean=48.8, std=20.5)
    assert ph.values.mean() == pytest.approx(48.8, rel=1e-12)
    assert ph.values.std() == pytest.approx(20.5, rel=1e-12)


def test_vanishing_signal_gives_a_flat_field():
    net = random_network(10, seed=2)
    model = GpModel(mds_embed(shortest_path_distances(net)), KernelHyper(1e-14, 1.0), 5.0)
    ph = sample_phenomenon(model, 0)
    np.testing.assert_allclose(ph.values, 5.0, atol=1e-5)


def test_noise_free_observation_is_the_truth(small, rng):
    _, _, ph = small
    np.testing.assert_array_equal(observe(ph, [0, 3, 5], 0.0, rng), ph.values[[0, 3, 5]])


def test_observation_noise_has_the_stated_variance(small, rng):
    _, _, ph = small
    a = observe(ph, [2] * 20000, 0.7, rng)
    b = observe(ph, [2] * 20000, 0.7, rng)
    assert not np.array_equal(a, b)
    assert np.var(a - ph.values[2]) == pytest.approx(0.7, rel=0.05)


def test_rmse_examples():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(3.5355339, abs=1e-7)


def test_phenomenon_file_round_trip(small, tmp_path):
    net, _, ph = small
    p = tmp_path / "ph.csv"
    save_phenomenon(ph, net, p)
    back = load_phenomenon(p, net)
    np.testing.assert_array_equal(back.values, ph.values)
    p.write_text("# header\n0,1.5\n")
    with pytest.raises(ValueError, match="misses"):
        load_phenomenon(p, net)
    p.write_text("999,1.5\n")
    with pytest.raises(KeyError):
        load_phenomenon(p, net)


# -- messaging -----------------------------------------------------------------------


def test_bus_counts_bytes_and_delivers_to_others():
    bus = Bus(3)
    broadcast(bus, Message(1, "x", b"abcd"))
    assert bus.bytes_sent == 4 and bus.messages_sent == 1
    assert [m.payload for m in bus.collect(0, "x")] == [b"abcd"]
    assert bus.collect(1, "x") == []
    assert bus.collect(0, "x") == []
    assert len(bus.collect(2, "x")) == 1


def test_bus_drops_deliveries_independently():
    bus = Bus(11, drop_probability=0.5, rng=0)
    for _ in range(200):
        bus.broadcast(0, "x", b"1")
    got = [len(bus.collect(k, "x")) for k in range(1, 11)]
    assert bus.bytes_sent == 200
    assert 0.4 < np.mean(got) / 200 < 0.6
    with pytest.raises(ValueError):
        Bus(2, drop_probability=1.0)


def test_summary_traffic_is_quadratic_in_support_size(small):
    sizes = {}
    for u in (4, 8, 16):
        w = world(small, K=3, u=u)
        sizes[u] = w.step(move=False).bytes_broadcast
        assert sizes[u] == 3 * 12 + 3 * (8 + 8 * u + 8 * u * u)
    slope = np.log(sizes[16] / sizes[8]) / np.log(2)
    assert 1.8 < slope <= 2.0


def test_raw_data_traffic_grows_with_data(small):
    w = world(small, alg="full-gp-centralized", K=2, L=2)
    first = w.step().bytes_broadcast
    w2 = world(small, alg="full-gp-centralized", K=2, L=2)
    rows = simulate(w2, 12)
    data_bytes = [r.bytes_broadcast for r in rows]
    assert data_bytes[0] == first
    assert data_bytes[-1] > data_bytes[0]


# -- rounds ----------------------------------------------------------------------------


def test_ring_single_sensor_observes_one_new_segment_per_round():
    net, model, ph = setup(ring_network(12, seed=0))
    w = World(net, model, ph, "d2fas", 1, 1, 4, 0.1, 0)
    counts = [r.n_observed for r in simulate(w, 8)]
    assert counts == list(range(1, 9))
    assert w.fallbacks == 0


def test_observed_set_growth_is_bounded(small):
    w = world(small, K=3, L=2, seed=4)
    prev = w.n_observed
    for _ in range(6):
        run_round(w)
        assert prev <= w.n_observed <= prev + 3 * 2
        if w.fallbacks == 0:
            assert w.n_observed == prev + sum(len(v) for v in w.last_plan.values())
        prev = w.n_observed


def test_budget_and_final_row(small):
    assert simulate(world(small), 0) == []
    rows = simulate(world(small, K=2, L=2), 9)
    assert rows[-1].n_observed >= 9
    assert all(r.n_observed < 9 for r in rows[:-1])
    assert rows[-1].sensing_seconds == 0.0 and rows[-1].kappa == 0
    assert [r.round for r in rows] == list(range(len(rows)))


def test_saturation_stops_the_run():
    net, model, ph = setup(ring_network(6, seed=0))
    rows = simulate(World(net, model, ph, "d2fas", 2, 2, 3, 0.1, 0), 100)
    assert rows[-1].n_observed == 6
    assert len(rows) < 10


def test_runs_are_deterministic_apart_from_timing(small):
    def strip(rows):
        return [astuple(replace(r, fusion_seconds=0.0, sensing_seconds=0.0)) for r in rows]

    for alg in ("d2fas", "full-gp-centralized", "sod-centralized"):
        a = simulate(world(small, alg, seed=5), 12)
        b = simulate(world(small, alg, seed=5), 12)
        assert strip(a) == strip(b)


def test_full_gp_prediction_matches_direct_posterior(small):
    net, _, ph = small
    w = world(small, alg="full-gp-centralized", K=2, L=1, seed=2)
    for _ in range(3):
        run_round(w)
    model, pred, _, (D, z) = w.fuse()
    assert model.mean([0])[0] == pytest.approx(np.mean(z))
    direct = posterior_full(w.prior.with_mean(np.mean(z)), D, z, np.arange(len(net)),
                            full_cov=False, allow_overlap=True)
    np.testing.assert_allclose(pred, direct.mean, rtol=1e-12)


def test_large_eps_plans_every_sensor_alone(small):
    rows = simulate(world(small, K=3, eps=1e6, seed=1), 12)
    assert all(r.kappa == 1 for r in rows[:-1])


def test_lossy_bus_still_produces_predictions(small):
    rows = simulate(world(small, K=3, drop=0.3, seed=3), 10)
    assert all(np.isfinite(r.rmse) for r in rows)


def test_world_argument_checks(small):
    net, model, ph = small
    with pytest.raises(ValueError, match="valid"):
        World(net, model, ph, "magic", 1, 1, 4, 0.1, 0)
    with pytest.raises(ValueError, match="fit"):
        World(net, model, ph, "d2fas", len(net) + 1, 1, 4, 0.1, 0)


def test_metrics_csv_round_trip(small):
    rows = simulate(world(small), 6)
    buf = io.StringIO()
    write_metrics(rows, buf)
    header = buf.getvalue().splitlines()[0].split(",")
    assert tuple(header) == CSV_COLUMNS
    assert set(TIMING_COLUMNS) <= set(CSV_COLUMNS)
    buf.seek(0)
    assert read_metrics(buf) == rows


def test_phenomenon_length(small):
    _, _, ph = small
    assert len(ph) == 24 and isinstance(ph, Phenomenon)
