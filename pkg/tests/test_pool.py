import pytest

from groundtrack.errors import NoHealthyEndpoint
from groundtrack.gateway.pool import EndpointPool, Health
from groundtrack.gateway.transport import FaultScript, MockTransport


def make_pool(n=3, **kwargs):
    return EndpointPool.from_urls([f"mock://e{i}" for i in range(n)], **kwargs)


def test_round_robin_under_equal_load():
    pool = make_pool(3)
    counts = {0: 0, 1: 0, 2: 0}
    for _ in range(6):
        i = pool.route()
        counts[i] += 1  # instant completion: in-flight never observed
    assert counts == {0: 2, 1: 2, 2: 2}


def test_least_loaded_rule():
    pool = make_pool(3)
    for _ in range(2):
        pool.acquire(0)
    pool.acquire(2)
    assert pool.route() == 1


def test_health_gating():
    pool = make_pool(3)
    pool.mark_failure(1)
    pool.acquire(0)
    pool.acquire(2)
    for _ in range(10):
        assert pool.route() != 1


def test_draining_receives_no_requests():
    pool = make_pool(2)
    pool.drain(0)
    for _ in range(5):
        assert pool.route() == 1


def test_no_healthy_endpoint_raises():
    pool = make_pool(2)
    pool.mark_failure(0)
    pool.mark_failure(1)
    with pytest.raises(NoHealthyEndpoint):
        pool.route()


def test_weighted_routing_prefers_heavier_endpoint():
    pool = EndpointPool.from_urls([("mock://small", 1), ("mock://big", 3)])
    pool.acquire(0)
    pool.acquire(1)
    pool.acquire(1)  # loads: 1/1 vs 2/3
    assert pool.route() == 1


def test_release_balances_and_guards():
    pool = make_pool(1)
    pool.acquire(0)
    pool.release(0)
    assert pool.in_flight_counts() == [0]
    with pytest.raises(RuntimeError):
        pool.release(0)


def test_probe_revives_dead_endpoint():
    pool = make_pool(1)
    transport = MockTransport()
    transport.register("mock://e0", lambda path, payload: {}, FaultScript())
    pool.mark_failure(0)
    assert pool.endpoints[0].health is Health.DEAD
    assert pool.probe(0, transport) is True
    assert pool.endpoints[0].health is Health.HEALTHY


def test_probe_respects_scripted_dead():
    pool = make_pool(1)
    transport = MockTransport()
    transport.register("mock://e0", lambda path, payload: {}, FaultScript(dead=True))
    pool.mark_failure(0)
    assert pool.probe(0, transport) is False
    assert pool.endpoints[0].health is Health.DEAD


def test_fairness_many_requests():
    pool = make_pool(3)
    counts = [0, 0, 0]
    for _ in range(60):
        i = pool.route()
        counts[i] += 1
    assert max(counts) - min(counts) <= 1
