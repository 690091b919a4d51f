import numpy as np
import pytest

from tsic.model import (
    DelayRecord,
    Image,
    Service,
    check_bandwidth,
    check_compute,
    check_storage,
)

from conftest import make_node, make_task


def test_bandwidth_boundary_equality_fits():
    node = make_node(bw=10.0)
    assert check_bandwidth(node, make_task(bw=10.0))


def test_bandwidth_exhausted():
    node = make_node(bw=10.0)
    node.bandwidth_available = 0.0
    assert not check_bandwidth(node, make_task(bw=0.1))


def test_compute_needs_both():
    node = make_node(cpu=4.0, mem=100.0)
    assert not check_compute(node, make_task(cpu=1.0, mem=150.0))
    assert not check_compute(node, make_task(cpu=5.0, mem=50.0))
    assert check_compute(node, make_task(cpu=4.0, mem=100.0))


def test_storage_examples():
    node = make_node(storage=8192.0)
    assert check_storage(node, make_task(data=100.0))
    node = make_node(storage=300.0)
    assert not check_storage(node, make_task(data=100.0), Image(0, 253.07))
    assert check_storage(node, make_task(data=0.0))


def test_admission_log_never_negative(rng):
    # admit only what the checks allow, release in random order, re-sum the log
    node = make_node(cpu=4.0, mem=1024.0, bw=20.0, storage=5000.0)
    live = []
    for i in range(1000):
        if live and rng.random() < 0.45:
            node.release(live.pop(int(rng.integers(len(live)))))
        t = make_task(i, cpu=rng.uniform(0.1, 2), mem=rng.uniform(10, 300),
                      bw=rng.uniform(1, 8), data=rng.uniform(0, 50))
        if check_bandwidth(node, t) and check_compute(node, t) and check_storage(node, t):
            node.admit(t)
            live.append(t)
        assert node.cpu_available >= -1e-9
        assert node.mem_available >= -1e-9
        assert node.bandwidth_available >= -1e-9
        assert node.storage_available >= -1e-9
        assert node.cpu_available == pytest.approx(4.0 - sum(x.cpu_demand for x in live), abs=1e-9)
        assert node.bandwidth_available == pytest.approx(20.0 - sum(x.bandwidth_demand for x in live), abs=1e-9)


def test_image_toggle_moves_storage_by_size():
    node = make_node(storage=1000.0)
    img = Image(2, 253.07)
    node.add_image(img)
    assert node.storage_available == pytest.approx(1000.0 - 253.07)
    assert node.cached_images.tolist() == [0, 0, 1, 0, 0, 0]
    node.remove_image(img)
    assert node.storage_available == pytest.approx(1000.0)
    with pytest.raises(ValueError):
        node.remove_image(img)


def test_add_image_that_does_not_fit():
    node = make_node(storage=200.0)
    with pytest.raises(ValueError):
        node.add_image(Image(0, 253.07))


def test_delay_record_additive():
    d = DelayRecord(0.1, 0.2, 0.3)
    assert d.total_s == 0.1 + 0.2 + 0.3
    with pytest.raises(ValueError):
        DelayRecord(-1.0, 0.0, 0.0)


@pytest.mark.parametrize("kw", [dict(cpu=0.0), dict(mem=-1.0), dict(bw=0.0), dict(data=-0.5)])
def test_task_validation(kw):
    with pytest.raises(ValueError):
        make_task(**kw)


def test_image_and_service_validation():
    with pytest.raises(ValueError):
        Image(0, 0.0)
    with pytest.raises(ValueError):
        Service(0, 0, -0.1, 1.0)
    with pytest.raises(ValueError):
        Service(0, 0, 0.5, 0.0)
