import numpy as np
import pytest

from tsic.model import Image, NodeState, Task


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_node(node_id=0, num_images=6, storage=1000.0, cpu=4.0, mem=1024.0, bw=20.0,
              cloud_bw=30.0, location=(0.5, 0.5)):
    return NodeState(id=node_id, location=location, cpu_capacity=cpu, mem_capacity=mem,
                     storage_capacity=storage, bandwidth_capacity=bw, cloud_bandwidth=cloud_bw,
                     num_images=num_images)


def make_task(task_id=0, service_id=0, data=1.0, cpu=1.0, mem=100.0, bw=5.0, slot=0,
              location=(0.5, 0.5)):
    return Task(id=task_id, service_id=service_id, data_size_mb=data, location=location,
                cpu_demand=cpu, mem_demand=mem, bandwidth_demand=bw, arrival_slot=slot)


def images_of(sizes):
    return [Image(i, s) for i, s in enumerate(sizes)]


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
