import numpy as np
import pytest
from hypothesis import settings

from mvgrasp import dataset as D
from mvgrasp.synthetic import write_synthetic_cornell

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# fixture crops: no rotation or zoom, 0.3 px per source px, centered on the grasps
FIXTURE_POLICY = D.AugmentPolicy(48, (0.0, 0.0), (1.0, 1.0), 0.3, 0.0, "grasps")
FIXTURE_W_MAX_PX = 48.0

_criteria = {}


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        terminalreporter.write_line(_criteria[n])


@pytest.fixture
def criterion():
    """Record one acceptance line; printed again in the terminal summary."""

    def record(n, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {title}" + (f" ({detail})" if detail else "")
        _criteria[n] = line
        print(line)
        return ok

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cornell_root(tmp_path_factory):
    return write_synthetic_cornell(tmp_path_factory.mktemp("cornell"), 8, seed=3)


@pytest.fixture(scope="session")
def cornell_samples(cornell_root):
    return D.load_cornell(cornell_root)


@pytest.fixture(scope="session")
def fixture8(cornell_samples):
    return D.augment_dataset(cornell_samples, 1, FIXTURE_POLICY, seed=3)


@pytest.fixture(scope="session")
def box_scene():
    """A tilted box cloud and a network memorized on its selected view."""
    from mvgrasp.geometry import PointCloud, compute_reference_frame, transform_to_frame
    from mvgrasp.network import build_network
    from mvgrasp.projection import GridSpec, generate_views
    from mvgrasp.synthetic import box_cloud, random_rotation, view_sample
    from mvgrasp.train import TrainConfig, train
    from mvgrasp.viewselect import select_view

    rng = np.random.default_rng(0)
    pts = box_cloud(n=3000, rng=rng) @ random_rotation(rng).T + [0.3, 0.1, 0.7]
    cloud = PointCloud(pts)
    grid = GridSpec(48, 0.005)
    views = generate_views(transform_to_frame(cloud, compute_reference_frame(cloud)), grid)
    view = next(v for v in views if v.axis == select_view(views).selected)
    x, y = D.training_arrays([view_sample(view)], w_max_px=grid.l)
    net = build_network(seed=7)
    train(net, x, y, TrainConfig(epochs=150, batch_size=1, seed=7))
    return {"cloud": cloud, "grid": grid, "net": net, "view": view}
