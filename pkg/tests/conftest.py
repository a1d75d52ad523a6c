import pytest

from vodcache.catalog import Catalog, ServerProfile, SizeDistSpec, VideoMeta, generate_catalog
from vodcache.config import load_config
from vodcache.policies import POLICY_KINDS, PolicyKind
from vodcache.workload import ArrivalModel, SelectionModel, SessionModel, generate_trace

STACK_KINDS = [PolicyKind.LRU, PolicyKind.LFU, PolicyKind.FIFO]


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance runs")


def get_small_catalog():
    servers = (ServerProfile(0, 0.5, 1_000_000.0), ServerProfile(1, 0.1, 4_000_000.0))
    videos = tuple(VideoMeta(video_id=i, size_bytes=100 * i, duration_s=float(10 * i), server_id=i % 2)
                   for i in range(1, 21))
    return Catalog(videos=videos, servers=servers)


def get_generated_catalog():
    return generate_catalog(50, 3, size_dist=SizeDistSpec('uniform', 1_000, 10_000), seed=11)


def get_small_trace(catalog, num_requests=2_000, seed=5, session=True):
    selection = SelectionModel.for_catalog(catalog, alpha=0.77)
    return generate_trace(catalog, ArrivalModel(lam=15.0, n_max=27), selection, SessionModel(enabled=session),
                          num_buckets=0, seed=seed, num_requests=num_requests)


def get_small_config(tmp_path=None, **overrides):
    """The standard preset scaled down to a catalog of 50 videos and 3000 requests."""
    base = {
        'catalog.num_videos': 50,
        'catalog.num_servers': 3,
        'catalog.size_dist': 'uniform',
        'catalog.size_low': 1_000,
        'catalog.size_high': 10_000,
        'workload.num_requests': 3_000,
        'cache.capacity_fraction': 0.2,
    }
    if tmp_path is not None:
        base['output.directory'] = str(tmp_path)
    base.update(overrides)
    return load_config(overrides=base)


def pytest_generate_tests(metafunc):
    if "policy_kind" in metafunc.fixturenames:
        metafunc.parametrize("policy_kind", [kind.value for kind in POLICY_KINDS], indirect=True)
    if "stack_kind" in metafunc.fixturenames:
        metafunc.parametrize("stack_kind", [kind.value for kind in STACK_KINDS], indirect=True)


@pytest.fixture
def policy_kind(request):
    return PolicyKind.parse(request.param)


@pytest.fixture
def stack_kind(request):
    return PolicyKind.parse(request.param)


@pytest.fixture
def small_catalog():
    return get_small_catalog()


@pytest.fixture
def generated_catalog():
    return get_generated_catalog()


@pytest.fixture
def small_trace(generated_catalog):
    return get_small_trace(generated_catalog)


@pytest.fixture
def small_config(tmp_path):
    return get_small_config(tmp_path)
