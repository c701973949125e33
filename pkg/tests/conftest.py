import numpy as np
import pytest

import rcm
from rcm import rng


@pytest.fixture(scope="session")
def env_const():
    return rcm.generate_env(rcm.spec_constant(1.0, 2, 3))


@pytest.fixture(scope="session")
def env_elliptic16():
    return rcm.generate_env(rcm.spec_uniform_elliptic(0.5, 2.0, 2, 16, seed=3))


@pytest.fixture(scope="session")
def env_layered64():
    return rcm.generate_env(rcm.spec_layered(0, (1.0, 4.0), 2, 64, seed=0))


def random_vertex_field(lat, seed, stream=0):
    key = rng.stream_key(seed, stream)
    return rng.normals(key, np.arange(lat.num_vertices, dtype=np.uint64))


def random_edge_field(lat, seed, stream=0):
    key = rng.stream_key(seed, 1000 + stream)
    flat = rng.normals(key, np.arange(lat.num_edges, dtype=np.uint64))
    return flat.reshape(lat.d, lat.num_vertices)
