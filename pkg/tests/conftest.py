import hypothesis
import numpy as np
import pytest

from supremum_area.numerics import QuadratureConfig, RandomStream

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.load_profile("ci")


class ScriptedStream:
    """Stand-in for RandomStream that replays fixed normals and uniforms."""

    def __init__(self, normals=(), uniforms=(), seed=0):
        self.normals = list(normals)
        self.uniforms = list(uniforms)
        self.seed = seed
        self.counter = 0

    def _take(self, pool, size):
        n = 1 if size is None else int(np.prod(size))
        if len(pool) < n:
            raise AssertionError("scripted stream exhausted: wanted {}, have {}".format(n, len(pool)))
        values = [pool.pop(0) for _ in range(n)]
        self.counter += n
        if size is None:
            return float(values[0])
        return np.array(values, dtype=float).reshape(size)

    def standard_normal(self, size=None):
        return self._take(self.normals, size)

    def uniform(self, size=None):
        return self._take(self.uniforms, size)

    def child(self, partition_id):
        return self


@pytest.fixture
def quad():
    return QuadratureConfig()


@pytest.fixture
def stream():
    return RandomStream(20240601)


@pytest.fixture
def scripted():
    return ScriptedStream
