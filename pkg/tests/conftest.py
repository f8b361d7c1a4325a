import numpy as np
import pytest

from poolinfer.population import PoolSet, Popularity, zipf_mixture_popularity


def block_pools(universe_size: int, sizes: list[int]) -> PoolSet:
    """Consecutive index blocks starting at 0, remainder neutral."""
    pools, start = [], 0
    for s in sizes:
        pools.append(np.arange(start, start + s))
        start += s
    return PoolSet(universe_size=universe_size, pools=tuple(pools))


@pytest.fixture(scope="session")
def emojis_pools() -> PoolSet:
    return block_pools(2600, [228] * 6)


@pytest.fixture(scope="session")
def emojis_popularity(emojis_pools) -> Popularity:
    return zipf_mixture_popularity(emojis_pools, 1.2)


@pytest.fixture(scope="session")
def web_pools() -> PoolSet:
    return block_pools(2000, [14, 13, 13, 10, 10])


@pytest.fixture
def tiny_pools() -> PoolSet:
    return block_pools(10, [3, 3, 2])
