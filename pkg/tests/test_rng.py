import numpy as np

from kimura_lab._rng import DOMAIN_RESTART, block_normals, path_generator


def test_rekeyed_blocks_match_fresh_generators():
    out = block_normals(99, path_start=5, n_paths=8, n_steps=10, dim=2)
    for p in range(8):
        fresh = path_generator(99, 5 + p).standard_normal((10, 2))
        assert np.array_equal(out[p], fresh)


def test_block_partition_invariance():
    whole = block_normals(7, 0, 20, 6, 1)
    left = block_normals(7, 0, 12, 6, 1)
    right = block_normals(7, 12, 8, 6, 1)
    assert np.array_equal(whole, np.concatenate([left, right], axis=0))


def test_step_prefix_property():
    long = block_normals(3, 0, 4, 50, 2)
    short = block_normals(3, 0, 4, 20, 2)
    assert np.array_equal(long[:, :20, :], short)


def test_domains_are_independent_streams():
    a = block_normals(3, 0, 4, 10, 1)
    b = block_normals(3, 0, 4, 10, 1, domain=DOMAIN_RESTART)
    assert not np.allclose(a, b)


def test_seed_sensitivity():
    assert not np.allclose(block_normals(1, 0, 2, 5, 1), block_normals(2, 0, 2, 5, 1))
