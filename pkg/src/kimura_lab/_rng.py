"""Counter-based per-path random streams.

Every path owns a Philox stream keyed by (master_seed, domain, path index)
and consumed in step order, so results are independent of how paths are
grouped into blocks or spread over workers, and a path's increments over a
short horizon are a prefix of its increments over a longer one.
"""

from __future__ import annotations

import numpy as np

# stream domains keep deliberately distinct ensembles independent
DOMAIN_PRIMARY = 0
DOMAIN_RESTART = 1
DOMAIN_SECONDARY = 2

_PATH_BITS = 56


def _key(master_seed: int, path_index: int, domain: int) -> np.ndarray:
    if not 0 <= path_index < (1 << _PATH_BITS):
        raise ValueError("path index out of range")
    word1 = (int(domain) << _PATH_BITS) | int(path_index)
    return np.array([int(master_seed) & (2**64 - 1), word1], dtype=np.uint64)


def path_generator(master_seed: int, path_index: int, domain: int = DOMAIN_PRIMARY) -> np.random.Generator:
    """Fresh generator positioned at the start of one path's stream."""
    return np.random.Generator(np.random.Philox(key=_key(master_seed, path_index, domain)))


def block_normals(
    master_seed: int,
    path_start: int,
    n_paths: int,
    n_steps: int,
    dim: int,
    domain: int = DOMAIN_PRIMARY,
) -> np.ndarray:
    """Standard-normal draws of shape (n_paths, n_steps, dim).

    Row p holds the first n_steps*dim draws of the stream of path
    path_start + p. Re-keys a single Philox in place, which is ~15x
    faster than constructing a generator per path.
    """
    out = np.empty((n_paths, n_steps, dim))
    if out.size == 0:
        return out
    bitgen = np.random.Philox(key=_key(master_seed, path_start, domain))
    gen = np.random.Generator(bitgen)
    state = bitgen.state
    key = state["state"]["key"]
    counter = state["state"]["counter"]
    for p in range(n_paths):
        fresh = _key(master_seed, path_start + p, domain)
        key[0] = fresh[0]
        key[1] = fresh[1]
        counter[:] = 0
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        bitgen.state = state
        gen.standard_normal(out=out[p].reshape(-1))
    return out
