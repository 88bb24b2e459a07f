"""
Full enumeration of the 2^n configuration space. Oracle for every sampled
estimator; only usable up to ``settings.ENUMERATION_MAX_SPINS`` spins.

Configuration index i has spin j down iff bit j of i is set, so flipping a
set of bonds is ``i ^ mask``.
"""
from __future__ import annotations

import logging
from functools import lru_cache

import numpy as np
from django.conf import settings

from .exceptions import EnumerationBudgetError, ZeroNormError
from .lattice import Lattice
from .rbm import RbmParams, RbmWaveFunction

logger = logging.getLogger(__name__)

_CHUNK = 1 << 16


def max_spins() -> int:
    return getattr(settings, 'ENUMERATION_MAX_SPINS', 20)


def check_budget(lat: Lattice) -> None:
    if lat.n_spins > max_spins():
        raise EnumerationBudgetError(
            f"exact enumeration needs 2^{lat.n_spins} amplitudes; limit is 2^{max_spins()}"
        )


@lru_cache(maxsize=4)
def spin_table(n_spins: int) -> np.ndarray:
    """``(2^n, n)`` int8 table of all configurations in index order."""
    index = np.arange(1 << n_spins, dtype=np.int64)[:, None]
    bits = (index >> np.arange(n_spins, dtype=np.int64)) & 1
    table = (1 - 2 * bits).astype(np.int8)
    table.setflags(write=False)
    return table


def flip_mask(bonds) -> int:
    mask = 0
    for bond in bonds:
        mask ^= 1 << int(bond)
    return mask


def config_index(config) -> int:
    config = np.asarray(config)
    return int(np.sum((config < 0).astype(np.int64) << np.arange(config.size, dtype=np.int64)))


def state_vector(lat: Lattice, params: RbmParams) -> np.ndarray:
    """Normalized real amplitudes of all configurations, assembled in log-sign form."""
    check_budget(lat)
    wf = RbmWaveFunction(lat, params)
    table = spin_table(lat.n_spins)
    log_abs = np.empty(len(table))
    sign = np.empty(len(table))
    for start in range(0, len(table), _CHUNK):
        chunk = slice(start, start + _CHUNK)
        log_abs[chunk], sign[chunk] = wf.log_psi(table[chunk])
    if np.all(np.isneginf(log_abs)):
        raise ZeroNormError("every configuration has zero amplitude")
    vector = sign * np.exp(log_abs - np.max(log_abs))
    return vector / np.linalg.norm(vector)


def overlap(lat: Lattice, a: RbmParams, b: RbmParams) -> float:
    """``|<a|b>|^2`` of the normalized states."""
    value = float(np.dot(state_vector(lat, a), state_vector(lat, b)) ** 2)
    return min(max(value, 0.0), 1.0)


def flip_expectation(vector: np.ndarray, bonds) -> float:
    """``<psi| prod_{j in bonds} s^x_j |psi>`` for a normalized state vector."""
    index = np.arange(len(vector))
    return float(np.dot(vector, vector[index ^ flip_mask(bonds)]))


def diagonal_expectation(vector: np.ndarray, values: np.ndarray) -> float:
    """``sum_i |psi_i|^2 values_i`` for a diagonal operator."""
    return float(np.dot(vector * vector, values))
