"""
Toric code Hamiltonian in a longitudinal field,

    H = -J_P sum_P prod_{i in P} s^z_i - J_S sum_S prod_{i in S} s^x_i - h sum_i s^z_i,

and the observables measured on variational states. Every observable has a
local estimator (used by the Monte Carlo sampler) and an exact expectation
on a normalized state vector (used by the enumeration oracle).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import exact
from .exceptions import ConfigurationError, LatticeError, ZeroAmplitudeError
from .lattice import Lattice, LoopKind, LoopPath, straight_dual_loops
from .rbm import RbmParams, RbmWaveFunction, check_config


@dataclass(frozen=True)
class ToricParams:
    j_p: float = 1.0
    j_s: float = 1.0
    h: float = 0.0

    def __post_init__(self):
        for name in ('j_p', 'j_s', 'h'):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite")


class Observable:
    """Base class: ``local_values`` on sampled configurations, ``exact`` on a state vector."""

    name = 'observable'

    def local_values(self, wf: RbmWaveFunction, configs: np.ndarray, thetas: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def exact(self, lat: Lattice, vector: np.ndarray) -> float:
        raise NotImplementedError


class Identity(Observable):
    name = 'identity'

    def local_values(self, wf, configs, thetas):
        return np.ones(len(configs))

    def exact(self, lat, vector):
        return float(np.dot(vector, vector))


class Energy(Observable):
    name = 'energy'

    def __init__(self, tp: ToricParams):
        self.tp = tp

    def local_values(self, wf, configs, thetas):
        lat = wf.lat
        plaquettes = np.prod(configs[:, lat.plaquette_bonds], axis=2).sum(axis=1)
        field = configs.sum(axis=1)
        values = -self.tp.j_p * plaquettes - self.tp.h * field
        if self.tp.j_s:
            stars = sum(wf.flip_ratios(configs, thetas, bonds) for bonds in lat.star_bonds)
            values = values - self.tp.j_s * stars
        return values

    def exact(self, lat, vector):
        table = exact.spin_table(lat.n_spins)
        diagonal = (
            -self.tp.j_p * np.prod(table[:, lat.plaquette_bonds], axis=2, dtype=np.int8).sum(axis=1)
            - self.tp.h * table.sum(axis=1, dtype=np.int64)
        )
        value = exact.diagonal_expectation(vector, diagonal)
        if self.tp.j_s:
            value -= self.tp.j_s * sum(exact.flip_expectation(vector, bonds) for bonds in lat.star_bonds)
        return value


class WilsonLoop(Observable):
    """Product of s^x over the bonds crossed by a dual loop."""

    name = 'wilson'

    def __init__(self, loop: LoopPath):
        if loop.kind is not LoopKind.DUAL:
            raise LatticeError("Wilson loops live on the dual lattice")
        self.loop = loop

    def local_values(self, wf, configs, thetas):
        return wf.flip_ratios(configs, thetas, self.loop.bonds)

    def exact(self, lat, vector):
        return exact.flip_expectation(vector, self.loop.bonds)


class ZLoop(Observable):
    """Product of s^z along a direct-lattice loop (diagonal string operator)."""

    name = 'z_loop'

    def __init__(self, loop: LoopPath):
        if loop.kind is not LoopKind.DIRECT:
            raise LatticeError("z strings run along the direct lattice")
        self.loop = loop

    def local_values(self, wf, configs, thetas):
        return np.prod(configs[:, list(self.loop.bonds)], axis=1).astype(np.float64)

    def exact(self, lat, vector):
        table = exact.spin_table(lat.n_spins)
        return exact.diagonal_expectation(vector, np.prod(table[:, list(self.loop.bonds)], axis=1))


class SzTotal(Observable):
    name = 'sz_total'

    def local_values(self, wf, configs, thetas):
        return configs.sum(axis=1).astype(np.float64)

    def exact(self, lat, vector):
        table = exact.spin_table(lat.n_spins)
        return exact.diagonal_expectation(vector, table.sum(axis=1, dtype=np.int64))


class PlaquetteStabilizer(Observable):
    name = 'plaquette'

    def __init__(self, cell: int):
        self.cell = cell

    def _bonds(self, lat):
        if not lat.is_plaquette(self.cell):
            raise LatticeError(f"cell {self.cell} is not a plaquette")
        return list(lat.cell_bonds[self.cell])

    def local_values(self, wf, configs, thetas):
        return np.prod(configs[:, self._bonds(wf.lat)], axis=1).astype(np.float64)

    def exact(self, lat, vector):
        table = exact.spin_table(lat.n_spins)
        return exact.diagonal_expectation(vector, np.prod(table[:, self._bonds(lat)], axis=1))


class StarStabilizer(Observable):
    name = 'star'

    def __init__(self, cell: int):
        self.cell = cell

    def _bonds(self, lat):
        if lat.is_plaquette(self.cell):
            raise LatticeError(f"cell {self.cell} is not a star")
        return lat.cell_bonds[self.cell]

    def local_values(self, wf, configs, thetas):
        return wf.flip_ratios(configs, thetas, self._bonds(wf.lat))

    def exact(self, lat, vector):
        return exact.flip_expectation(vector, self._bonds(lat))


def _single(lat: Lattice, params: RbmParams, config):
    config = check_config(lat, config)[None, :]
    wf = RbmWaveFunction(lat, params)
    thetas = wf.thetas(config)
    log_abs, _ = wf.log_psi(config, thetas)
    if np.isneginf(log_abs[0]):
        raise ZeroAmplitudeError("local estimators are undefined where the amplitude vanishes")
    return wf, config, thetas


def local_energy(lat: Lattice, params: RbmParams, tp: ToricParams, config) -> float:
    wf, config, thetas = _single(lat, params, config)
    return float(Energy(tp).local_values(wf, config, thetas)[0])


def wilson_loop_value(lat: Lattice, params: RbmParams, config, loop: LoopPath) -> float:
    observable = WilsonLoop(loop)
    wf, config, thetas = _single(lat, params, config)
    return float(observable.local_values(wf, config, thetas)[0])


def wilson_observables(lat: Lattice) -> tuple[list[WilsonLoop], list[WilsonLoop]]:
    return (
        [WilsonLoop(loop) for loop in straight_dual_loops(lat, 'x')],
        [WilsonLoop(loop) for loop in straight_dual_loops(lat, 'y')],
    )


def averaged_wilson(lat: Lattice, params: RbmParams, sampler=None) -> tuple[float, float]:
    """
    Mean of the straight x Wilson loops over rows and of the y loops over
    columns. Exact enumeration when ``sampler`` is None, otherwise Monte Carlo
    with the given ``SamplerConfig`` on a single shared sample set.
    """
    x_loops, y_loops = wilson_observables(lat)
    if sampler is None:
        vector = exact.state_vector(lat, params)
        values = [o.exact(lat, vector) for o in x_loops + y_loops]
    else:
        from .vmc import estimate_many

        values = [e.mean for e in estimate_many(lat, params, sampler, x_loops + y_loops)]
    return float(np.mean(values[: len(x_loops)])), float(np.mean(values[len(x_loops):]))


def exact_expectation(lat: Lattice, params: RbmParams, observable: Observable) -> float:
    return observable.exact(lat, exact.state_vector(lat, params))
