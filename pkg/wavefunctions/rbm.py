"""
The quasi-local RBM ansatz

    psi(sigma) = prod_X cos(b_X + sum_{j in X} w_Xj sigma_j)

over all plaquettes and stars X, its analytic parameter points, and the
gauge transformations that change the parameters but not the state.

Parameters are stored as an ``(n_cells, 5)`` array: slot 0 is the bias,
slots 1..4 the weights in the cell bond order of :mod:`wavefunctions.lattice`.
The flat index of ``(cell, slot)`` is ``5 * cell + slot``.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np
from typing_extensions import Self

from .exceptions import ConfigurationError, LatticeError, ZeroAmplitudeError
from .lattice import (
    NORTH_BOND_OF_PLAQUETTE,
    SOUTH_BOND_OF_STAR,
    Lattice,
    LoopPath,
    build_lattice,
    straight_direct_loops,
)

# |cos| below this is an exact zero of the amplitude
ZERO_THRESHOLD = 1e-14

N_SLOTS = 5

_BINARY_MAGIC = b'RBMP'


def param_index(cell: int, slot: int) -> int:
    return N_SLOTS * cell + slot


@dataclass(frozen=True, eq=False)
class RbmParams:
    """Immutable parameter set of one variational state."""

    lx: int
    ly: int
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        expected = (2 * self.lx * self.ly, N_SLOTS)
        if values.shape != expected:
            try:
                values = values.reshape(expected)
            except ValueError:
                raise ConfigurationError(
                    f"expected {expected[0] * N_SLOTS} parameters for a {self.lx}x{self.ly} lattice, "
                    f"got shape {values.shape}"
                ) from None
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("parameters must be finite")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @classmethod
    def from_flat(cls, lat: Lattice, flat) -> Self:
        return cls(lat.lx, lat.ly, np.asarray(flat, dtype=np.float64).reshape(lat.n_cells, N_SLOTS))

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    @property
    def biases(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def weights(self) -> np.ndarray:
        return self.values[:, 1:]

    @property
    def n_params(self) -> int:
        return self.values.size

    def replace(self, values) -> Self:
        return type(self)(self.lx, self.ly, values)

    def __eq__(self, other):
        if not isinstance(other, RbmParams):
            return NotImplemented
        return (self.lx, self.ly) == (other.lx, other.ly) and np.array_equal(self.values, other.values)

    __hash__ = None

    def to_bytes(self) -> bytes:
        header = _BINARY_MAGIC + np.array([self.lx, self.ly], dtype='<u4').tobytes()
        return header + self.flat.astype('<f8').tobytes()

    @classmethod
    def from_bytes(cls, payload: bytes) -> Self:
        if payload[:4] != _BINARY_MAGIC:
            raise ConfigurationError("not an RBM parameter blob")
        lx, ly = (int(n) for n in np.frombuffer(payload[4:12], dtype='<u4'))
        return cls(lx, ly, np.frombuffer(payload[12:], dtype='<f8'))

    def to_json(self) -> str:
        return json.dumps({'lx': self.lx, 'ly': self.ly, 'values': self.flat.tolist()})

    @classmethod
    def from_json(cls, text: str) -> Self:
        data = json.loads(text)
        return cls(int(data['lx']), int(data['ly']), data['values'])


@dataclass(frozen=True)
class Amplitude:
    """Unnormalized amplitude in log-sign form."""

    log_abs: float
    sign: int
    is_zero: bool

    @property
    def value(self) -> float:
        return 0.0 if self.is_zero else self.sign * math.exp(self.log_abs)


class RbmWaveFunction:
    """
    Vectorized evaluator for one parameter set. ``configs`` are arrays of
    shape ``(..., n_spins)`` with entries +-1; angles ``theta`` have shape
    ``(..., n_cells)``.
    """

    def __init__(self, lat: Lattice, params: RbmParams):
        if (params.lx, params.ly) != (lat.lx, lat.ly):
            raise LatticeError(
                f"parameters for {params.lx}x{params.ly} used on a {lat.lx}x{lat.ly} lattice"
            )
        self.lat = lat
        self.params = params
        self.bias = params.biases
        matrix = np.zeros((lat.n_cells, lat.n_spins))
        rows = np.repeat(np.arange(lat.n_cells), 4)
        matrix[rows, lat.cell_bonds.reshape(-1)] = params.weights.reshape(-1)
        self.matrix = matrix

    def thetas(self, configs) -> np.ndarray:
        return self.bias + np.asarray(configs, dtype=np.float64) @ self.matrix.T

    def log_psi(self, configs, thetas=None) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(log_abs, sign)``; zero amplitudes get ``-inf`` and sign +1."""
        if thetas is None:
            thetas = self.thetas(configs)
        cosines = np.cos(thetas)
        magnitudes = np.abs(cosines)
        is_zero = np.any(magnitudes < ZERO_THRESHOLD, axis=-1)
        with np.errstate(divide='ignore'):
            log_abs = np.sum(np.log(magnitudes), axis=-1)
        sign = np.where(np.sum(cosines < 0, axis=-1) % 2 == 1, -1, 1)
        log_abs = np.where(is_zero, -np.inf, log_abs)
        sign = np.where(is_zero, 1, sign)
        return log_abs, sign

    def flip_ratios(self, configs, thetas, bonds) -> np.ndarray:
        """
        psi(sigma') / psi(sigma) where sigma' flips ``bonds``, evaluated from the
        cosine factors of the cells touching those bonds only.
        """
        configs = np.atleast_2d(configs)
        thetas = np.atleast_2d(thetas)
        bonds = np.asarray(bonds, dtype=np.intp)
        cells = np.unique(self.lat.bond_cells[bonds])
        old = np.cos(thetas[:, cells])
        if np.any(np.abs(old) < ZERO_THRESHOLD):
            raise ZeroAmplitudeError("flip ratio requested at a zero-amplitude configuration")
        shift = -2.0 * configs[:, bonds] @ self.matrix[np.ix_(cells, bonds)].T
        new = np.cos(thetas[:, cells] + shift)
        new = np.where(np.abs(new) < ZERO_THRESHOLD, 0.0, new)
        return np.prod(new / old, axis=1)

    def log_derivatives(self, configs, thetas=None) -> np.ndarray:
        """``d log psi / d Lambda`` in the flat parameter layout, shape ``(..., 5 N)``."""
        configs = np.asarray(configs)
        if thetas is None:
            thetas = self.thetas(configs)
        if np.any(np.abs(np.cos(thetas)) < ZERO_THRESHOLD):
            raise ZeroAmplitudeError("log-derivative is singular where the amplitude vanishes")
        minus_tan = -np.tan(thetas)
        spins = configs[..., self.lat.cell_bonds]
        derivs = np.concatenate([minus_tan[..., None], spins * minus_tan[..., None]], axis=-1)
        return derivs.reshape(*derivs.shape[:-2], -1)


def check_config(lat: Lattice, config) -> np.ndarray:
    config = np.asarray(config)
    if config.shape[-1:] != (lat.n_spins,):
        raise ConfigurationError(f"configuration needs {lat.n_spins} spins, got shape {config.shape}")
    if not np.all(np.abs(config) == 1):
        raise ConfigurationError("spin values must be +1 or -1")
    return config.astype(np.int8)


def log_amplitude(lat: Lattice, params: RbmParams, config) -> Amplitude:
    config = check_config(lat, config)
    log_abs, sign = RbmWaveFunction(lat, params).log_psi(config)
    is_zero = bool(np.isneginf(log_abs))
    return Amplitude(log_abs=float(log_abs), sign=int(sign), is_zero=is_zero)


def log_derivatives(lat: Lattice, params: RbmParams, config) -> np.ndarray:
    config = check_config(lat, config)
    return RbmWaveFunction(lat, params).log_derivatives(config)


def toric_ground_state_params(lat: Lattice) -> RbmParams:
    values = np.zeros((lat.n_cells, N_SLOTS))
    values[: lat.n_plaquettes, 1:] = np.pi / 4
    values[lat.n_plaquettes:, 1:] = np.pi / 2
    return RbmParams(lat.lx, lat.ly, values)


def polarized_params(lat: Lattice) -> RbmParams:
    """All spins up: each plaquette covers its northmost bond, each star its southmost."""
    values = np.zeros((lat.n_cells, N_SLOTS))
    values[:, 0] = -np.pi / 4
    values[: lat.n_plaquettes, 1 + NORTH_BOND_OF_PLAQUETTE] = np.pi / 4
    values[lat.n_plaquettes:, 1 + SOUTH_BOND_OF_STAR] = np.pi / 4
    return RbmParams(lat.lx, lat.ly, values)


def sector_params(lat: Lattice, flip_w1: bool = False, flip_w2: bool = False) -> RbmParams:
    """
    Toric-code ground states in all four loop sectors. The ground state weights
    are multiplied by a z-string along y (flips the x Wilson loops) and/or along
    x (flips the y loops). Each string bond j is absorbed by one plaquette P
    containing it: cos(theta + pi/2 + pi/2 sigma_j) = -sigma_j cos(theta).
    """
    values = np.array(toric_ground_state_params(lat).values)
    strings = []
    if flip_w1:
        strings.append(straight_direct_loops(lat, 'y')[0])
    if flip_w2:
        strings.append(straight_direct_loops(lat, 'x')[0])
    for string in strings:
        for bond in string.bonds:
            x, y, _ = lat.bond_coords(bond)
            cell = lat.plaquette(x, y)
            values[cell, 0] += np.pi / 2
            values[cell, lat.incidence[cell, bond]] += np.pi / 2
    return RbmParams(lat.lx, lat.ly, values)


def random_params(lat: Lattice, seed, scale: float, base: RbmParams | None = None) -> RbmParams:
    """``base`` (default: toric ground state) plus uniform(-scale, scale) noise on every parameter."""
    if scale < 0:
        raise ConfigurationError(f"noise scale must be non-negative, got {scale}")
    if base is None:
        base = toric_ground_state_params(lat)
    rng = np.random.default_rng(seed)
    return base.replace(base.values + rng.uniform(-scale, scale, size=base.values.shape))


class GaugeKind(str, enum.Enum):
    SIGN_FLIP = 'sign_flip'
    PI_SHIFT_BIAS = 'pi_shift_bias'
    PI_SHIFT_WEIGHT = 'pi_shift_weight'
    HALF_PI_LOOP = 'half_pi_loop'


@dataclass(frozen=True)
class GaugeTransform:
    kind: GaugeKind
    cell: int | None = None
    bond: int | None = None
    loop: LoopPath | None = field(default=None, repr=False)

    @classmethod
    def sign_flip(cls, cell: int) -> Self:
        return cls(GaugeKind.SIGN_FLIP, cell=cell)

    @classmethod
    def pi_shift_bias(cls, cell: int) -> Self:
        return cls(GaugeKind.PI_SHIFT_BIAS, cell=cell)

    @classmethod
    def pi_shift_weight(cls, cell: int, bond: int) -> Self:
        return cls(GaugeKind.PI_SHIFT_WEIGHT, cell=cell, bond=bond)

    @classmethod
    def half_pi_loop(cls, loop: LoopPath) -> Self:
        return cls(GaugeKind.HALF_PI_LOOP, loop=loop)

    @property
    def phase(self) -> float:
        """Global phase picked up by the state: 0 or pi."""
        if self.kind is GaugeKind.SIGN_FLIP:
            return 0.0
        if self.kind is GaugeKind.HALF_PI_LOOP:
            return math.pi * (self.loop.length % 2)
        return math.pi


def apply_gauge(params: RbmParams, g: GaugeTransform) -> tuple[RbmParams, float]:
    lat = build_lattice(params.lx, params.ly)
    values = np.array(params.values)
    if g.kind is GaugeKind.HALF_PI_LOOP:
        if g.loop is None:
            raise LatticeError("half-pi loop transform without a loop")
        for cell, bond in g.loop.incidences:
            lat.check_cell(cell)
            slot = _slot(lat, cell, bond)
            values[cell, slot] += np.pi / 2
    else:
        if g.cell is None:
            raise LatticeError(f"{g.kind.value} transform needs a cell")
        lat.check_cell(g.cell)
        if g.kind is GaugeKind.SIGN_FLIP:
            values[g.cell] = -values[g.cell]
        elif g.kind is GaugeKind.PI_SHIFT_BIAS:
            values[g.cell, 0] += np.pi
        else:
            values[g.cell, _slot(lat, g.cell, g.bond)] += np.pi
    return params.replace(values), g.phase


def _slot(lat: Lattice, cell: int, bond) -> int:
    if bond is None or not 0 <= bond < lat.n_spins or lat.incidence[cell, bond] == 0:
        raise LatticeError(f"bond {bond} is not part of cell {cell}")
    return int(lat.incidence[cell, bond])
