"""
Variational Monte Carlo for the RBM ansatz: Metropolis sampling with mixed
spin/star flip proposals, batch-means error bars, covariance-form energy
gradients, Adam minimization and fidelity scans along a field grid.

All chains of one call advance together as numpy arrays; each chain draws
from its own stream spawned from ``SamplerConfig.seed``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import exact
from .exceptions import ConfigurationError, OptimizationDiverged, SamplerError
from .hamiltonian import Energy, Observable, ToricParams
from .lattice import Lattice
from .rbm import ZERO_THRESHOLD, RbmParams, RbmWaveFunction

logger = logging.getLogger(__name__)

INIT_RETRIES = 1000


def derive_seed(*keys: int) -> int:
    """Deterministic child seed for a tuple of non-negative integer keys."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 16
    n_steps: int = 400
    n_burn: int | None = None
    p_spin_flip: float = 0.3
    seed: int = 0
    thinning: int = 1
    n_batches: int = 20

    def __post_init__(self):
        if self.n_chains < 1:
            raise ConfigurationError("n_chains must be at least 1")
        if not 0 < self.p_spin_flip < 1:
            raise ConfigurationError("p_spin_flip must lie strictly between 0 and 1")
        if self.thinning < 1 or self.n_batches < 1:
            raise ConfigurationError("thinning and n_batches must be positive")
        if not 0 <= self.burn < self.n_steps:
            raise ConfigurationError(f"burn-in {self.burn} must be smaller than n_steps {self.n_steps}")

    @property
    def burn(self) -> int:
        return self.n_steps // 4 if self.n_burn is None else self.n_burn

    @property
    def n_kept(self) -> int:
        return self.n_steps - self.burn


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_samples: int
    below_resolution: bool = False


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    n_iterations: int = 500
    window: int = 50
    tolerance: float = 1e-4

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigurationError("Adam betas must lie in (0, 1)")
        if self.n_iterations < 1 or self.window < 1:
            raise ConfigurationError("n_iterations and window must be positive")


@dataclass
class ChainSamples:
    configs: np.ndarray  # (n_chains, n_kept, n_spins)
    last: np.ndarray  # (n_chains, n_spins)
    acceptance: float

    @property
    def flat(self) -> np.ndarray:
        return self.configs.reshape(-1, self.configs.shape[-1])


@dataclass
class OptimizationResult:
    params: RbmParams
    trace: list[McEstimate] = field(default_factory=list)
    converged: bool = False

    @property
    def energy(self) -> McEstimate:
        return self.trace[-1]


@dataclass(frozen=True)
class FidelityPoint:
    h: float
    h_next: float
    fidelity: float | None
    energy: float | None
    error: str = ''


@lru_cache(maxsize=16)
def _proposal_tables(lat: Lattice) -> tuple[np.ndarray, np.ndarray]:
    """Flip masks for every single-spin move then every star move, and the cells each touches."""
    flips = np.zeros((lat.n_spins + lat.n_stars, lat.n_spins), dtype=bool)
    flips[np.arange(lat.n_spins), np.arange(lat.n_spins)] = True
    for s, bonds in enumerate(lat.star_bonds):
        flips[lat.n_spins + s, bonds] = True
    touched = (flips.astype(np.int64) @ (lat.incidence.T > 0)) > 0
    flips.setflags(write=False)
    touched.setflags(write=False)
    return flips, touched


def metropolis_accept(ratio_sq, u) -> np.ndarray:
    """Accept iff ``u < min(1, |psi'/psi|^2)``; a zero ratio is never accepted."""
    return np.asarray(u) < np.minimum(1.0, ratio_sq)


def _ratio_sq(old_thetas, new_thetas, touched) -> np.ndarray:
    old = np.abs(np.cos(old_thetas))
    new = np.abs(np.cos(new_thetas))
    vanishes = np.any(touched & (new < ZERO_THRESHOLD), axis=1)
    with np.errstate(divide='ignore', over='ignore'):
        log_ratio = np.sum(np.where(touched, np.log(np.maximum(new, ZERO_THRESHOLD)) - np.log(old), 0.0), axis=1)
        ratio_sq = np.exp(2.0 * log_ratio)
    return np.where(vanishes, 0.0, ratio_sq)


def _count_zero_factors(wf: RbmWaveFunction, configs) -> np.ndarray:
    return np.sum(np.abs(np.cos(wf.thetas(configs))) < ZERO_THRESHOLD, axis=-1)


def initial_config(wf: RbmWaveFunction, rng: np.random.Generator, start=None) -> np.ndarray:
    """
    A configuration with nonzero amplitude: ``start`` or all-up if valid, then
    random draws, then greedy spin/star flips that remove zero factors.
    """
    lat = wf.lat
    candidates = [] if start is None else [np.asarray(start, dtype=np.int8)]
    candidates.append(np.ones(lat.n_spins, dtype=np.int8))
    for config in candidates:
        if _count_zero_factors(wf, config) == 0:
            return config
    for _ in range(INIT_RETRIES):
        config = rng.choice(np.array([-1, 1], dtype=np.int8), size=lat.n_spins)
        if _count_zero_factors(wf, config) == 0:
            return config
    flips, _ = _proposal_tables(lat)
    config = np.ones(lat.n_spins, dtype=np.int8)
    zeros = _count_zero_factors(wf, config)
    while zeros > 0:
        moves = np.where(flips, -config, config)
        counts = _count_zero_factors(wf, moves)
        best = int(np.argmin(counts))
        if counts[best] >= zeros:
            raise SamplerError("no configuration with nonzero amplitude found")
        config, zeros = moves[best], counts[best]
    logger.debug("initial configuration found by greedy flips")
    return config


def sample_chains(lat: Lattice, params: RbmParams, sc: SamplerConfig, init=None) -> ChainSamples:
    wf = RbmWaveFunction(lat, params)
    flips, touched = _proposal_tables(lat)
    total = sc.n_steps * sc.thinning
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(sc.seed).spawn(sc.n_chains)]

    configs = np.stack([
        initial_config(wf, rng, None if init is None else init[c % len(init)])
        for c, rng in enumerate(rngs)
    ])
    spin_move = np.stack([rng.random(total) < sc.p_spin_flip for rng in rngs])
    spins = np.stack([rng.integers(lat.n_spins, size=total) for rng in rngs])
    stars = np.stack([rng.integers(lat.n_stars, size=total) for rng in rngs])
    uniforms = np.stack([rng.random(total) for rng in rngs])
    moves = np.where(spin_move, spins, lat.n_spins + stars)

    thetas = wf.thetas(configs)
    kept = np.empty((sc.n_chains, sc.n_kept, lat.n_spins), dtype=np.int8)
    n_accepted = 0
    for t in range(total):
        move = moves[:, t]
        proposed = np.where(flips[move], -configs, configs)
        proposed_thetas = wf.thetas(proposed)
        accept = metropolis_accept(_ratio_sq(thetas, proposed_thetas, touched[move]), uniforms[:, t])
        configs = np.where(accept[:, None], proposed, configs)
        thetas = np.where(accept[:, None], proposed_thetas, thetas)
        n_accepted += int(accept.sum())
        step, offset = divmod(t + 1, sc.thinning)
        if offset == 0 and step > sc.burn:
            kept[:, step - 1 - sc.burn] = configs

    acceptance = n_accepted / (total * sc.n_chains)
    logger.debug("sampled %d chains, acceptance %.3f", sc.n_chains, acceptance)
    return ChainSamples(configs=kept, last=configs.copy(), acceptance=acceptance)


def sample_configs(lat: Lattice, params: RbmParams, sc: SamplerConfig, init=None) -> np.ndarray:
    """Post-burn-in configurations of all chains, chain-major, shape ``(n_chains * n_kept, n_spins)``."""
    return sample_chains(lat, params, sc, init).flat


def batch_means(values: np.ndarray, n_batches: int) -> McEstimate:
    """Mean and batch-means standard error of per-chain value series ``(n_chains, n)``."""
    values = np.atleast_2d(values)
    n_batches = min(n_batches, values.shape[1])
    means = np.concatenate([
        [batch.mean() for batch in np.array_split(chain, n_batches)] for chain in values
    ])
    if len(means) > 1:
        std_error = float(np.std(means, ddof=1) / math.sqrt(len(means)))
    else:
        std_error = 0.0
    return McEstimate(mean=float(values.mean()), std_error=std_error, n_samples=values.size)


def _local_values(wf, samples: ChainSamples, observable: Observable) -> np.ndarray:
    flat = samples.flat
    values = observable.local_values(wf, flat, wf.thetas(flat))
    return np.asarray(values, dtype=np.float64).reshape(samples.configs.shape[:2])


def estimate_many(lat: Lattice, params: RbmParams, sc: SamplerConfig, observables, samples=None) -> list[McEstimate]:
    """Estimate several observables on one shared sample set."""
    wf = RbmWaveFunction(lat, params)
    if samples is None:
        samples = sample_chains(lat, params, sc)
    return [batch_means(_local_values(wf, samples, o), sc.n_batches) for o in observables]


def estimate(lat: Lattice, params: RbmParams, sc: SamplerConfig, observable: Observable, samples=None) -> McEstimate:
    return estimate_many(lat, params, sc, [observable], samples)[0]


def gradient_terms(wf: RbmWaveFunction, configs, tp: ToricParams) -> tuple[np.ndarray, np.ndarray]:
    """
    Local energies and per-sample gradient terms
    ``2 (E_loc - <E_loc>) (D - <D>)``; the terms average to the gradient.
    """
    thetas = wf.thetas(configs)
    local = np.asarray(Energy(tp).local_values(wf, configs, thetas))
    derivs = wf.log_derivatives(configs, thetas)
    terms = 2.0 * (local - local.mean())[:, None] * (derivs - derivs.mean(axis=0))
    return local, terms


def energy_and_gradient(lat: Lattice, params: RbmParams, sc: SamplerConfig, tp: ToricParams, init=None):
    """Energy estimate, gradient ``2 (<E_loc D> - <E_loc><D>)`` and the final chain states."""
    samples = sample_chains(lat, params, sc, init)
    local, terms = gradient_terms(RbmWaveFunction(lat, params), samples.flat, tp)
    energy = batch_means(local.reshape(samples.configs.shape[:2]), sc.n_batches)
    return energy, terms.mean(axis=0), samples.last


def exact_energy_gradient(lat: Lattice, params: RbmParams, tp: ToricParams) -> np.ndarray:
    """The covariance gradient evaluated over every configuration with its exact weight."""
    exact.check_budget(lat)
    wf = RbmWaveFunction(lat, params)
    configs = exact.spin_table(lat.n_spins)
    log_abs, _ = wf.log_psi(configs)
    support = np.isfinite(log_abs)
    configs = configs[support]
    weights = np.exp(2.0 * (log_abs[support] - log_abs[support].max()))
    weights /= weights.sum()
    thetas = wf.thetas(configs)
    local = np.asarray(Energy(tp).local_values(wf, configs, thetas))
    derivs = wf.log_derivatives(configs, thetas)
    return 2.0 * ((weights * local) @ derivs - (weights @ local) * (weights @ derivs))


def energy_gradient(lat: Lattice, params: RbmParams, sc: SamplerConfig, tp: ToricParams) -> np.ndarray:
    return energy_and_gradient(lat, params, sc, tp)[1]


def optimize(lat: Lattice, init: RbmParams, tp: ToricParams, sc: SamplerConfig, oc: OptimizerConfig) -> OptimizationResult:
    """
    Adam descent on the sampled energy. Each iteration samples with a seed
    derived from ``(sc.seed, iteration)`` and warm-starts the chains from the
    previous iteration's final configurations.
    """
    flat = np.array(init.flat)
    first = np.zeros_like(flat)
    second = np.zeros_like(flat)
    result = OptimizationResult(params=init)
    chains = None
    for it in range(1, oc.n_iterations + 1):
        params = RbmParams.from_flat(lat, flat)
        energy, gradient, chains = energy_and_gradient(
            lat, params, replace(sc, seed=derive_seed(sc.seed, it)), tp, chains
        )
        result.params = params
        result.trace.append(energy)
        start = result.trace[0].mean
        if start and abs(energy.mean) > 10 * abs(start):
            raise OptimizationDiverged(
                f"energy {energy.mean:.6g} at iteration {it} exceeds ten times the initial {start:.6g}"
            )
        if _plateau(result.trace, oc):
            result.converged = True
            logger.info("energy plateau at iteration %d: %.6f", it, energy.mean)
            break

        first = oc.beta1 * first + (1 - oc.beta1) * gradient
        second = oc.beta2 * second + (1 - oc.beta2) * gradient ** 2
        first_hat = first / (1 - oc.beta1 ** it)
        second_hat = second / (1 - oc.beta2 ** it)
        flat = flat - oc.learning_rate * first_hat / (np.sqrt(second_hat) + oc.epsilon)
    return result


def _plateau(trace: list[McEstimate], oc: OptimizerConfig) -> bool:
    if len(trace) < 2 * oc.window:
        return False
    recent = np.mean([e.mean for e in trace[-oc.window:]])
    previous = np.mean([e.mean for e in trace[-2 * oc.window: -oc.window]])
    return abs(recent - previous) < oc.tolerance


def nearest_anchor(anchors, h: float) -> RbmParams:
    """Parameters of the ``(h, params)`` anchor closest in field to ``h``; ties go to the lower field."""
    return min(anchors, key=lambda anchor: (abs(anchor[0] - h), anchor[0]))[1]


def optimize_along(lat: Lattice, h_grid, tp: ToricParams, init: RbmParams, sc: SamplerConfig, oc: OptimizerConfig,
                   anchors=()):
    """
    Optimize at every field value of a non-decreasing grid. Each run starts
    from the nearest of ``anchors`` (``(h, params)`` pairs, typically states
    already optimized on a coarser grid) or, without anchors, from the
    previous optimum. Yields ``(h, result or None, error message)``; a
    repeated h reuses the previous state.
    """
    h_grid = [float(h) for h in h_grid]
    if any(b < a for a, b in zip(h_grid, h_grid[1:])):
        raise ConfigurationError("field grid must be non-decreasing")
    anchors = [(float(h), params) for h, params in anchors]
    params = init
    previous = None
    for h in h_grid:
        if previous is not None and previous[0] == h:
            yield previous
            continue
        if anchors:
            params = nearest_anchor(anchors, h)
        try:
            result = optimize(lat, params, replace(tp, h=h), sc, oc)
        except (OptimizationDiverged, SamplerError) as exc:
            logger.warning("optimization at h=%g failed: %s", h, exc)
            previous = (h, None, str(exc))
        else:
            params = result.params
            previous = (h, result, '')
        yield previous


def fidelity_scan(lat: Lattice, h_grid, tp: ToricParams, init: RbmParams, sc: SamplerConfig, oc: OptimizerConfig,
                  anchors=()) -> list[FidelityPoint]:
    """``|<psi(h)|psi(h')>|^2`` between optimized states at consecutive grid points."""
    runs = list(optimize_along(lat, h_grid, tp, init, sc, oc, anchors))
    points = []
    for (h, a, err_a), (h_next, b, err_b) in zip(runs, runs[1:]):
        energy = a.energy.mean if a is not None else None
        if a is None or b is None:
            points.append(FidelityPoint(h, h_next, None, energy, err_a or err_b))
        elif b is a:
            points.append(FidelityPoint(h, h_next, 1.0, energy))
        else:
            points.append(FidelityPoint(h, h_next, exact.overlap(lat, a.params, b.params), energy))
    return points
