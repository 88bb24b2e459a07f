"""
Boltzmann-weighted Markov chains over network parameters.

Each chain starts from a low-energy seed, proposes a local change of the
parameters at one spin site, estimates the energy of the proposal by VMC and
accepts it with probability min(1, exp(-(E' - E) / T)). The incumbent's energy
is the estimate that got it accepted; it is never re-sampled.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from wavefunctions.exceptions import ConfigurationError, SamplerError, ZeroAmplitudeError
from wavefunctions.hamiltonian import Energy, ToricParams
from wavefunctions.lattice import Lattice, build_lattice
from wavefunctions.rbm import RbmParams
from wavefunctions.vmc import McEstimate, SamplerConfig, derive_seed, estimate

logger = logging.getLogger(__name__)


class ChainAborted(RuntimeError):
    """A chain ran out of retries for failed energy estimates."""

    def __init__(self, chain_id: int, step: int, reason: str):
        super().__init__(f"chain {chain_id} aborted at step {step}: {reason}")
        self.chain_id = chain_id
        self.step = step


@dataclass(frozen=True)
class EnsembleConfig:
    temperature: float = 0.1
    k_chains: int = 2
    n_steps: int = 250
    m_keep: int | None = None
    p_m: float = 0.3
    xi: float = 0.2
    seeds: tuple[RbmParams, ...] = field(default=(), repr=False, compare=False)
    seed: int = 0
    thinning: int = 1
    max_retries: int = 5

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigurationError("temperature must be positive")
        if self.k_chains < 1 or self.n_steps < 1 or self.thinning < 1:
            raise ConfigurationError("k_chains, n_steps and thinning must be positive")
        if not 1 <= self.keep <= self.n_steps:
            raise ConfigurationError(f"m_keep must lie in [1, n_steps], got {self.keep}")
        if not 0 <= self.p_m <= 1:
            raise ConfigurationError("p_m must be a probability")
        if self.xi <= 0:
            raise ConfigurationError("xi must be positive")

    @property
    def keep(self) -> int:
        return self.n_steps if self.m_keep is None else self.m_keep


@dataclass
class Member:
    params: RbmParams
    energy: McEstimate
    chain_id: int
    step: int


@dataclass
class Ensemble:
    lx: int
    ly: int
    tp: ToricParams
    config: EnsembleConfig
    members: list[Member] = field(default_factory=list)
    n_estimates: int = 0
    n_cache_hits: int = 0

    def __len__(self):
        return len(self.members)

    @property
    def energies(self) -> np.ndarray:
        return np.array([m.energy.mean for m in self.members])


def propose_params(params: RbmParams, rng: np.random.Generator, p_m: float, xi: float) -> RbmParams:
    """
    Change the weights at every (cell, bond) incidence of one random bond:
    negate them with probability ``p_m``, otherwise add uniform(0, xi) noise.
    """
    lat = build_lattice(params.lx, params.ly)
    bond = int(rng.integers(lat.n_spins))
    cells = lat.bond_cells[bond]
    slots = lat.incidence[cells, bond]
    values = np.array(params.values)
    if rng.random() < p_m:
        values[cells, slots] = -values[cells, slots]
    else:
        values[cells, slots] += rng.uniform(0.0, xi, size=len(cells))
    return params.replace(values)


def accept_step(e_current: float, e_proposed: float, temperature: float, rng) -> bool:
    """Metropolis rule at hyper-temperature T; downhill and equal-energy moves always pass."""
    delta = e_proposed - e_current
    if delta <= 0:
        return True
    return bool(rng.random() < math.exp(-delta / temperature))


def _energy(lat, params, tp, sampler, *keys) -> McEstimate:
    return estimate(lat, params, replace(sampler, seed=derive_seed(sampler.seed, *keys)), Energy(tp))


def generate(lat: Lattice, tp: ToricParams, ec: EnsembleConfig, sampler: SamplerConfig, estimator=_energy) -> Ensemble:
    """
    Run ``ec.k_chains`` independent chains from the cycled seeds and keep the
    last ``m_keep`` states of each (every ``thinning``-th of them), ordered by
    chain then step.
    """
    if not ec.seeds:
        raise ConfigurationError("ensemble generation needs at least one seed state")
    ensemble = Ensemble(lat.lx, lat.ly, tp, ec)
    for chain_id in range(ec.k_chains):
        _run_chain(lat, tp, ec, sampler, chain_id, ensemble, estimator)
    logger.info(
        "ensemble at T=%g, h=%g: %d members, %d estimates, %d cache hits",
        ec.temperature, tp.h, len(ensemble), ensemble.n_estimates, ensemble.n_cache_hits,
    )
    return ensemble


def _run_chain(lat, tp, ec, sampler, chain_id, ensemble, estimator):
    rng = np.random.default_rng(np.random.SeedSequence([ec.seed, chain_id]))
    current = ec.seeds[chain_id % len(ec.seeds)]
    energy = estimator(lat, current, tp, sampler, ec.seed, chain_id, 0, 0)
    ensemble.n_estimates += 1
    first_kept = ec.n_steps - ec.keep + 1
    accepted = 0

    for step in range(1, ec.n_steps + 1):
        for attempt in range(ec.max_retries + 1):
            proposal = propose_params(current, rng, ec.p_m, ec.xi)
            try:
                proposed_energy = estimator(lat, proposal, tp, sampler, ec.seed, chain_id, step, attempt)
            except (SamplerError, ZeroAmplitudeError) as exc:
                logger.warning("chain %d step %d attempt %d: %s", chain_id, step, attempt, exc)
                continue
            finally:
                ensemble.n_estimates += 1
            break
        else:
            raise ChainAborted(chain_id, step, f"{ec.max_retries + 1} failed energy estimates")

        if accept_step(energy.mean, proposed_energy.mean, ec.temperature, rng):
            current, energy = proposal, proposed_energy
            accepted += 1
        else:
            ensemble.n_cache_hits += 1

        if step >= first_kept and (step - first_kept) % ec.thinning == 0:
            ensemble.members.append(Member(current, energy, chain_id, step))

    logger.debug("chain %d acceptance %.3f", chain_id, accepted / ec.n_steps)
