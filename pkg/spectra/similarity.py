"""
Pairwise similarity of variational states.

``q``      squared overlap of the normalized states (exact or sampled)
``n``      gauge-invariant network similarity built from cos 2(.) of parameter differences
``str``    ``n`` maximized over loop gauge moves by greedy search
``eu``     Euclidean parameter distance turned into a kernel similarity
``mixed``  ``n`` with a random fraction of entries replaced by rescaled ``q``
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from django.conf import settings
from scipy import stats

from wavefunctions import exact
from wavefunctions.exceptions import EnumerationBudgetError
from wavefunctions.hamiltonian import Observable
from wavefunctions.lattice import Lattice, loop_generators
from wavefunctions.rbm import RbmParams, RbmWaveFunction
from wavefunctions.vmc import McEstimate, SamplerConfig, batch_means, derive_seed, sample_chains

from .exceptions import SimilarityError

logger = logging.getLogger(__name__)

MEASURES = ('q', 'n', 'str', 'eu', 'mixed')

# |psi_b / psi_a| is capped here in sampled overlaps
RATIO_CLIP = float(np.exp(30.0))

_ROW_BLOCK = 64


@dataclass
class SimilarityMatrix:
    values: np.ndarray
    measure: str
    fraction: float | None = None
    replaced: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise SimilarityError(f"similarity matrix must be square, got shape {values.shape}")
        if self.measure not in MEASURES:
            raise SimilarityError(f"unknown measure {self.measure!r}")
        self.values = values

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def tag(self) -> str:
        return f"mixed({self.fraction:g})" if self.measure == 'mixed' else self.measure

    def off_diagonal(self) -> np.ndarray:
        return self.values[np.triu_indices(self.m, k=1)]


def _check_pair(a: RbmParams, b: RbmParams):
    if (a.lx, a.ly) != (b.lx, b.ly):
        raise SimilarityError(f"cannot compare {a.lx}x{a.ly} with {b.lx}x{b.ly} parameters")


# Quantum overlap

def overlap_exact(lat: Lattice, a: RbmParams, b: RbmParams) -> float:
    _check_pair(a, b)
    return exact.overlap(lat, a, b)


class AmplitudeRatio(Observable):
    """Local estimator ``psi_other / psi`` for configurations sampled from ``psi``."""

    name = 'amplitude_ratio'

    def __init__(self, other: RbmWaveFunction):
        self.other = other
        self.clipped = False

    def local_values(self, wf, configs, thetas):
        log_own, sign_own = wf.log_psi(configs, thetas)
        log_other, sign_other = self.other.log_psi(configs)
        with np.errstate(over='ignore'):
            magnitude = np.exp(log_other - log_own)
        if np.any(magnitude > RATIO_CLIP):
            self.clipped = True
        return sign_own * sign_other * np.minimum(magnitude, RATIO_CLIP)


def overlap_sampled(lat: Lattice, a: RbmParams, b: RbmParams, sc: SamplerConfig) -> McEstimate:
    """
    ``E_a[psi_b / psi_a] * E_b[psi_a / psi_b]`` with both expectations
    sampled from the respective Born distributions.
    """
    _check_pair(a, b)
    wf_a, wf_b = RbmWaveFunction(lat, a), RbmWaveFunction(lat, b)
    ratio_ab, ratio_ba = AmplitudeRatio(wf_b), AmplitudeRatio(wf_a)
    estimates = []
    for wf, ratio, seed in ((wf_a, ratio_ab, sc.seed), (wf_b, ratio_ba, derive_seed(sc.seed, 1))):
        samples = sample_chains(lat, wf.params, replace(sc, seed=seed))
        flat = samples.flat
        values = ratio.local_values(wf, flat, wf.thetas(flat)).reshape(samples.configs.shape[:2])
        estimates.append(batch_means(values, sc.n_batches))
    first, second = estimates
    mean = first.mean * second.mean
    std_error = float(np.hypot(second.mean * first.std_error, first.mean * second.std_error))
    below = ratio_ab.clipped or ratio_ba.clipped or abs(mean) <= 3 * std_error
    return McEstimate(mean, std_error, first.n_samples + second.n_samples, below_resolution=below)


# Network similarity

def _cell_scores(a_values: np.ndarray, b_values: np.ndarray) -> np.ndarray:
    """max over tau of sum_slots cos 2(tau a - b), per cell (last axis = 5 slots)."""
    ca, sa = np.cos(2 * a_values), np.sin(2 * a_values)
    cb, sb = np.cos(2 * b_values), np.sin(2 * b_values)
    return np.sum(ca * cb, axis=-1) + np.abs(np.sum(sa * sb, axis=-1))


def _from_scores(total: float, n_spins: int) -> float:
    return float(np.clip(0.5 + total / (10.0 * n_spins), 0.0, 1.0))


def similarity_network(lat: Lattice, a: RbmParams, b: RbmParams) -> float:
    _check_pair(a, b)
    return _from_scores(float(np.sum(_cell_scores(a.values, b.values))), lat.n_spins)


def similarity_string(lat: Lattice, a: RbmParams, b: RbmParams, n_g: int, rng: np.random.Generator) -> float:
    """
    Greedy search over pi/2 loop moves applied to ``a``: draw a random
    elementary or straight loop, keep it unless the network similarity drops.
    """
    _check_pair(a, b)
    if n_g < 0:
        raise SimilarityError("n_g must be non-negative")
    work = np.array(a.values)
    scores = _cell_scores(work, b.values)
    total = float(np.sum(scores))
    moves = [_loop_move(lat, loop) for loop in loop_generators(lat)]
    for _ in range(n_g):
        cells, slots, touched = moves[int(rng.integers(len(moves)))]
        trial = work[touched].copy()
        work[cells, slots] += np.pi / 2
        new_scores = _cell_scores(work[touched], b.values[touched])
        new_total = total - float(np.sum(scores[touched])) + float(np.sum(new_scores))
        if new_total >= total:
            scores[touched] = new_scores
            total = new_total
        else:
            work[touched] = trial
    return _from_scores(total, lat.n_spins)


def _loop_move(lat, loop):
    cells = np.array([c for c, _ in loop.incidences], dtype=np.intp)
    bonds = np.array([b for _, b in loop.incidences], dtype=np.intp)
    return cells, lat.incidence[cells, bonds], np.unique(cells)


# Euclidean distance

def similarity_euclidean(a: RbmParams, b: RbmParams) -> float:
    """Squared Euclidean distance of the parameter vectors."""
    _check_pair(a, b)
    return float(np.sum((a.values - b.values) ** 2))


# Matrix builders

def _stack(params_list) -> np.ndarray:
    if not params_list:
        raise SimilarityError("no parameter sets to compare")
    for p in params_list[1:]:
        _check_pair(params_list[0], p)
    return np.stack([p.values for p in params_list])


def _finish(values: np.ndarray) -> np.ndarray:
    values = np.clip((values + values.T) / 2, 0.0, 1.0)
    np.fill_diagonal(values, 1.0)
    return values


def network_matrix(lat: Lattice, params_list) -> SimilarityMatrix:
    stacked = _stack(params_list)
    cos2, sin2 = np.cos(2 * stacked), np.sin(2 * stacked)
    m = len(stacked)
    values = np.empty((m, m))
    for start in range(0, m, _ROW_BLOCK):
        rows = slice(start, start + _ROW_BLOCK)
        p = np.einsum('lcs,kcs->lkc', cos2[rows], cos2)
        q = np.einsum('lcs,kcs->lkc', sin2[rows], sin2)
        values[rows] = 0.5 + np.sum(p + np.abs(q), axis=-1) / (10.0 * lat.n_spins)
    return SimilarityMatrix(_finish(values), 'n')


def overlap_matrix(lat: Lattice, params_list, sampler: SamplerConfig | None = None, sampled: bool = False) -> SimilarityMatrix:
    """
    Exact squared overlaps when the lattice fits the enumeration budget,
    sampled ones (with per-pair seeds) otherwise or when ``sampled`` is set.
    Exact state vectors are held in single precision.
    """
    _stack(params_list)
    m = len(params_list)
    warnings = []
    if not sampled:
        try:
            exact.check_budget(lat)
        except EnumerationBudgetError:
            if sampler is None:
                raise
            sampled = True
    if sampled:
        if sampler is None:
            raise SimilarityError("sampled overlaps need a sampler configuration")
        values = np.eye(m)
        below = 0
        for i in range(m):
            for j in range(i + 1, m):
                est = overlap_sampled(lat, params_list[i], params_list[j], replace(sampler, seed=derive_seed(sampler.seed, i, j)))
                values[i, j] = values[j, i] = est.mean
                below += est.below_resolution
        if below:
            warnings.append(f"{below} sampled overlaps below resolution")
            logger.warning("%d of %d sampled overlaps below resolution", below, m * (m - 1) // 2)
        return SimilarityMatrix(_finish(values), 'q', warnings=warnings)

    vectors = np.empty((m, 1 << lat.n_spins), dtype=np.float32)
    for i, params in enumerate(params_list):
        vectors[i] = exact.state_vector(lat, params)
    values = np.empty((m, m))
    for start in range(0, m, _ROW_BLOCK):
        rows = slice(start, start + _ROW_BLOCK)
        values[rows] = (vectors[rows] @ vectors.T).astype(np.float64) ** 2
    return SimilarityMatrix(_finish(values), 'q')


def string_matrix(lat: Lattice, params_list, n_g: int, seed: int) -> SimilarityMatrix:
    m = len(params_list)
    _stack(params_list)
    values = np.eye(m)
    for i in range(m):
        for j in range(i + 1, m):
            rng = np.random.default_rng(np.random.SeedSequence([seed, i, j]))
            values[i, j] = values[j, i] = similarity_string(lat, params_list[i], params_list[j], n_g, rng)
    return SimilarityMatrix(_finish(values), 'str')


def euclidean_matrix(params_list, scale_sq: float | None = None) -> SimilarityMatrix:
    """``exp(-d^2 / s^2)`` with ``s^2`` the median pairwise squared distance unless given."""
    stacked = _stack(params_list).reshape(len(params_list), -1)
    sq_norms = np.sum(stacked ** 2, axis=1)
    d_sq = np.maximum(sq_norms[:, None] + sq_norms[None, :] - 2 * stacked @ stacked.T, 0.0)
    warnings = []
    if scale_sq is None:
        off = d_sq[np.triu_indices(len(stacked), k=1)]
        scale_sq = float(np.median(off)) if off.size else 0.0
    if scale_sq <= 0:
        warnings.append("all parameter sets coincide; Euclidean kernel is constant")
        return SimilarityMatrix(np.ones_like(d_sq), 'eu', warnings=warnings)
    return SimilarityMatrix(_finish(np.exp(-d_sq / scale_sq)), 'eu', warnings=warnings)


def mix_similarities(s_n: SimilarityMatrix, s_q: SimilarityMatrix, fraction: float, seed: int) -> SimilarityMatrix:
    """
    Replace each unordered pair of ``s_n`` by the rescaled overlap with
    probability ``fraction``. The overlap range is mapped onto the network
    similarity range, both taken over all off-diagonal entries.
    """
    if not 0 <= fraction <= 1:
        raise SimilarityError("fraction must lie in [0, 1]")
    if s_n.m != s_q.m:
        raise SimilarityError("matrices of different size cannot be mixed")
    warnings = []
    n_off, q_off = s_n.off_diagonal(), s_q.off_diagonal()
    q_min, q_max = (float(q_off.min()), float(q_off.max())) if q_off.size else (0.0, 1.0)
    n_min, n_max = (float(n_off.min()), float(n_off.max())) if n_off.size else (0.0, 1.0)
    if q_max > q_min:
        rescaled = (s_q.values - q_min) / (q_max - q_min) * (n_max - n_min) + n_min
    else:
        warnings.append("overlaps are constant; rescaling skipped")
        logger.warning("degenerate overlap range %.3g; using overlaps unscaled", q_min)
        rescaled = s_q.values

    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((s_n.m, s_n.m)) < fraction, k=1)
    replaced = upper | upper.T
    values = np.where(replaced, rescaled, s_n.values)
    np.fill_diagonal(values, 1.0)
    return SimilarityMatrix(np.clip(values, 0.0, 1.0), 'mixed', fraction=fraction, replaced=replaced, warnings=warnings)


def similarity_mixed(
    lat: Lattice, params_list, fraction: float, seed: int, sampler: SamplerConfig | None = None, sampled: bool = False,
) -> SimilarityMatrix:
    s_n = network_matrix(lat, params_list)
    s_q = overlap_matrix(lat, params_list, sampler, sampled)
    mixed = mix_similarities(s_n, s_q, fraction, seed)
    mixed.warnings = s_q.warnings + mixed.warnings
    return mixed


def rank_agreement(s_a: SimilarityMatrix, s_b: SimilarityMatrix) -> float:
    """Spearman correlation of the off-diagonal entries."""
    if s_a.m != s_b.m:
        raise SimilarityError("matrices of different size")
    result = stats.spearmanr(s_a.off_diagonal(), s_b.off_diagonal())
    return float(result.statistic)


# Persistence

def save_similarity(s: SimilarityMatrix, base: Path, config: dict | None = None) -> list[Path]:
    """
    ``<base>.json`` header, ``<base>.bin`` upper triangle (row-major, with
    diagonal) as little-endian doubles, replaced-entry flags for mixed
    matrices, and ``<base>.csv`` for small matrices.
    """
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    upper = np.triu_indices(s.m)
    header = {
        'measure': s.measure,
        'tag': s.tag,
        'm': s.m,
        'fraction': s.fraction,
        'warnings': s.warnings,
        'config': config or {},
    }
    paths = [_sibling(base, '.json'), _sibling(base, '.bin')]
    paths[0].write_text(json.dumps(header, indent=2, sort_keys=True) + '\n')
    paths[1].write_bytes(s.values[upper].astype('<f8').tobytes())
    if s.replaced is not None:
        flags = _sibling(base, '.replaced.bin')
        flags.write_bytes(s.replaced[upper].astype(np.uint8).tobytes())
        paths.append(flags)
    if s.m <= getattr(settings, 'SIMILARITY_CSV_MAX_M', 200):
        table = _sibling(base, '.csv')
        with table.open('w', newline='') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            for row in s.values:
                writer.writerow([f"{x:.17g}" for x in row])
        paths.append(table)
    return paths


def load_similarity(base: Path) -> SimilarityMatrix:
    base = Path(base)
    header = json.loads(_sibling(base, '.json').read_text())
    m = header['m']
    upper = np.triu_indices(m)
    values = np.zeros((m, m))
    values[upper] = np.frombuffer(_sibling(base, '.bin').read_bytes(), dtype='<f8')
    values = values + np.triu(values, k=1).T
    replaced = None
    flags = _sibling(base, '.replaced.bin')
    if flags.exists():
        replaced = np.zeros((m, m), dtype=bool)
        replaced[upper] = np.frombuffer(flags.read_bytes(), dtype=np.uint8).astype(bool)
        replaced = replaced | replaced.T
    return SimilarityMatrix(values, header['measure'], header['fraction'], replaced, list(header['warnings']))


def _sibling(base: Path, extension: str) -> Path:
    return base.parent / (base.name + extension)
