"""Objective and subjective evaluation.

Objective: a deterministic frame-level pitch estimate (normalized MIDI
filter-bank energies) scored against the reference piano roll with a
multi-hot cross-entropy, so lower means the audio carries the written
pitches.

Subjective: listening-test scores compared pairwise with the two-sided
Mann-Whitney U test (exact enumeration for small tie-free samples,
normal approximation with tie and continuity corrections otherwise) and
Holm-Bonferroni correction across all pairs.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .dsp import FeatureMatrix, StftConfig, WaveSignal, midi_filter_bank, stft
from .errors import FileFormatError
from .midi_io import PianoRoll

PROB_EPS = 1e-4
SILENCE_ENERGY = 1e-6
EXACT_LIMIT = 12


@dataclass(frozen=True)
class PitchProbMatrix:
    """Per-frame pseudo-probabilities over the 128 MIDI pitches."""

    values: np.ndarray
    frame_shift: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 128:
            raise ValueError(f"pitch probabilities must be (N, 128), got {v.shape}")
        if v.size and (v.min() <= 0.0 or v.max() >= 1.0):
            raise ValueError("pitch probabilities must lie strictly inside (0, 1)")
        object.__setattr__(self, "values", v)


def pitch_probability(wave: WaveSignal, cfg: StftConfig | None = None) -> PitchProbMatrix:
    """Frame-wise pitch salience from MIDI filter-bank energies.

    Each frame's energies are scaled by their own maximum and clamped to
    [eps, 1 - eps]; frames whose peak energy falls under a silence floor
    get the minimum probability everywhere.
    """
    if cfg is None:
        cfg = StftConfig()
    bank = midi_filter_bank(cfg)
    energy = np.abs(stft(wave, cfg)) @ bank.weights.T
    peaks = energy.max(axis=1, keepdims=True)
    voiced = peaks >= SILENCE_ENERGY
    scaled = np.divide(energy, peaks, out=np.zeros_like(energy), where=voiced)
    values = np.clip(np.where(voiced, scaled, 0.0), PROB_EPS, 1.0 - PROB_EPS)
    return PitchProbMatrix(values, cfg.frame_shift / cfg.sample_rate)


def pitch_cross_entropy(probs: PitchProbMatrix, roll: PianoRoll,
                        weight_by_velocity: bool = False) -> float:
    """Multi-hot cross-entropy of note activity under the pitch estimate.

    CE = -(1/N) sum_n sum_d x[n, d] * ln p[n, d], with x the binarized
    (or velocity-weighted) roll.  When the two inputs disagree on frame
    count both are truncated to the shorter and a warning is emitted.
    """
    n = min(probs.values.shape[0], roll.n_frames)
    if probs.values.shape[0] != roll.n_frames:
        warnings.warn(
            f"frame counts differ (probs {probs.values.shape[0]}, roll "
            f"{roll.n_frames}); truncating to {n}", stacklevel=2)
    if n == 0:
        raise ValueError("no overlapping frames to score")
    x = roll.values[:n]
    if not weight_by_velocity:
        x = (x > 0).astype(np.float64)
    return float(-(x * np.log(probs.values[:n])).sum() / n)


# --- listening-test statistics ------------------------------------------------


@dataclass(frozen=True)
class ScoreRecord:
    system: str
    sample_id: str
    listener_id: str
    score: int


@dataclass(frozen=True)
class ScoreTable:
    records: tuple

    def __post_init__(self):
        for rec in self.records:
            if not 1 <= rec.score <= 5:
                raise ValueError(f"score {rec.score} outside 1..5")

    def systems(self):
        return sorted({rec.system for rec in self.records})

    def scores_for(self, system):
        return [rec.score for rec in self.records if rec.system == system]


def load_scores_csv(path) -> ScoreTable:
    """Read a listening-test CSV with header system,sample_id,listener_id,score."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FileFormatError(f"{path}: empty file") from None
        expected = ["system", "sample_id", "listener_id", "score"]
        if [h.strip() for h in header] != expected:
            raise FileFormatError(
                f"{path}: header must be {','.join(expected)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 4:
                raise FileFormatError(f"{path}: line {lineno}: expected 4 fields, "
                                      f"got {len(row)}")
            system, sample_id, listener_id, score_text = (c.strip() for c in row)
            try:
                score = int(score_text)
            except ValueError:
                raise FileFormatError(f"{path}: line {lineno}: score "
                                      f"{score_text!r} is not an integer") from None
            if not 1 <= score <= 5:
                raise FileFormatError(f"{path}: line {lineno}: score {score} "
                                      f"outside 1..5")
            records.append(ScoreRecord(system, sample_id, listener_id, score))
    return ScoreTable(tuple(records))


def _midranks(values):
    """Ranks 1..n with ties sharing the mean of their rank positions."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_two_sided(n_a, n_b, u_obs):
    """Tie-free exact p by enumerating all rank assignments to group a."""
    n = n_a + n_b
    offset = n_a * (n_a + 1) // 2
    total = 0
    at_most = 0
    at_least = 0
    for combo in combinations(range(1, n + 1), n_a):
        u = sum(combo) - offset
        total += 1
        at_most += u <= u_obs
        at_least += u >= u_obs
    return min(1.0, 2.0 * min(at_most / total, at_least / total))


def mann_whitney_u(a, b):
    """Two-sided Mann-Whitney U test.

    Returns (U of the first sample, p).  With n_a + n_b <= 12 and no
    ties anywhere the p-value is exact by enumeration; otherwise it uses
    the normal approximation with midranks, tie-corrected variance, and
    a 0.5 continuity correction.
    """
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    if not a or not b:
        raise ValueError("both samples must be non-empty")
    n_a, n_b = len(a), len(b)
    combined = np.array(a + b)
    ranks = _midranks(combined)
    u_a = float(ranks[:n_a].sum() - n_a * (n_a + 1) / 2.0)

    has_ties = len(np.unique(combined)) < len(combined)
    if n_a + n_b <= EXACT_LIMIT and not has_ties:
        return u_a, _exact_two_sided(n_a, n_b, round(u_a))

    n = n_a + n_b
    _, counts = np.unique(combined, return_counts=True)
    tie_term = float((counts ** 3 - counts).sum())
    variance = n_a * n_b / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if variance <= 0:
        return u_a, 1.0  # all observations identical
    z = (abs(u_a - n_a * n_b / 2.0) - 0.5) / math.sqrt(variance)
    z = max(z, 0.0)
    return u_a, min(1.0, math.erfc(z / math.sqrt(2.0)))


def holm_bonferroni(p_values, alpha: float = 0.05):
    """Step-down Holm correction.

    Returns (reject flags, adjusted p-values), both in input order.  The
    sorted p-values are rejected while p_(i) <= alpha / (m - i) for
    0-based i, stopping at the first failure; adjusted values are the
    running maximum of (m - i) * p_(i), capped at 1.
    """
    p_values = [float(p) for p in p_values]
    for p in p_values:
        if not 0.0 <= p <= 1.0 or math.isnan(p):
            raise ValueError(f"p-value {p} outside [0, 1]")
    m = len(p_values)
    if m == 0:
        return [], []
    order = sorted(range(m), key=lambda i: p_values[i])
    reject = [False] * m
    adjusted = [0.0] * m
    running = 0.0
    still_rejecting = True
    for rank, idx in enumerate(order):
        p = p_values[idx]
        running = max(running, (m - rank) * p)
        adjusted[idx] = min(1.0, running)
        if still_rejecting and p <= alpha / (m - rank):
            reject[idx] = True
        else:
            still_rejecting = False
    return reject, adjusted


@dataclass(frozen=True)
class SignificanceMatrix:
    systems: tuple
    u_stats: np.ndarray
    p_raw: np.ndarray
    p_adjusted: np.ndarray
    significant: np.ndarray


def significance_matrix(table: ScoreTable, alpha: float = 0.05) -> SignificanceMatrix:
    """Pairwise Mann-Whitney U over pooled ratings, Holm-corrected jointly.

    Pairs are ordered by sorted system name; the matrices are symmetric
    with an all-False diagonal.
    """
    systems = table.systems()
    if len(systems) < 2:
        raise ValueError("need at least two systems to compare")
    pools = {s: table.scores_for(s) for s in systems}
    for s, pool in pools.items():
        if not pool:
            raise ValueError(f"system {s!r} has no scores")
    k = len(systems)
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    u_stats = np.full((k, k), np.nan)
    p_raw = np.ones((k, k))
    raw_list = []
    for i, j in pairs:
        u, p = mann_whitney_u(pools[systems[i]], pools[systems[j]])
        u_stats[i, j] = u_stats[j, i] = u
        p_raw[i, j] = p_raw[j, i] = p
        raw_list.append(p)
    reject, adjusted = holm_bonferroni(raw_list, alpha)
    p_adj = np.ones((k, k))
    significant = np.zeros((k, k), dtype=bool)
    for (i, j), rej, adj in zip(pairs, reject, adjusted):
        p_adj[i, j] = p_adj[j, i] = adj
        significant[i, j] = significant[j, i] = rej
    return SignificanceMatrix(tuple(systems), u_stats, p_raw, p_adj, significant)


def mos_summary(table: ScoreTable):
    """Per-system score summaries sorted by system name.

    Returns a list of dicts with count, mean, median, and quartiles
    (linear interpolation).
    """
    systems = table.systems()
    if not systems:
        raise ValueError("score table is empty")
    out = []
    for system in systems:
        scores = np.array(table.scores_for(system), dtype=np.float64)
        out.append({
            "system": system,
            "count": int(scores.size),
            "mean": float(scores.mean()),
            "median": float(np.median(scores)),
            "q1": float(np.percentile(scores, 25)),
            "q3": float(np.percentile(scores, 75)),
        })
    return out
