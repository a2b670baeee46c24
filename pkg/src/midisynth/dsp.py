"""Spectral processing: filter banks, STFT, features, Griffin-Lim, losses.

Everything runs on float64 numpy.  The STFT uses a periodic Hann window,
hop-aligned frames starting at n * frame_shift, right zero padding up to
the FFT size, and a one-sided spectrum.  The inverse is weighted
overlap-add normalized by the summed squared window, floored at 1e-8, so
reconstruction is exact wherever the window sum is healthy; the first
few samples of a Hann-analyzed signal carry almost no window energy and
come back attenuated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, SampleRateMismatch

MAG_FLOOR = 1e-5
_WOLA_FLOOR = 1e-8


@dataclass(frozen=True)
class StftConfig:
    sample_rate: int = 24000
    frame_length: int = 1200
    frame_shift: int = 288
    fft_size: int = 2048
    window: str = "hann"

    def __post_init__(self):
        if min(self.sample_rate, self.frame_length, self.frame_shift) <= 0:
            raise ValueError("sample_rate, frame_length, frame_shift must be positive")
        if self.frame_shift > self.frame_length:
            raise ValueError("frame_shift may not exceed frame_length")
        if self.fft_size < self.frame_length:
            raise ValueError("fft_size must be at least frame_length")
        if self.window not in ("hann", "rectangular"):
            raise ValueError(f"unknown window {self.window!r}")

    @property
    def n_bins(self):
        return self.fft_size // 2 + 1


@dataclass(frozen=True)
class WaveSignal:
    """A mono waveform with its sample rate.

    Samples are float64; the canonical pipeline keeps them within
    [-1, 1] but intermediates (inverse transforms, unnormalized
    reconstructions) may exceed that, so no bound is enforced here.
    """

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {s.shape}")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.shape[0]


@dataclass(frozen=True)
class FeatureMatrix:
    """Frame-rate features: values is (N, D), kind names the feature space."""

    values: np.ndarray
    kind: str
    frame_shift: float
    sample_rate: float

    KINDS = ("mel-fb", "midi-fb", "linear-spec", "piano-roll")

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature matrix contains non-finite entries")
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if not (self.frame_shift > 0 and self.sample_rate > 0):
            raise ValueError("frame_shift and sample_rate must be positive")
        object.__setattr__(self, "values", v)

    @property
    def n_frames(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class FilterBank:
    """Triangular filters over FFT bins: weights is (n_filters, n_bins)."""

    weights: np.ndarray
    center_freqs: np.ndarray
    kind: str  # "midi" or "mel"

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        object.__setattr__(self, "center_freqs",
                           np.asarray(self.center_freqs, dtype=np.float64))

    @property
    def feature_kind(self):
        return {"midi": "midi-fb", "mel": "mel-fb"}[self.kind]


def midi_center_freq(d) -> float:
    """Equal-tempered frequency of MIDI note d, with A4 = note 69 = 440 Hz."""
    d = int(d)
    if not 0 <= d <= 127:
        raise ValueError(f"MIDI note {d} outside 0..127")
    return 440.0 * 2.0 ** ((d - 69) / 12.0)


def _triangle_rows(bin_freqs, lefts, centers, rights, nyquist=None):
    """Stack triangular rows peaking at 1.0 on each center.

    A degenerate edge (left == center or right == center) drops that
    slope, leaving a half triangle.  Centers above nyquist produce
    all-zero rows.
    """
    rows = np.zeros((len(centers), len(bin_freqs)))
    for k, (lo, c, hi) in enumerate(zip(lefts, centers, rights)):
        if nyquist is not None and c > nyquist:
            continue
        row = rows[k]
        if lo < c:
            m = (bin_freqs > lo) & (bin_freqs < c)
            row[m] = (bin_freqs[m] - lo) / (c - lo)
        if hi > c:
            m = (bin_freqs > c) & (bin_freqs < hi)
            row[m] = (hi - bin_freqs[m]) / (hi - c)
        row[bin_freqs == c] = 1.0
    return rows


def midi_filter_bank(cfg: StftConfig) -> FilterBank:
    """128 triangular filters centered on the equal-tempered MIDI pitches.

    Each filter reaches zero at its neighbors' centers.  At low indices
    the triangles are narrower than an FFT bin, so many rows have no bin
    under their support and stay all-zero; rows whose center exceeds the
    Nyquist frequency are all-zero by construction.
    """
    bin_freqs = np.arange(cfg.n_bins) * cfg.sample_rate / cfg.fft_size
    centers = np.array([midi_center_freq(d) for d in range(128)])
    lefts = np.concatenate(([centers[0]], centers[:-1]))
    rights = np.concatenate((centers[1:], [centers[-1]]))
    weights = _triangle_rows(bin_freqs, lefts, centers, rights,
                             nyquist=cfg.sample_rate / 2)
    return FilterBank(weights, centers, "midi")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filter_bank(cfg: StftConfig, n_filters: int = 80) -> FilterBank:
    """Triangular filters on a mel-spaced grid from 0 Hz to Nyquist."""
    if n_filters < 1:
        raise ValueError("n_filters must be positive")
    bin_freqs = np.arange(cfg.n_bins) * cfg.sample_rate / cfg.fft_size
    edges = mel_to_hz(np.linspace(0.0, float(hz_to_mel(cfg.sample_rate / 2)),
                                  n_filters + 2))
    weights = _triangle_rows(bin_freqs, edges[:-2], edges[1:-1], edges[2:])
    return FilterBank(weights, edges[1:-1], "mel")


# --- transforms ---------------------------------------------------------


def _window_values(cfg: StftConfig) -> np.ndarray:
    n = cfg.frame_length
    if cfg.window == "rectangular":
        return np.ones(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_count(n_samples: int, frame_shift: int) -> int:
    return -(-n_samples // frame_shift) if n_samples > 0 else 0


def _frame_signal(x, cfg):
    n = frame_count(len(x), cfg.frame_shift)
    if n == 0:
        return np.zeros((0, cfg.frame_length))
    padded = np.zeros((n - 1) * cfg.frame_shift + cfg.frame_length)
    padded[: len(x)] = x
    idx = np.arange(cfg.frame_length)[None, :] + \
        cfg.frame_shift * np.arange(n)[:, None]
    return padded[idx]


def stft(wave: WaveSignal, cfg: StftConfig) -> np.ndarray:
    """One-sided STFT, shape (N, fft_size // 2 + 1) with N = ceil(T / shift)."""
    if wave.sample_rate != cfg.sample_rate:
        raise SampleRateMismatch(
            f"signal at {wave.sample_rate} Hz, config expects {cfg.sample_rate} Hz")
    frames = _frame_signal(wave.samples, cfg) * _window_values(cfg)
    return np.fft.rfft(frames, n=cfg.fft_size, axis=1)


def istft(spec: np.ndarray, cfg: StftConfig) -> WaveSignal:
    """Weighted overlap-add inverse; output length is exactly N * frame_shift."""
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[1] != cfg.n_bins:
        raise ValueError(f"spectrogram must be (N, {cfg.n_bins}), got {spec.shape}")
    n = spec.shape[0]
    if n == 0:
        return WaveSignal(np.zeros(0), cfg.sample_rate)
    w = _window_values(cfg)
    frames = np.fft.irfft(spec, n=cfg.fft_size, axis=1)[:, : cfg.frame_length] * w
    total = (n - 1) * cfg.frame_shift + cfg.frame_length
    out = np.zeros(total)
    den = np.zeros(total)
    for i in range(n):
        lo = i * cfg.frame_shift
        out[lo : lo + cfg.frame_length] += frames[i]
        den[lo : lo + cfg.frame_length] += w * w
    out /= np.maximum(den, _WOLA_FLOOR)
    return WaveSignal(out[: n * cfg.frame_shift], cfg.sample_rate)


def extract_features(wave: WaveSignal, bank: FilterBank, cfg: StftConfig) -> FeatureMatrix:
    """Log10 filter-bank energies of the magnitude spectrogram, floored at 1e-5."""
    if bank.weights.shape[1] != cfg.n_bins:
        raise ValueError(
            f"filter bank built for {bank.weights.shape[1]} bins, config has {cfg.n_bins}")
    mag = np.abs(stft(wave, cfg))
    values = np.log10(np.maximum(mag @ bank.weights.T, MAG_FLOOR))
    return FeatureMatrix(values, bank.feature_kind,
                         cfg.frame_shift / cfg.sample_rate, cfg.sample_rate)


def linear_spectrogram(wave: WaveSignal, cfg: StftConfig) -> FeatureMatrix:
    """Log10 magnitude spectrogram as a FeatureMatrix of kind linear-spec."""
    values = np.log10(np.maximum(np.abs(stft(wave, cfg)), MAG_FLOOR))
    return FeatureMatrix(values, "linear-spec",
                         cfg.frame_shift / cfg.sample_rate, cfg.sample_rate)


def griffin_lim(magnitude: np.ndarray, cfg: StftConfig, n_iters: int = 60,
                return_history: bool = False):
    """Reconstruct a waveform from a magnitude spectrogram.

    Phase starts at zero; each iteration resynthesizes with the current
    phase and takes the phase of the re-analysis.  The returned history
    holds the spectral consistency error || |STFT(x_i)| - M ||_F per
    iteration, which is non-increasing up to normalization-floor noise.
    The final waveform is peak-normalized to 0.99 only if it exceeds
    unit range.
    """
    magnitude = np.asarray(magnitude, dtype=np.float64)
    if magnitude.ndim != 2 or magnitude.shape[1] != cfg.n_bins:
        raise ValueError(f"magnitude must be (N, {cfg.n_bins}), got {magnitude.shape}")
    if magnitude.size and magnitude.min() < 0:
        raise ValueError("magnitude entries must be non-negative")
    if n_iters < 1:
        raise ValueError("n_iters must be at least 1")
    phase = np.zeros_like(magnitude)
    history = []
    x = istft(magnitude * np.exp(1j * phase), cfg)
    for _ in range(n_iters):
        spec = stft(x, cfg)
        history.append(float(np.linalg.norm(np.abs(spec) - magnitude)))
        phase = np.angle(spec)
        x = istft(magnitude * np.exp(1j * phase), cfg)
    samples = x.samples
    peak = np.abs(samples).max() if samples.size else 0.0
    if peak > 1.0:
        samples = samples * (0.99 / peak)
    out = WaveSignal(samples, cfg.sample_rate)
    return (out, history) if return_history else out


def pseudo_inverse_magnitude(feat: FeatureMatrix, bank: FilterBank,
                             cfg: StftConfig) -> np.ndarray:
    """Estimate a linear magnitude spectrogram from filter-bank features.

    Inverts the log10 compression, then maps filter energies back to
    bins with the Moore-Penrose pseudo-inverse of the bank, clipped to
    non-negative values.
    """
    if feat.dim != bank.weights.shape[0]:
        raise ValueError(
            f"features have {feat.dim} dims, bank has {bank.weights.shape[0]} filters")
    linear = 10.0 ** feat.values
    mag = linear @ np.linalg.pinv(bank.weights.T)
    return np.clip(mag, 0.0, None)


# --- multi-resolution STFT loss ------------------------------------------


def default_loss_resolutions(sample_rate: int = 24000):
    """Three analysis settings spanning coarse to fine time resolution."""
    make = lambda n, s: StftConfig(sample_rate=sample_rate, frame_length=n,
                                   frame_shift=s, fft_size=n)
    return (make(512, 128), make(1024, 256), make(2048, 512))


def _rfft_adjoint_frames(grad_spec, cfg):
    """Adjoint of frame-wise rfft for real inputs of length frame_length."""
    g = grad_spec.copy()
    g[:, 1:-1] *= 0.5
    if cfg.fft_size % 2 != 0:
        g[:, -1] *= 0.5  # odd sizes have no lone Nyquist bin; every bin pairs up
    full = cfg.fft_size * np.fft.irfft(g, n=cfg.fft_size, axis=1)
    return full[:, : cfg.frame_length]


def _single_resolution_loss(pred, target, cfg):
    spec_p = stft(pred, cfg)
    mag_p = np.maximum(np.abs(spec_p), MAG_FLOOR)
    mag_t = np.maximum(np.abs(stft(target, cfg)), MAG_FLOOR)

    diff = mag_p - mag_t
    sc_num = np.linalg.norm(diff)
    sc_den = np.linalg.norm(mag_t)
    log_diff = np.log(mag_p) - np.log(mag_t)
    loss = sc_num / sc_den + np.abs(log_diff).mean()

    grad_mag = np.sign(log_diff) / (log_diff.size * mag_p)
    if sc_num > 0:
        grad_mag = grad_mag + diff / (sc_num * sc_den)
    grad_mag = np.where(np.abs(spec_p) > MAG_FLOOR, grad_mag, 0.0)
    denom = np.maximum(np.abs(spec_p), np.finfo(np.float64).tiny)
    grad_spec = grad_mag * (spec_p / denom)

    frames = _rfft_adjoint_frames(grad_spec, cfg) * _window_values(cfg)
    n = frames.shape[0]
    total = (n - 1) * cfg.frame_shift + cfg.frame_length if n else 0
    grad = np.zeros(total)
    for i in range(n):
        lo = i * cfg.frame_shift
        grad[lo : lo + cfg.frame_length] += frames[i]
    return loss, grad[: len(pred)]


def mr_stft_loss(pred: WaveSignal, target: WaveSignal, resolutions=None):
    """Multi-resolution spectral loss and its gradient w.r.t. pred samples.

    Per resolution: spectral convergence ||Mp - Mt||_F / ||Mt||_F plus
    the mean absolute difference of natural-log magnitudes, both on
    floored magnitudes.  Returns (loss, grad) averaged over resolutions.
    """
    if resolutions is None:
        resolutions = default_loss_resolutions(int(pred.sample_rate))
    if len(resolutions) == 0:
        raise ValueError("need at least one resolution")
    if len(pred) != len(target):
        raise LengthMismatch(f"pred has {len(pred)} samples, target {len(target)}")
    if pred.sample_rate != target.sample_rate:
        raise SampleRateMismatch(
            f"pred at {pred.sample_rate} Hz, target at {target.sample_rate} Hz")
    for cfg in resolutions:
        if cfg.sample_rate != pred.sample_rate:
            raise SampleRateMismatch(
                f"resolution at {cfg.sample_rate} Hz, signals at {pred.sample_rate} Hz")
    total_loss = 0.0
    total_grad = np.zeros(len(pred))
    for cfg in resolutions:
        loss, grad = _single_resolution_loss(pred, target, cfg)
        total_loss += loss
        total_grad += grad
    r = len(resolutions)
    return total_loss / r, total_grad / r
