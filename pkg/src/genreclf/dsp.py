"""Framing, spectra, autocorrelation, and note-analysis primitives.

Everything here is a pure function over immutable inputs; frames and
spectra can be processed in parallel freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import AudioBuffer
from .errors import DegenerateInput, InvalidParams, NoPeaksFound

WINDOW_KINDS = ("rectangular", "hann")


@dataclass(frozen=True)
class FrameSequence:
    """Windowed analysis frames: matrix of shape (num_frames, frame_len)."""

    frames: np.ndarray
    frame_len: int
    hop: int
    window: str

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class PowerSpectrum:
    """One-sided power spectrum P(k) = Re^2[X(k)] + Im^2[X(k)]."""

    bins: np.ndarray
    n_fft: int
    bin_width_hz: float

    @property
    def num_bins(self) -> int:
        return self.bins.size


def window_coefficients(kind: str, length: int) -> np.ndarray:
    if kind == "rectangular":
        return np.ones(length)
    if kind == "hann":
        return np.hanning(length)
    raise InvalidParams(f"unknown window kind {kind!r}")


def frame_signal(
    signal: AudioBuffer | np.ndarray,
    frame_len: int,
    hop: int,
    window: str = "hann",
) -> FrameSequence:
    """Slice a signal into overlapping windowed frames.

    Frame i covers samples [i*hop, i*hop + frame_len); the number of frames
    is floor((n - frame_len) / hop) + 1, or zero for signals shorter than
    one frame.
    """
    if hop < 1 or frame_len < 2:
        raise InvalidParams("need hop >= 1 and frame_len >= 2")
    x = signal.samples if isinstance(signal, AudioBuffer) else np.asarray(signal, dtype=np.float64)
    n = x.size
    if n < frame_len:
        frames = np.empty((0, frame_len))
    else:
        num = (n - frame_len) // hop + 1
        view = np.lib.stride_tricks.sliding_window_view(x, frame_len)[:: hop][:num]
        frames = view * window_coefficients(window, frame_len)
    return FrameSequence(frames=frames, frame_len=frame_len, hop=hop, window=window)


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def power_spectrum(
    frame: np.ndarray, zero_pad_to: int, sample_rate_hz: int = 22050
) -> PowerSpectrum:
    """Squared-magnitude one-sided DFT of a zero-padded frame.

    The transform length must be a power of two no shorter than the frame;
    zero padding refines the bin grid without adding information.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if not _is_pow2(zero_pad_to) or zero_pad_to < frame.size:
        raise InvalidParams("zero_pad_to must be a power of two >= frame length")
    spec = np.fft.rfft(frame, n=zero_pad_to)
    bins = spec.real**2 + spec.imag**2
    return PowerSpectrum(bins=bins, n_fft=zero_pad_to, bin_width_hz=sample_rate_hz / zero_pad_to)


def autocorrelation(frame: np.ndarray) -> np.ndarray:
    """Biased autocorrelation r(m) = (1/N) sum_n x(n+|m|) x(n), m = 0..N-1.

    r(0) equals the frame's mean-square energy.
    """
    x = np.asarray(frame, dtype=np.float64)
    if x.size < 1:
        raise InvalidParams("frame must be non-empty")
    return np.correlate(x, x, mode="full")[x.size - 1 :] / x.size


def _reflect_indices(idx: np.ndarray, n: int) -> np.ndarray:
    # Mirror without repeating the edge sample; period 2n-2.
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    m = np.mod(idx, period)
    return np.minimum(m, period - m)


def envelope(signal: np.ndarray, window_len: int) -> np.ndarray:
    """Centered moving average of |x| with reflection padding at the edges."""
    if window_len < 1:
        raise InvalidParams("window_len must be >= 1")
    x = np.abs(np.asarray(signal, dtype=np.float64))
    n = x.size
    if n == 0:
        return x
    if window_len == 1:
        return x.copy()
    left = (window_len - 1) // 2
    right = window_len - 1 - left
    idx = np.arange(-left, n + right)
    padded = x[_reflect_indices(idx, n)]
    kernel_sums = np.cumsum(np.concatenate(([0.0], padded)))
    return (kernel_sums[window_len:] - kernel_sums[:-window_len]) / window_len


def _local_maxima(env: np.ndarray) -> np.ndarray:
    if env.size < 3:
        return np.empty(0, dtype=np.int64)
    interior = (env[1:-1] > env[:-2]) & (env[1:-1] > env[2:])
    return np.nonzero(interior)[0] + 1


def adaptive_peaks(env: np.ndarray, target_peak_count: int, max_iters: int = 32) -> np.ndarray:
    """Pick envelope peaks by bisecting a threshold toward a target count.

    The threshold starts at half the envelope maximum and is bisected until
    the number of local maxima above it lands within +-20% of the target,
    or max_iters passes; whichever iterate came closest wins. Returned
    indices are strictly increasing.
    """
    env = np.asarray(env, dtype=np.float64)
    if env.size == 0 or target_peak_count < 1:
        raise InvalidParams("need a non-empty envelope and target_peak_count >= 1")
    candidates = _local_maxima(env)
    if candidates.size == 0:
        raise NoPeaksFound("envelope is flat or has no interior local maxima")

    values = env[candidates]
    top = float(np.max(env))
    lo_count = int(np.ceil(0.8 * target_peak_count))
    hi_count = int(np.floor(1.2 * target_peak_count))

    lo, hi = 0.0, top
    threshold = 0.5 * top
    best: np.ndarray | None = None
    best_gap = None
    for _ in range(max_iters):
        picked = candidates[values > threshold]
        count = picked.size
        gap = abs(count - target_peak_count)
        if best_gap is None or gap <= best_gap:
            best, best_gap = picked, gap
        if lo_count <= count <= hi_count:
            return picked
        if count > hi_count:
            lo = threshold
        else:
            hi = threshold
        threshold = 0.5 * (lo + hi)
    return best if best is not None else candidates


def dominant_frequency(
    signal: np.ndarray, sample_rate_hz: int, pad_factor: int = 4
) -> float:
    """Frequency of the strongest spectral peak, in Hz.

    The mean is removed (a dominant DC bin would swamp peak picking), the
    signal is zero-padded to pad_factor times its length rounded up to a
    power of two, and the argmax bin is refined by parabolic interpolation
    over the spectral magnitude of the peak and its neighbors.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.size < 2 or pad_factor < 1:
        raise InvalidParams("need signal length >= 2 and pad_factor >= 1")
    x = x - np.mean(x)
    if not np.any(np.abs(x) > 1e-14 * max(1.0, float(np.max(np.abs(signal))))):
        raise DegenerateInput("signal is constant; no dominant frequency")

    n_fft = next_pow2(x.size * pad_factor)
    spec = power_spectrum(x, n_fft, sample_rate_hz)
    bins = spec.bins
    k = int(np.argmax(bins))
    if bins[k] == 0.0:
        raise DegenerateInput("spectrum is identically zero")

    delta = 0.0
    if 0 < k < bins.size - 1:
        a, b, c = np.sqrt(bins[k - 1 : k + 2])
        denom = a - 2.0 * b + c
        if denom != 0.0:
            delta = float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))
    return (k + delta) * spec.bin_width_hz
