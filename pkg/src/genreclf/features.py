"""Per-frame audio descriptors and per-clip aggregation.

Implements the frame-level descriptor set used by the classifier: pitch
via the autocorrelation sequence, temporal energy, spectral-flatness
tonality, linear and Bark-weighted spectral centroids, harmonic-template
fundamental estimation, mel-cepstral coefficients, zero crossings, chroma,
and spectral contrast. `clip_features` aggregates them over time into the
fixed-length vector the classifier consumes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .audio_io import AudioBuffer
from .dsp import FrameSequence, PowerSpectrum, autocorrelation, frame_signal, power_spectrum
from .errors import DegenerateInput, InvalidParams, TooShort, Unvoiced

# Zwicker's 24 critical bands (edge frequencies in Hz).
ZWICKER_BARK_EDGES_HZ = (
    0.0, 100.0, 200.0, 300.0, 400.0, 510.0, 630.0, 770.0, 920.0, 1080.0,
    1270.0, 1480.0, 1720.0, 2000.0, 2320.0, 2700.0, 3150.0, 3700.0, 4400.0,
    5300.0, 6400.0, 7700.0, 9500.0, 12000.0, 15500.0,
)

# Octave-ish split of the analysis band into the 7 contrast bands.
CONTRAST_BAND_EDGES_HZ = (0.0, 200.0, 400.0, 800.0, 1600.0, 3200.0, 6400.0, 11025.0)

HARMONIC_COUNT = 10
HARMONIC_TUNING_WINDOW = 0.03   # +-3% search window around each harmonic
HARMONIC_TUNING_SIGMA = 0.01    # relative mistuning scale of the Gaussian weight


@dataclass(frozen=True)
class FeatureConfig:
    """Extraction parameters; defaults match the 22050 Hz pipeline."""

    sample_rate_hz: int = 22050
    frame_len: int = 2048
    hop: int = 512
    n_fft: int = 2048
    n_mels: int = 128
    n_mfcc: int = 20
    fmin_hz: float = 0.0
    fmax_hz: float = 11025.0
    sfm_db_max: float = -60.0
    pitch_min_hz: float = 50.0
    pitch_max_hz: float = 2000.0
    f0_grid_step_hz: float = 1.0
    bark_edges_hz: tuple = ZWICKER_BARK_EDGES_HZ
    eps: float = 1e-10

    def __post_init__(self):
        object.__setattr__(self, "bark_edges_hz", tuple(float(e) for e in self.bark_edges_hz))
        self.validate()

    def validate(self):
        if self.sample_rate_hz <= 0:
            raise InvalidParams("sample_rate_hz must be positive")
        if not (0 <= self.fmin_hz < self.fmax_hz <= self.sample_rate_hz / 2):
            raise InvalidParams("need 0 <= fmin < fmax <= sample_rate/2")
        if not (0 < self.pitch_min_hz < self.pitch_max_hz):
            raise InvalidParams("need 0 < pitch_min < pitch_max")
        if self.sfm_db_max >= 0:
            raise InvalidParams("sfm_db_max must be negative")
        if self.n_mfcc > self.n_mels:
            raise InvalidParams("n_mfcc cannot exceed n_mels")
        if self.eps <= 0:
            raise InvalidParams("eps must be positive")
        if self.f0_grid_step_hz <= 0:
            raise InvalidParams("f0_grid_step_hz must be positive")
        edges = self.bark_edges_hz
        if edges[0] != 0.0 or any(a >= b for a, b in zip(edges, edges[1:])):
            raise InvalidParams("bark_edges_hz must be strictly ascending and start at 0")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidParams(f"unknown feature config keys: {sorted(unknown)}")
        return cls(**d)

    def fingerprint(self) -> str:
        canon = ";".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class FrameFeatures:
    """Descriptors for one analysis frame."""

    pitch_hz: float
    energy: float
    tonality: float
    centroid_linear: float
    centroid_bark: float
    harmonicity_ratio: float
    f0_hz: float
    mfcc: np.ndarray
    zcr: float
    chroma: np.ndarray
    spectral_contrast: np.ndarray


@dataclass(frozen=True)
class ClipFeatureVector:
    """Fixed-length per-clip vector: time means of frame descriptors."""

    values: np.ndarray
    mode: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise InvalidParams("clip feature vector must be finite")
        object.__setattr__(self, "values", values)


# -- scalar descriptors --------------------------------------------------------

def pitch_acs(
    frame: np.ndarray, sample_rate_hz: int, pitch_min_hz: float, pitch_max_hz: float
) -> float:
    """Pitch from the peak of the biased autocorrelation sequence.

    The winning lag is the strongest local maximum of r(m) inside
    [rate/pitch_max, rate/pitch_min] (local maxima only: the decaying
    main lobe near lag 0 otherwise wins for low pitches), refined by
    parabolic interpolation. Raises Unvoiced when the frame is silent or
    the best in-range peak is below 0.1 * r(0).
    """
    x = np.asarray(frame, dtype=np.float64)
    r = autocorrelation(x)
    n = x.size
    lag_min = max(1, int(np.ceil(sample_rate_hz / pitch_max_hz)))
    lag_max = min(n - 1, int(np.floor(sample_rate_hz / pitch_min_hz)))
    if lag_min > lag_max:
        raise InvalidParams("pitch lag range is empty for this frame length")
    if r[0] <= 0.0:
        raise Unvoiced("zero-energy frame")

    lags = np.arange(lag_min, lag_max + 1)
    seg = r[lag_min : lag_max + 1]
    left = r[lag_min - 1 : lag_max]
    right = r[lag_min + 1 : lag_max + 2] if lag_max + 1 < n else np.append(r[lag_min + 1 :], -np.inf)
    is_peak = (seg > left) & (seg > right)
    if np.any(is_peak):
        cand = lags[is_peak]
        m = int(cand[np.argmax(seg[is_peak])])
    else:
        m = int(lags[np.argmax(seg)])

    if r[m] < 0.1 * r[0]:
        raise Unvoiced("no autocorrelation peak above 0.1 * r(0)")

    delta = 0.0
    if 0 < m < n - 1:
        a, b, c = r[m - 1], r[m], r[m + 1]
        denom = a - 2.0 * b + c
        if denom != 0.0:
            delta = float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))
    return sample_rate_hz / (m + delta)


def temporal_energy(frame: np.ndarray) -> float:
    """Mean squared amplitude over the frame."""
    x = np.asarray(frame, dtype=np.float64)
    if x.size == 0:
        raise InvalidParams("frame must be non-empty")
    return float(np.mean(x * x))


def tonality(spec: PowerSpectrum, sfm_db_max: float = -60.0, eps: float = 1e-10) -> float:
    """Tone-like vs noise-like quality in [0, 1] from spectral flatness.

    Flatness is the geometric over arithmetic mean of the power spectrum in
    dB; dividing by the fully-tonal reference level and clamping maps a
    flat spectrum to 0 and a pure tone to 1.
    """
    p = spec.bins + eps
    sfm_db = 10.0 * (np.mean(np.log10(p)) - np.log10(np.mean(p)))
    return float(np.clip(sfm_db / sfm_db_max, 0.0, 1.0))


def spectral_centroid(spec: PowerSpectrum) -> float:
    """Power-weighted mean bin index of the spectrum."""
    total = float(np.sum(spec.bins))
    if total <= 0.0:
        raise DegenerateInput("all-zero spectrum has no centroid")
    k = np.arange(spec.num_bins)
    return float(np.sum(k * spec.bins) / total)


def spectral_centroid_bark(
    spec: PowerSpectrum, bark_edges_hz: tuple = ZWICKER_BARK_EDGES_HZ, sample_rate_hz: int = 22050
) -> float:
    """Band-energy centroid over critical bands, weighted by band widths.

    Band j (1-based) spans (edge[j-1], edge[j]]; the centroid is
    sum(j * width_j * E_j) / sum(width_j * E_j).
    """
    edges = np.asarray(bark_edges_hz, dtype=np.float64)
    if edges[-1] < sample_rate_hz / 2:
        raise InvalidParams("bark edges must cover the spectrum up to Nyquist")
    if float(np.sum(spec.bins)) <= 0.0:
        raise DegenerateInput("all-zero spectrum has no centroid")

    freqs = np.arange(spec.num_bins) * spec.bin_width_hz
    band = np.clip(np.searchsorted(edges[1:], freqs, side="left") + 1, 1, edges.size - 1)
    num_bands = edges.size - 1
    energy = np.zeros(num_bands + 1)
    np.add.at(energy, band, spec.bins)
    widths = np.diff(edges)
    j = np.arange(1, num_bands + 1)
    weighted = widths * energy[1:]
    denom = float(np.sum(weighted))
    if denom <= 0.0:
        raise DegenerateInput("no band energy")
    return float(np.sum(j * weighted) / denom)


class HarmonicGrid:
    """Precomputed harmonic-template windows for fundamental search.

    For every candidate fundamental on the grid, stores the spectrum-bin
    windows around its first harmonics so per-frame evaluation is a gather
    plus segmented reductions.
    """

    def __init__(self, sample_rate_hz: int, n_fft: int, f0_min_hz: float,
                 f0_max_hz: float, grid_step_hz: float):
        bin_width = sample_rate_hz / n_fft
        num_bins = n_fft // 2 + 1
        self.candidates = np.arange(f0_min_hz, f0_max_hz + 0.5 * grid_step_hz, grid_step_hz)

        flat_idx = []
        seg_candidate = []
        seg_weightref = []  # (harmonic order, target freq) per segment
        starts = [0]
        for ci, f0 in enumerate(self.candidates):
            for h in range(1, HARMONIC_COUNT + 1):
                target = h * f0
                if target > sample_rate_hz / 2:
                    break
                lo = int(np.ceil(target * (1.0 - HARMONIC_TUNING_WINDOW) / bin_width))
                hi = int(np.floor(target * (1.0 + HARMONIC_TUNING_WINDOW) / bin_width))
                lo, hi = max(lo, 0), min(hi, num_bins - 1)
                if lo > hi:
                    continue
                flat_idx.extend(range(lo, hi + 1))
                starts.append(len(flat_idx))
                seg_candidate.append(ci)
                seg_weightref.append((h, target))

        self.flat_idx = np.asarray(flat_idx, dtype=np.int64)
        self.seg_starts = np.asarray(starts[:-1], dtype=np.int64)
        self.seg_candidate = np.asarray(seg_candidate, dtype=np.int64)
        self.bin_width = bin_width
        self.seg_orders = np.asarray([h for h, _ in seg_weightref], dtype=np.float64)
        self.seg_targets = np.asarray([t for _, t in seg_weightref], dtype=np.float64)
        # Per-segment bin frequencies for mistuning of the winning bin.
        self.flat_freqs = self.flat_idx * bin_width


def harmonicity(
    spec: PowerSpectrum,
    sample_rate_hz: int,
    f0_min_hz: float = 50.0,
    f0_max_hz: float = 2000.0,
    grid_step_hz: float = 1.0,
    grid: HarmonicGrid | None = None,
) -> tuple[float, float]:
    """Harmonic-template likelihood search for the fundamental.

    Every candidate f0 on the grid is scored by the peak power near each of
    its first 10 harmonics, Gaussian-weighted by relative mistuning and
    down-weighted by harmonic order (the order term breaks the tie that
    otherwise favors subharmonics of a lone tone). Returns the captured
    over total energy ratio and the winning fundamental.
    """
    if grid is None:
        grid = HarmonicGrid(sample_rate_hz, spec.n_fft, f0_min_hz, f0_max_hz, grid_step_hz)
    total = float(np.sum(spec.bins))
    if total <= 0.0:
        raise DegenerateInput("all-zero spectrum has no fundamental")

    gathered = spec.bins[grid.flat_idx]
    seg_max = np.maximum.reduceat(gathered, grid.seg_starts)
    # argmax per segment: first position matching its segment max.
    seg_id = np.zeros(gathered.size, dtype=np.int64)
    seg_id[grid.seg_starts[1:]] = 1
    seg_id = np.cumsum(seg_id)
    hits = np.nonzero(gathered == seg_max[seg_id])[0]
    first_peak = np.empty(seg_max.size, dtype=np.int64)
    first_peak[seg_id[hits[::-1]]] = hits[::-1]
    peak_freq = grid.flat_freqs[first_peak]

    mistune = (peak_freq - grid.seg_targets) / grid.seg_targets
    weight = np.exp(-0.5 * (mistune / HARMONIC_TUNING_SIGMA) ** 2)
    seg_score = seg_max * weight / grid.seg_orders

    scores = np.zeros(grid.candidates.size)
    np.add.at(scores, grid.seg_candidate, seg_score)
    winner = int(np.argmax(scores))
    f0 = float(grid.candidates[winner])

    seg_sum = np.add.reduceat(gathered, grid.seg_starts)
    captured = float(np.sum(seg_sum[grid.seg_candidate == winner]))
    ratio = float(np.clip(captured / total, 0.0, 1.0))
    return ratio, f0


def mel_scale(f_hz):
    """Hz to mel: 2595 * log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(f_hz, dtype=np.float64) / 700.0)


def mel_to_hz(f_mel):
    return 700.0 * (10.0 ** (np.asarray(f_mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(config: FeatureConfig) -> np.ndarray:
    """Triangular unit-area filters, centers equally spaced in mel.

    Shape (n_mels, n_fft/2 + 1); filter m is nonzero only strictly between
    the centers of its neighbors.
    """
    points_mel = np.linspace(
        mel_scale(config.fmin_hz), mel_scale(config.fmax_hz), config.n_mels + 2
    )
    points_hz = mel_to_hz(points_mel)
    bin_freqs = np.arange(config.n_fft // 2 + 1) * (config.sample_rate_hz / config.n_fft)

    lower = points_hz[:-2][:, None]
    center = points_hz[1:-1][:, None]
    upper = points_hz[2:][:, None]
    up = (bin_freqs[None, :] - lower) / (center - lower)
    down = (upper - bin_freqs[None, :]) / (upper - center)
    fb = np.maximum(0.0, np.minimum(up, down))
    fb *= 2.0 / (upper - lower)
    return fb


def _dct_ii_orthonormal(n_out: int, n_in: int) -> np.ndarray:
    k = np.arange(n_out)[:, None]
    m = np.arange(n_in)[None, :]
    mat = np.sqrt(2.0 / n_in) * np.cos(np.pi * k * (2 * m + 1) / (2 * n_in))
    mat[0] /= np.sqrt(2.0)
    return mat


def mfcc(frames: FrameSequence, config: FeatureConfig) -> np.ndarray:
    """Mel-cepstral coefficients per frame, shape (num_frames, n_mfcc).

    Pipeline: power spectrum, triangular mel filterbank, natural log with
    an eps floor, orthonormal DCT-II, keep the first n_mfcc coefficients.
    """
    if config.n_mfcc > config.n_mels:
        raise InvalidParams("n_mfcc cannot exceed n_mels")
    if frames.num_frames == 0:
        return np.empty((0, config.n_mfcc))
    spec = np.fft.rfft(frames.frames, n=config.n_fft, axis=1)
    power = spec.real**2 + spec.imag**2
    mel_energy = power @ mel_filterbank(config).T
    log_mel = np.log(mel_energy + config.eps)
    return log_mel @ _dct_ii_orthonormal(config.n_mfcc, config.n_mels).T


def zcr(frame: np.ndarray) -> float:
    """Half-sum of adjacent sign changes; sign(v) = 1 for v >= 0 else 0."""
    x = np.asarray(frame, dtype=np.float64)
    signs = (x >= 0.0).astype(np.float64)
    return float(0.5 * np.sum(np.abs(np.diff(signs))))


def chroma(spec: PowerSpectrum, sample_rate_hz: int = 22050) -> np.ndarray:
    """Fold bin power onto 12 pitch classes (A440 reference), unit sum."""
    freqs = np.arange(1, spec.num_bins) * spec.bin_width_hz
    power = spec.bins[1:]
    total = float(np.sum(power))
    if total <= 0.0:
        raise DegenerateInput("all-zero spectrum has no chroma")
    classes = np.mod(np.round(12.0 * np.log2(freqs / 440.0)).astype(np.int64), 12)
    out = np.zeros(12)
    np.add.at(out, classes, power)
    return out / total


def spectral_contrast(
    spec: PowerSpectrum, band_edges_hz: tuple = CONTRAST_BAND_EDGES_HZ, eps: float = 1e-10
) -> np.ndarray:
    """Per-band dB gap between top-quintile and bottom-quintile bin powers."""
    if float(np.sum(spec.bins)) <= 0.0:
        raise DegenerateInput("all-zero spectrum has no contrast")
    edges = np.asarray(band_edges_hz, dtype=np.float64)
    freqs = np.arange(spec.num_bins) * spec.bin_width_hz
    out = np.zeros(edges.size - 1)
    for j in range(edges.size - 1):
        last = j == edges.size - 2
        mask = (freqs >= edges[j]) & ((freqs <= edges[j + 1]) if last else (freqs < edges[j + 1]))
        band = np.sort(spec.bins[mask])
        if band.size == 0:
            continue
        q = max(1, int(round(0.2 * band.size)))
        out[j] = 10.0 * (np.log10(np.mean(band[-q:]) + eps) - np.log10(np.mean(band[:q]) + eps))
    return out


# -- per-clip aggregation ------------------------------------------------------

def extended_feature_names(config: FeatureConfig) -> list[str]:
    """Column names of the extended clip vector, in order."""
    names = ["pitch_hz", "energy", "tonality", "centroid_linear", "centroid_bark",
             "harmonicity_ratio", "f0_hz"]
    names += [f"mfcc_{i}" for i in range(config.n_mfcc)]
    names += ["zcr"]
    names += [f"chroma_{i}" for i in range(12)]
    names += [f"contrast_{i}" for i in range(len(CONTRAST_BAND_EDGES_HZ) - 1)]
    return names


def frame_features(
    frame: np.ndarray,
    config: FeatureConfig,
    mfcc_row: np.ndarray,
    grid: HarmonicGrid | None = None,
) -> FrameFeatures:
    """All descriptors for one windowed frame; silent frames yield zeros."""
    spec = power_spectrum(frame, config.n_fft, config.sample_rate_hz)
    try:
        pitch = pitch_acs(frame, config.sample_rate_hz, config.pitch_min_hz, config.pitch_max_hz)
    except Unvoiced:
        pitch = 0.0
    try:
        centroid = spectral_centroid(spec)
        centroid_bark = spectral_centroid_bark(spec, config.bark_edges_hz, config.sample_rate_hz)
        ratio, f0 = harmonicity(
            spec, config.sample_rate_hz, config.pitch_min_hz, config.pitch_max_hz,
            config.f0_grid_step_hz, grid=grid,
        )
        chroma_vec = chroma(spec, config.sample_rate_hz)
        contrast = spectral_contrast(spec, eps=config.eps)
    except DegenerateInput:
        centroid = centroid_bark = ratio = f0 = 0.0
        chroma_vec = np.zeros(12)
        contrast = np.zeros(len(CONTRAST_BAND_EDGES_HZ) - 1)
    return FrameFeatures(
        pitch_hz=pitch,
        energy=temporal_energy(frame),
        tonality=tonality(spec, config.sfm_db_max, config.eps),
        centroid_linear=centroid,
        centroid_bark=centroid_bark,
        harmonicity_ratio=ratio,
        f0_hz=f0,
        mfcc=mfcc_row,
        zcr=zcr(frame),
        chroma=chroma_vec,
        spectral_contrast=contrast,
    )


def clip_features(buf: AudioBuffer, config: FeatureConfig, mode: str = "mfcc_mean") -> ClipFeatureVector:
    """Aggregate per-frame descriptors into one clip vector.

    mfcc_mean: per-coefficient mean of the MFCC matrix across time (the
    classifier's default input). extended: time means of every descriptor,
    concatenated in extended_feature_names order.
    """
    if mode not in ("mfcc_mean", "extended"):
        raise InvalidParams(f"unknown feature mode {mode!r}")
    if buf.sample_rate_hz != config.sample_rate_hz:
        raise InvalidParams(
            f"buffer rate {buf.sample_rate_hz} != pipeline rate {config.sample_rate_hz}"
        )
    frames = frame_signal(buf, config.frame_len, config.hop, "hann")
    if frames.num_frames == 0:
        raise TooShort("buffer yields zero analysis frames")
    coeffs = mfcc(frames, config)
    if mode == "mfcc_mean":
        return ClipFeatureVector(coeffs.mean(axis=0), "mfcc_mean")

    grid = HarmonicGrid(
        config.sample_rate_hz, config.n_fft, config.pitch_min_hz,
        config.pitch_max_hz, config.f0_grid_step_hz,
    )
    rows = [
        frame_features(frames.frames[i], config, coeffs[i], grid=grid)
        for i in range(frames.num_frames)
    ]
    vec = np.concatenate([
        [np.mean([r.pitch_hz for r in rows])],
        [np.mean([r.energy for r in rows])],
        [np.mean([r.tonality for r in rows])],
        [np.mean([r.centroid_linear for r in rows])],
        [np.mean([r.centroid_bark for r in rows])],
        [np.mean([r.harmonicity_ratio for r in rows])],
        [np.mean([r.f0_hz for r in rows])],
        np.mean([r.mfcc for r in rows], axis=0),
        [np.mean([r.zcr for r in rows])],
        np.mean([r.chroma for r in rows], axis=0),
        np.mean([r.spectral_contrast for r in rows], axis=0),
    ])
    return ClipFeatureVector(vec, "extended")
