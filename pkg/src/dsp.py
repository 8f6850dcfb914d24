"""
Signal processing module.

Savitzky-Golay smoothing, normalization, one-sided FFT, STFT spectrograms
and Pan-Tompkins R-peak detection. All functions are pure and operate on
numpy arrays.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal
from src.config import (
    PT_BAND_HZ,
    PT_INTEGRATION_S,
    PT_LEARNING_S,
    PT_REFINE_S,
    PT_REFRACTORY_S,
    SAVGOL_ORDER,
    SAVGOL_WINDOW,
    SPECTROGRAM_SIZE,
    STFT_OVERLAP,
    STFT_WINDOW,
)
from src.logger import get_logger

logger = get_logger(__name__)


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass
class ComplexSpectrum:
    """One-sided spectrum of a real sequence (floor(n/2)+1 bins)."""

    real: np.ndarray
    imag: np.ndarray
    n: int

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.real, self.imag)

    def phase(self) -> np.ndarray:
        return np.arctan2(self.imag, self.real)

    def energy(self) -> float:
        """Parseval energy: sum of |x|^2 recovered from the one-sided bins."""
        power = self.real ** 2 + self.imag ** 2
        weights = np.full(power.shape[-1], 2.0)
        weights[0] = 1.0
        if self.n % 2 == 0:
            weights[-1] = 1.0
        return float(np.sum(power * weights, axis=-1).sum() / self.n)


@dataclass
class Spectrogram:
    """Grayscale magnitude image (rows = frequency, columns = time)."""

    image: np.ndarray
    frames: np.ndarray


# ============================================================================
# SMOOTHING AND NORMALIZATION
# ============================================================================

def savitzky_golay(x: np.ndarray, window: int = SAVGOL_WINDOW, order: int = SAVGOL_ORDER) -> np.ndarray:
    """
    Least-squares polynomial smoothing.

    Edges are taken from the polynomial fitted to the first/last full
    window, evaluated at the edge offsets.

    Raises:
        ValueError: Even window, order >= window or input shorter than window
    """
    x = np.asarray(x, dtype=np.float64)
    if window % 2 == 0:
        raise ValueError(f"Savitzky-Golay window must be odd (got {window})")
    if order >= window:
        raise ValueError(f"polynomial order {order} must be smaller than window {window}")
    if x.shape[-1] < window:
        raise ValueError(f"sequence of length {x.shape[-1]} is shorter than window {window}")

    return signal.savgol_filter(x, window, order, mode="interp", axis=-1)


def zscore(x: np.ndarray) -> np.ndarray:
    """
    Standardize with the population standard deviation.

    Raises:
        ValueError: Fewer than 2 samples or zero standard deviation
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise ValueError("zscore needs at least 2 samples")

    centered = x - x.mean()
    std = np.sqrt(np.mean(centered ** 2))
    if std == 0 or not np.isfinite(std):
        raise ValueError("zscore of a constant sequence is undefined")
    return centered / std


def mean_subtract(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x - x.mean()


# ============================================================================
# FREQUENCY DOMAIN
# ============================================================================

def fft_real_imag(x: np.ndarray) -> ComplexSpectrum:
    """
    One-sided DFT of a real sequence along its last axis.

    Works for any length (pocketfft handles prime sizes such as 257).
    Leading axes are treated as a batch.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 1:
        raise ValueError("fft of an empty sequence")

    n = x.shape[-1]
    spectrum = np.fft.rfft(x, axis=-1)
    imag = spectrum.imag.copy()
    # exact zeros forced by real-input symmetry
    imag[..., 0] = 0.0
    if n % 2 == 0:
        imag[..., -1] = 0.0
    return ComplexSpectrum(real=spectrum.real.copy(), imag=imag, n=n)


def stft_magnitudes(x: np.ndarray, window: int = STFT_WINDOW, overlap: int = STFT_OVERLAP) -> np.ndarray:
    """
    Hann-windowed short-time DFT magnitudes.

    Returns:
        np.ndarray: (window // 2 + 1) x n_frames
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("stft expects a 1-D sequence")
    if len(x) < window:
        raise ValueError(f"sequence of length {len(x)} is shorter than one window ({window})")

    hop = window - overlap
    frames = np.lib.stride_tricks.sliding_window_view(x, window)[::hop]
    taper = signal.get_window("hann", window)
    return np.abs(np.fft.rfft(frames * taper, axis=-1)).T


def stft_spectrogram(x: np.ndarray, size: int = SPECTROGRAM_SIZE) -> Spectrogram:
    """
    Grayscale spectrogram resized to size x size.

    The frequency x time magnitude matrix is resized with corner-aligned
    bilinear interpolation.
    """
    frames = stft_magnitudes(x)
    zoom = (size / frames.shape[0], size / frames.shape[1])
    image = ndimage.zoom(frames, zoom, order=1, mode="nearest", grid_mode=False)
    # interpolation of non-negative values stays non-negative up to rounding
    image = np.clip(image, 0.0, None)
    return Spectrogram(image=image, frames=frames)


# ============================================================================
# R-PEAK DETECTION
# ============================================================================

def _bandpass(fs: float):
    low, high = PT_BAND_HZ
    high = min(high, 0.45 * fs)
    return signal.butter(2, [low, high], btype="bandpass", fs=fs, output="sos")


def pan_tompkins_rpeaks(x: np.ndarray, fs: float) -> np.ndarray:
    """
    Detect R-peaks with the Pan-Tompkins pipeline.

    Band-pass (5-15 Hz), five-point derivative, squaring and 150 ms
    moving-window integration, all forward-only. Integration peaks are
    classified with adaptive signal/noise thresholds (initialized from the
    first 2 s), a 200 ms refractory period and RR-based search-back.
    Each detection is then placed on the maximum of the zero-phase
    band-passed signal inside the integration window that produced it,
    widened by 50 ms on both sides.

    Args:
        x: Single-lead ECG
        fs: Sampling frequency in Hz

    Returns:
        np.ndarray: Sorted int64 sample indices (possibly empty)

    Raises:
        ValueError: fs <= 0 or fewer than 2 s of signal
    """
    x = np.asarray(x, dtype=np.float64)
    if fs <= 0:
        raise ValueError(f"sampling frequency must be positive (got {fs})")
    if len(x) < 2 * fs:
        raise ValueError(f"Pan-Tompkins needs at least 2 s of signal ({int(2 * fs)} samples)")

    sos = _bandpass(fs)
    filtered = signal.sosfilt(sos, x)
    derivative = signal.lfilter(np.array([2.0, 1.0, 0.0, -1.0, -2.0]) * fs / 8.0, [1.0], filtered)
    width = max(1, int(round(PT_INTEGRATION_S * fs)))
    integrated = signal.lfilter(np.ones(width) / width, [1.0], derivative ** 2)

    empty = np.empty(0, dtype=np.int64)
    if not np.any(integrated > 0):
        return empty

    refractory = max(1, int(round(PT_REFRACTORY_S * fs)))
    candidates, _ = signal.find_peaks(integrated, distance=refractory)
    if len(candidates) == 0:
        return empty

    learning = integrated[: int(PT_LEARNING_S * fs)]
    signal_level = 0.25 * learning.max()
    noise_level = 0.5 * learning.mean()
    threshold1 = noise_level + 0.25 * (signal_level - noise_level)
    threshold2 = 0.5 * threshold1

    accepted = []
    rr_history = deque(maxlen=8)

    for position, index in enumerate(candidates):
        value = integrated[index]
        if value > threshold1 and (not accepted or index - accepted[-1] >= refractory):
            if accepted:
                rr_history.append(index - accepted[-1])
            accepted.append(index)
            signal_level = 0.125 * value + 0.875 * signal_level
        else:
            noise_level = 0.125 * value + 0.875 * noise_level

        threshold1 = noise_level + 0.25 * (signal_level - noise_level)
        threshold2 = 0.5 * threshold1

        # search back for a missed beat
        if accepted and rr_history and index - accepted[-1] > 1.66 * np.mean(rr_history):
            missed = [
                c for c in candidates[: position + 1]
                if c - accepted[-1] >= refractory and integrated[c] > threshold2
            ]
            if missed:
                best = max(missed, key=lambda c: integrated[c])
                rr_history.append(best - accepted[-1])
                accepted.append(best)
                signal_level = 0.25 * integrated[best] + 0.75 * signal_level
                threshold1 = noise_level + 0.25 * (signal_level - noise_level)
                threshold2 = 0.5 * threshold1

    reference = signal.sosfiltfilt(sos, x)
    margin = max(1, int(round(PT_REFINE_S * fs)))
    peaks = []
    for index in accepted:
        lo = max(0, index - width - margin)
        hi = min(len(x), index + margin + 1)
        peak = lo + int(np.argmax(reference[lo:hi]))
        if not peaks or peak - peaks[-1] >= refractory:
            peaks.append(peak)

    logger.debug(f"Pan-Tompkins: {len(candidates)} candidates, {len(peaks)} R-peaks")
    return np.asarray(peaks, dtype=np.int64)
