"""
Input encoding module.

Turns stacked time-domain segments (n x 1 x length) into the channel layout a
model consumes:

- ``time``: the raw segment (1 channel, length samples)
- ``fft_real_imag``: one-sided FFT, channel 0 real, channel 1 imaginary
- ``fft_mag_phase``: one-sided FFT, channel 0 magnitude, channel 1 phase

Spectrogram images for inspection are produced here as well.
"""

from typing import List, Tuple

import numpy as np
from src.dsp import fft_real_imag, stft_spectrogram
from src.helpers import ConfigurationError, ShapeError
from src.logger import get_logger

logger = get_logger(__name__)

INPUT_LAYOUTS: List[str] = ["time", "fft_real_imag", "fft_mag_phase"]


def encoded_shape(layout: str, segment_length: int) -> Tuple[int, int]:
    """(channels, length) of an encoded segment."""
    if layout == "time":
        return 1, segment_length
    if layout in ("fft_real_imag", "fft_mag_phase"):
        return 2, segment_length // 2 + 1
    raise ConfigurationError(f"Unknown input layout '{layout}'. Expected one of: {', '.join(INPUT_LAYOUTS)}")


class InputEncoder:
    """
    Encodes segment batches for one input layout.

    Attributes:
        layout: One of INPUT_LAYOUTS
        segment_length: Expected time-domain length
    """

    def __init__(self, layout: str, segment_length: int):
        encoded_shape(layout, segment_length)
        self.layout = layout
        self.segment_length = segment_length

    @property
    def shape(self) -> Tuple[int, int]:
        return encoded_shape(self.layout, self.segment_length)

    def check(self, segments: np.ndarray) -> np.ndarray:
        """
        Raises:
            ShapeError: Unless segments are (n, 1, segment_length)
        """
        segments = np.asarray(segments)
        if segments.ndim != 3 or segments.shape[1:] != (1, self.segment_length):
            raise ShapeError(
                f"expected segments of shape (n, 1, {self.segment_length}), got {segments.shape}"
            )
        return segments

    def encode(self, segments: np.ndarray) -> np.ndarray:
        """
        Args:
            segments: (n, 1, segment_length) time-domain segments

        Returns:
            np.ndarray: float64 (n, channels, length) model input
        """
        segments = self.check(segments).astype(np.float64)
        if self.layout == "time":
            return segments

        spectrum = fft_real_imag(segments[:, 0, :])
        if self.layout == "fft_real_imag":
            channels = (spectrum.real, spectrum.imag)
        else:
            channels = (spectrum.magnitude(), spectrum.phase())
        return np.stack(channels, axis=1)


def spectrogram_images(segments: np.ndarray) -> np.ndarray:
    """
    64 x 64 grayscale spectrogram per segment.

    Args:
        segments: (n, 1, length) with length >= 64

    Returns:
        np.ndarray: (n, 64, 64)
    """
    segments = np.asarray(segments)
    if segments.ndim != 3 or segments.shape[1] != 1:
        raise ShapeError(f"expected segments of shape (n, 1, length), got {segments.shape}")

    images = np.stack([stft_spectrogram(segment[0]).image for segment in segments])
    logger.debug(f"Built {len(images)} spectrogram images")
    return images
