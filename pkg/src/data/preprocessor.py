"""
Temporal Preprocessor for Phase HMM

Causal sliding-window averaging of observation vectors. Each output row is
the mean of the current row and the rows before it, over at most `window`
frames. At the start of a sequence the mean runs over the frames available.

Batch and streaming paths add the window rows in chronological order
starting from zero, so both produce bit-identical rows.
"""
import logging
from collections import deque
from typing import Deque, Iterable, Iterator, Optional

import numpy as np

from src.config import SmoothingConfig
from src.models.sequences import ObservationSequence
from src.utils.errors import DimensionMismatchError, InvariantViolationError

logger = logging.getLogger(__name__)


class TemporalSmoother:
    """
    Causal moving average over the last `window` frames.

    The object keeps a buffer for streaming use (`push`); `smooth` works on
    whole sequences and does not touch the buffer.
    """

    def __init__(self, config: Optional[SmoothingConfig] = None):
        """
        Initialize the smoother.

        Args:
            config: Smoothing parameters; defaults to a 15-frame window
        """
        self.config = config or SmoothingConfig()
        self.window = self.config.window
        self._buffer: Deque[np.ndarray] = deque(maxlen=self.window)
        self._dim: Optional[int] = None

    def smooth(self, obs: ObservationSequence) -> ObservationSequence:
        """
        Smooth a whole sequence.

        Args:
            obs: Input observations

        Returns:
            Smoothed observations, same shape and fps
        """
        T, D = obs.T, obs.D
        if T == 0 or self.window == 1:
            return ObservationSequence(obs.data.copy(), obs.fps)

        W = self.window
        padded = np.concatenate([np.zeros((W - 1, D)), obs.data], axis=0)
        total = np.zeros((T, D))
        for offset in range(W):
            total += padded[offset:offset + T]
        counts = np.minimum(np.arange(1, T + 1), W).astype(np.float64)
        smoothed = total / counts[:, None]

        logger.debug(f"Smoothed {T} frames with a {W}-frame causal window")
        return ObservationSequence(smoothed, obs.fps)

    def push(self, row: np.ndarray) -> np.ndarray:
        """
        Feed one frame and get its smoothed value.

        Args:
            row: Length-D observation vector

        Returns:
            Mean of the buffered frames including `row`
        """
        row = np.asarray(row, dtype=np.float64)
        if row.ndim != 1:
            raise InvariantViolationError(f"expected a single frame vector, got shape {row.shape}")
        if self._dim is None:
            self._dim = row.shape[0]
        elif row.shape[0] != self._dim:
            raise DimensionMismatchError(f"frame has {row.shape[0]} values, expected {self._dim}")

        self._buffer.append(row)
        total = np.zeros(self._dim)
        for frame in self._buffer:
            total += frame
        return total / float(len(self._buffer))

    def stream(self, rows: Iterable[np.ndarray]) -> Iterator[np.ndarray]:
        """Smoothed frames, one per input frame, never reading ahead."""
        for row in rows:
            yield self.push(row)

    def reset(self) -> None:
        self._buffer.clear()
        self._dim = None


def smooth(obs: ObservationSequence, config: Optional[SmoothingConfig] = None) -> ObservationSequence:
    """Causal mean over the trailing `config.window` frames."""
    return TemporalSmoother(config).smooth(obs)
