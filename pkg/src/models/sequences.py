"""
Frame Sequences

This module contains the shared domain types for frame-indexed sequences:
the phase vocabulary, observation matrices and label sequences, together
with the elementary operations on them.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from src.utils.errors import (
    DimensionMismatchError,
    FpsMismatchError,
    InvariantViolationError,
    LengthMismatchError,
    OutOfRangeError,
)

# Cholecystectomy phases in challenge order.
SURGICAL_PHASES: Tuple[str, ...] = (
    "TrocarPlacement",
    "Preparation",
    "CalotTriangleDissection",
    "ClippingCutting",
    "GallbladderDissection",
    "GallbladderPackaging",
    "CleaningCoagulation",
    "GallbladderRetraction",
)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PhaseSet:
    """Ordered mapping between phase index and phase name."""
    names: Tuple[str, ...]
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(self.names)
        if not names:
            raise InvariantViolationError("a phase set needs at least one phase")
        if any(not isinstance(n, str) or not n for n in names):
            raise InvariantViolationError("phase names must be non-empty strings")
        if len(set(names)) != len(names):
            raise InvariantViolationError(f"phase names must be unique: {list(names)}")
        object.__setattr__(self, 'names', names)
        object.__setattr__(self, '_index', {n: i for i, n in enumerate(names)})

    @property
    def K(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        """Index of a phase name; KeyError if unknown."""
        return self._index[name]

    def name_of(self, k: int) -> str:
        return self.names[k]

    def label(self, k: int) -> str:
        """Display label in the `k.Name` form used by result tables."""
        return f"{k}.{self.names[k]}"

    @classmethod
    def surgical(cls) -> 'PhaseSet':
        """The eight cholecystectomy phases."""
        return cls(SURGICAL_PHASES)

    @classmethod
    def numbered(cls, K: int) -> 'PhaseSet':
        """Generic `phase0..phase{K-1}` vocabulary for non-surgical data."""
        return cls(tuple(f"phase{k}" for k in range(K)))

    @classmethod
    def for_size(cls, K: int) -> 'PhaseSet':
        """Surgical phases when K matches them, numbered phases otherwise."""
        return cls.surgical() if K == len(SURGICAL_PHASES) else cls.numbered(K)

    def to_list(self) -> List[str]:
        return list(self.names)


@dataclass(frozen=True, eq=False)
class ObservationSequence:
    """T x D matrix of per-frame observation vectors at a known frame rate."""
    data: np.ndarray
    fps: float = 1.0

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim == 1 and data.size == 0:
            raise InvariantViolationError("an empty observation sequence still needs D >= 1 columns")
        if data.ndim != 2:
            raise InvariantViolationError(f"observations must be a T x D matrix, got shape {data.shape}")
        if data.shape[1] < 1:
            raise InvariantViolationError("observation dimension D must be >= 1")
        if not np.all(np.isfinite(data)):
            raise InvariantViolationError("observations must be finite")
        if not (self.fps > 0 and np.isfinite(self.fps)):
            raise InvariantViolationError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, 'data', _frozen(data))
        object.__setattr__(self, 'fps', float(self.fps))

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def D(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.T

    @classmethod
    def empty(cls, D: int, fps: float = 1.0) -> 'ObservationSequence':
        return cls(np.empty((0, D)), fps)


@dataclass(frozen=True, eq=False)
class LabelSequence:
    """Per-frame phase indices at a known frame rate."""
    labels: np.ndarray
    fps: float = 1.0

    def __post_init__(self):
        raw = np.asarray(self.labels)
        if raw.size and not np.issubdtype(raw.dtype, np.integer):
            if not np.all(np.equal(np.mod(raw, 1), 0)):
                raise InvariantViolationError("labels must be integer phase indices")
        labels = np.array(raw, dtype=np.int64).reshape(-1)
        if labels.size and labels.min() < 0:
            raise InvariantViolationError("labels must be >= 0")
        if not (self.fps > 0 and np.isfinite(self.fps)):
            raise InvariantViolationError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, 'labels', _frozen(labels))
        object.__setattr__(self, 'fps', float(self.fps))

    @property
    def T(self) -> int:
        return self.labels.shape[0]

    def __len__(self) -> int:
        return self.T

    def check_phases(self, phases: Union[PhaseSet, int]) -> None:
        """Raise InvariantViolationError if a label falls outside the phase set."""
        K = phases.K if isinstance(phases, PhaseSet) else int(phases)
        if self.T and self.labels.max() >= K:
            raise InvariantViolationError(
                f"label {int(self.labels.max())} is out of range for {K} phases")

    def to_list(self) -> List[int]:
        return [int(x) for x in self.labels]


def validate_pair(obs: ObservationSequence, labels: LabelSequence) -> None:
    """
    Check that an observation sequence and a label sequence describe the same frames.

    Raises:
        LengthMismatchError: if T differs
        FpsMismatchError: if the frame rates differ
    """
    if obs.T != labels.T:
        raise LengthMismatchError(f"observations have {obs.T} frames but labels have {labels.T}")
    if obs.fps != labels.fps:
        raise FpsMismatchError(f"observations are at {obs.fps} fps but labels are at {labels.fps} fps")


def argmax_labels(obs: ObservationSequence, num_classes: Optional[int] = None) -> LabelSequence:
    """
    Per-frame argmax of the observation rows; ties go to the lowest index.

    Args:
        obs: Observation sequence (class scores)
        num_classes: Expected class count K; must equal D when given

    Returns:
        LabelSequence at the observation frame rate
    """
    if num_classes is not None and obs.D != num_classes:
        raise DimensionMismatchError(
            f"argmax needs one score per class: D={obs.D} but K={num_classes}")
    # np.argmax returns the first maximal index
    return LabelSequence(np.argmax(obs.data, axis=1) if obs.T else np.empty(0, dtype=np.int64), obs.fps)


def prefix(obs: ObservationSequence, t: int) -> ObservationSequence:
    """First t frames of a sequence, same fps."""
    if t < 0 or t > obs.T:
        raise OutOfRangeError(f"prefix length {t} outside [0, {obs.T}]")
    return ObservationSequence(obs.data[:t], obs.fps)
