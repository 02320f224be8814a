"""
Post-processing for Phase HMM

Brings analysis-rate predictions back to the video frame rate.
"""
import logging

import numpy as np

from src.models.sequences import LabelSequence
from src.utils.errors import EmptyInputError, OutOfRangeError

logger = logging.getLogger(__name__)

DEFAULT_FACTOR = 25


def upsample(pred: LabelSequence, factor: int = DEFAULT_FACTOR, target_frames: int = 0) -> LabelSequence:
    """
    Repeat every label `factor` times, then crop or pad to `target_frames`.

    Padding repeats the final label.

    Args:
        pred: Predictions at the analysis rate
        factor: Repetitions per label (>= 1)
        target_frames: Exact output length (>= 0)

    Returns:
        LabelSequence at `pred.fps * factor`
    """
    if factor < 1:
        raise OutOfRangeError(f"upsample factor must be >= 1, got {factor}")
    if target_frames < 0:
        raise OutOfRangeError(f"target frame count must be >= 0, got {target_frames}")
    if pred.T == 0 and target_frames > 0:
        raise EmptyInputError("EmptyInputWithPositiveTarget: cannot pad an empty prediction")

    repeated = np.repeat(pred.labels, factor)
    if repeated.shape[0] >= target_frames:
        out = repeated[:target_frames]
    else:
        pad = np.full(target_frames - repeated.shape[0], pred.labels[-1], dtype=np.int64)
        out = np.concatenate([repeated, pad])

    if repeated.shape[0] != target_frames:
        action = 'cropped' if repeated.shape[0] > target_frames else 'padded'
        logger.debug(f"Upsampled {pred.T} labels x{factor} and {action} "
                     f"{abs(repeated.shape[0] - target_frames)} frames")
    return LabelSequence(out, pred.fps * factor)
