"""
Data Loader for Phase HMM

This module handles the file formats: per-frame score ingestion (CSV or
JSONL), label CSVs, model JSON files, frame dumps, and pairing of files
by name stem.
"""
import io
import json
import logging
import math
import os
from glob import glob
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError as PydanticValidationError

from src.models.hmm_model import HmmModel
from src.models.sequences import LabelSequence, ObservationSequence, PhaseSet
from src.utils.errors import (
    InvariantViolationError,
    IoError,
    NonContiguousFramesError,
    PairingError,
    ParseError,
    RaggedRowsError,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FEATURE_SUFFIXES = ('.csv', '.jsonl', '.ndjson')
JSONL_SUFFIXES = ('.jsonl', '.ndjson')

PathLike = Union[str, os.PathLike]


class ModelFile(BaseModel):
    """On-disk layout of a fitted model."""
    schema_version: int
    phases: List[str]
    K: int
    D: int
    initial: List[float]
    transition: List[List[float]]
    means: List[List[float]]
    covariances: List[List[List[float]]]


def _is_jsonl(path: PathLike) -> bool:
    return str(path).lower().endswith(JSONL_SUFFIXES)


def _read_text(path: PathLike) -> str:
    try:
        with open(path, 'r', newline='', encoding='utf-8-sig') as f:
            return f.read()
    except FileNotFoundError as e:
        raise IoError(f"file not found: {path}") from e
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise ParseError(f"not UTF-8 text: {e.reason}", str(path)) from e


def _feature_header(text: str, path: PathLike) -> List[str]:
    first = text.splitlines()[0] if text else ''
    names = [h.strip() for h in first.split(',')] if first.strip() else []
    if len(names) < 2 or names[0] != 'frame':
        raise ParseError("expected header 'frame,c0,...'", str(path), 1)
    return ['frame'] + [f"c{i}" for i in range(len(names) - 1)]


def _read_csv_text(path: PathLike,
                   expected_header: Optional[Sequence[str]] = None,
                   text: Optional[str] = None) -> pd.DataFrame:
    """
    Read a headed CSV as strings, mapping failures to library errors.

    Field counts are checked line by line first: pandas would otherwise
    take a too-wide first row as an index column.
    """
    if text is None:
        text = _read_text(path)
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("missing header", str(path), 1)
    width = lines[0].count(',') + 1
    for number, line in enumerate(lines[1:], start=2):
        if line.strip() and line.count(',') + 1 != width:
            raise RaggedRowsError(
                f"{path}:{number}: {line.count(',') + 1} fields where the header has {width}")

    try:
        df = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.ParserError as e:
        raise ParseError(f"malformed CSV: {e}", str(path)) from e

    columns = [str(c).strip() for c in df.columns]
    if expected_header is not None and columns != list(expected_header):
        raise ParseError(f"expected header {','.join(expected_header)!r}, got {','.join(columns)!r}",
                         str(path), 1)
    df.columns = columns
    return df


def _parse_frames(values: pd.Series, path: PathLike) -> None:
    frames = pd.to_numeric(values, errors='coerce')
    bad = frames.isna().to_numpy()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ParseError(f"frame index {values.iloc[row]!r} is not an integer", str(path), row + 2)
    expected = np.arange(len(frames))
    if not np.array_equal(frames.to_numpy(dtype=np.float64), expected):
        row = int(np.flatnonzero(frames.to_numpy(dtype=np.float64) != expected)[0])
        raise NonContiguousFramesError(
            f"{path}:{row + 2}: frame index {values.iloc[row]} where {row} was expected "
            f"(frames must count up from 0 without gaps)")


def read_logprobs(path: PathLike, fps: float = 1.0) -> ObservationSequence:
    """
    Load per-frame score vectors.

    CSV files have the header `frame,c0,...,c{D-1}`; JSONL files hold one
    `{"frame": n, "scores": [...]}` object per line.

    Args:
        path: Input file
        fps: Frame rate of the sequence

    Returns:
        ObservationSequence
    """
    if _is_jsonl(path):
        return _read_logprobs_jsonl(path, fps)

    text = _read_text(path)
    expected = _feature_header(text, path)
    D = len(expected) - 1

    df = _read_csv_text(path, expected, text)
    if len(df) == 0:
        return ObservationSequence.empty(D, fps)
    _parse_frames(df['frame'], path)

    scores = df[expected[1:]]
    checked = np.column_stack([
        pd.to_numeric(scores[column], errors='coerce').to_numpy(dtype=np.float64)
        for column in expected[1:]
    ])
    bad = ~np.isfinite(checked)
    if bad.any():
        row, col = (int(i) for i in np.argwhere(bad)[0])
        raise ParseError(f"score {scores.iat[row, col]!r} in column c{col} is not a finite number",
                         str(path), row + 2)
    # correctly rounded str -> float64; to_numeric above only locates bad cells
    values = scores.to_numpy(dtype=str).astype(np.float64)

    logger.debug(f"Read {values.shape[0]} frames x {D} scores from {path}")
    return ObservationSequence(values, fps)


def _read_logprobs_jsonl(path: PathLike, fps: float) -> ObservationSequence:
    rows: List[List[float]] = []
    for number, line in enumerate(_read_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            frame = record['frame']
            scores = [float(x) for x in record['scores']]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise ParseError(f"expected {{\"frame\": n, \"scores\": [...]}}: {e}", str(path), number) from e
        if frame != len(rows):
            raise NonContiguousFramesError(f"{path}:{number}: frame {frame} where {len(rows)} was expected")
        if rows and len(scores) != len(rows[0]):
            raise RaggedRowsError(f"{path}:{number}: {len(scores)} scores after rows of {len(rows[0])}")
        if not scores or not all(math.isfinite(x) for x in scores):
            raise ParseError("scores must be a non-empty list of finite numbers", str(path), number)
        rows.append(scores)

    if not rows:
        raise ParseError("no frames: the score dimension cannot be inferred from an empty JSONL file", str(path))
    return ObservationSequence(np.array(rows, dtype=np.float64), fps)


def _float_text(x: float) -> str:
    """Shortest decimal that reads back to the same double."""
    return repr(float(x))


def write_logprobs(obs: ObservationSequence, path: PathLike) -> None:
    """Write scores as CSV (`frame,c0,...`) or JSONL, chosen by extension."""
    _ensure_parent(path)
    try:
        if _is_jsonl(path):
            with open(path, 'w', encoding='utf-8') as f:
                for t, row in enumerate(obs.data.tolist()):
                    f.write(json.dumps({'frame': t, 'scores': row}) + '\n')
        else:
            df = pd.DataFrame(obs.data, columns=[f"c{i}" for i in range(obs.D)])
            df.insert(0, 'frame', np.arange(obs.T))
            df.to_csv(path, index=False, lineterminator='\n', encoding='utf-8', float_format=_float_text)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    logger.debug(f"Wrote {obs.T} frames to {path}")


def read_labels(path: PathLike,
                phases: Optional[PhaseSet] = None,
                fps: float = 1.0) -> LabelSequence:
    """
    Load a `frame,phase` CSV.

    Args:
        path: Input file
        phases: Phase vocabulary for name lookup and range checks. None looks
                names up in the surgical set and leaves indices unchecked
        fps: Frame rate of the sequence

    Returns:
        LabelSequence
    """
    df = _read_csv_text(path, ['frame', 'phase'])
    _parse_frames(df['frame'], path)

    vocabulary = phases if phases is not None else PhaseSet.surgical()
    labels = np.empty(len(df), dtype=np.int64)
    for row, raw in enumerate(df['phase'].str.strip()):
        if raw.isascii() and raw.isdecimal():
            value = int(raw)
            if phases is not None and value >= phases.K:
                raise ParseError(f"phase index {value} is out of range for {phases.K} phases",
                                 str(path), row + 2)
        elif raw in vocabulary.names:
            value = vocabulary.index_of(raw)
        else:
            raise ParseError(f"unknown phase {raw!r}", str(path), row + 2)
        labels[row] = value

    logger.debug(f"Read {len(labels)} labels from {path}")
    return LabelSequence(labels, fps)


def write_labels(pred: LabelSequence,
                 path: PathLike,
                 phases: Optional[PhaseSet] = None,
                 names: bool = False) -> None:
    """
    Write a `frame,phase` CSV with integer indices (or names when `names`).
    """
    if names:
        if phases is None:
            raise InvariantViolationError("writing phase names needs a phase set")
        pred.check_phases(phases)
        column = [phases.name_of(int(k)) for k in pred.labels]
    else:
        column = pred.labels
    df = pd.DataFrame({'frame': np.arange(pred.T, dtype=np.int64), 'phase': column})
    _ensure_parent(path)
    try:
        df.to_csv(path, index=False, lineterminator='\n', encoding='utf-8')
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    logger.debug(f"Wrote {pred.T} labels to {path}")


def write_frame_dump(records: Sequence, path: PathLike) -> None:
    """Write per-frame comparison records as `frame,time_s,pred,gt,match`."""
    df = pd.DataFrame([r.to_dict() for r in records], columns=['frame', 'time_s', 'pred', 'gt', 'match'])
    df['match'] = df['match'].map(lambda m: 'true' if m else 'false')
    _ensure_parent(path)
    try:
        df.to_csv(path, index=False, lineterminator='\n', encoding='utf-8')
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def save_model(model: HmmModel, path: PathLike) -> None:
    """Save a model as JSON; floats are written in shortest round-trip form."""
    payload = ModelFile(schema_version=SCHEMA_VERSION, **model.to_dict())
    _ensure_parent(path)
    try:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(payload.model_dump(), f, indent=2)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    logger.info(f"Saved model to {path}")


def load_model(path: PathLike) -> HmmModel:
    """
    Load a model JSON file.

    Raises:
        IoError: unreadable file
        ParseError: malformed JSON, wrong schema or unsupported schema_version
        InvariantViolationError: parameters break a model invariant
    """
    try:
        with open(path, 'r', encoding='utf-8-sig') as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise IoError(f"file not found: {path}") from e
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise ParseError(f"not UTF-8 text: {e.reason}", str(path)) from e
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", str(path), e.lineno) from e

    if not isinstance(data, dict):
        raise ParseError("model file must hold a JSON object", str(path))
    version = data.get('schema_version')
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {version!r} (supported: {SCHEMA_VERSION})", str(path))
    try:
        payload = ModelFile.model_validate(data)
    except PydanticValidationError as e:
        raise ParseError(f"invalid model file: {e}", str(path)) from e

    model = HmmModel.from_dict(payload.model_dump())
    logger.info(f"Loaded model with K={model.K}, D={model.D} from {path}")
    return model


# ----------------------------------------------------------------------
# File collections


def file_stem(path: PathLike) -> str:
    """`video01.features.csv` -> `video01`."""
    return Path(path).name.split('.')[0]


def collect_files(sources: Iterable[PathLike],
                  suffixes: Sequence[str] = FEATURE_SUFFIXES,
                  role: Optional[str] = None) -> List[str]:
    """
    Expand directories into their data files (sorted); keep explicit files.

    Args:
        sources: Files and/or directories
        suffixes: File endings picked up from directories
        role: Name marker such as `features` in `video01.features.csv`. When a
            directory holds files carrying the marker, only those are taken.
    """
    files: List[str] = []
    for source in sources:
        source = str(source)
        if os.path.isdir(source):
            found = [p for p in glob(os.path.join(source, '*')) if p.lower().endswith(tuple(suffixes))]
            if role:
                marked = [p for p in found if f".{role}." in os.path.basename(p)]
                found = marked or found
            files.extend(sorted(found))
        elif os.path.exists(source):
            files.append(source)
        else:
            raise IoError(f"no such file or directory: {source}")
    return files


def pair_by_stem(left: Sequence[PathLike],
                 right: Sequence[PathLike],
                 left_name: str = 'features',
                 right_name: str = 'labels') -> List[Tuple[str, str, str]]:
    """
    Match two file lists by stem.

    Returns:
        Sorted list of (stem, left_path, right_path)

    Raises:
        PairingError: a stem has no partner, naming the stem
    """
    def index(paths: Sequence[PathLike], name: str) -> Dict[str, str]:
        by_stem: Dict[str, str] = {}
        for p in paths:
            stem = file_stem(p)
            if stem in by_stem:
                raise PairingError(stem, f"unique {name}")
            by_stem[stem] = str(p)
        return by_stem

    lhs = index(left, left_name)
    rhs = index(right, right_name)
    for stem in sorted(lhs):
        if stem not in rhs:
            raise PairingError(stem, right_name)
    for stem in sorted(rhs):
        if stem not in lhs:
            raise PairingError(stem, left_name)
    return [(stem, lhs[stem], rhs[stem]) for stem in sorted(lhs)]


def read_manifest(path: PathLike, columns: Tuple[str, str]) -> List[Tuple[str, str, str]]:
    """
    Read a `stem,<a>,<b>` manifest; relative paths resolve against its directory.
    """
    expected = ['stem', columns[0], columns[1]]
    df = _read_csv_text(path, expected)
    base = os.path.dirname(os.path.abspath(str(path)))
    pairs = []
    for stem, a, b in df[expected].itertuples(index=False):
        pairs.append((stem, os.path.join(base, a), os.path.join(base, b)))
    return sorted(pairs)


def _ensure_parent(path: PathLike) -> None:
    parent = os.path.dirname(str(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
