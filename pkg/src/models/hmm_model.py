"""
Gaussian HMM for Phase HMM

This module contains the HmmModel class: a hidden Markov model over phases
with one multivariate Gaussian emission per phase. It covers supervised
fitting by counting, offline Viterbi decoding, online prefix decoding and
sampling of synthetic sequences.

All scores are natural-log, float64. Zero probabilities are kept as -inf.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.covariance import empirical_covariance

from src.models.sequences import (
    LabelSequence,
    ObservationSequence,
    PhaseSet,
    validate_pair,
)
from src.utils.errors import (
    DegenerateCovarianceError,
    DimensionMismatchError,
    EmptyInputError,
    EmptySequenceError,
    InvariantViolationError,
    NoFeasiblePathError,
    OutOfRangeError,
    UnseenStateError,
)

logger = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-9
REG_EPSILON = 1e-6
REG_MAX = 1e-2
LOG_2PI = math.log(2.0 * math.pi)

# Frames evaluated per block in log_emissions; rows are independent.
EMISSION_CHUNK = 4096


def _log(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide='ignore'):
        return np.log(p)


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class DecodeResult:
    """Most likely state sequence and its log joint density."""
    states: LabelSequence
    log_joint: float


@dataclass(frozen=True)
class FitSummary:
    """Counts reported after fitting."""
    frame_counts: List[int]
    sequence_count: int
    zero_transitions: int

    @property
    def sparsity(self) -> float:
        K = len(self.frame_counts)
        return self.zero_transitions / float(K * K)


@dataclass(frozen=True, eq=False)
class HmmModel:
    """
    Hidden Markov model with Gaussian emissions.

    Attributes:
        initial: length-K initial distribution
        transition: K x K row-stochastic matrix, transition[i, j] = P(j | i)
        means: K x D emission means
        covariances: K x D x D emission covariances (symmetric positive definite)
        phases: phase vocabulary of the states
    """
    initial: np.ndarray
    transition: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    phases: Optional[PhaseSet] = None

    log_initial: np.ndarray = field(init=False, repr=False, compare=False)
    log_transition: np.ndarray = field(init=False, repr=False, compare=False)
    cholesky: np.ndarray = field(init=False, repr=False, compare=False)
    _chol_inv: np.ndarray = field(init=False, repr=False, compare=False)
    _log_norm: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        initial = np.array(self.initial, dtype=np.float64).reshape(-1)
        transition = np.array(self.transition, dtype=np.float64)
        means = np.array(self.means, dtype=np.float64)
        covariances = np.array(self.covariances, dtype=np.float64)

        K = initial.shape[0]
        if K < 1:
            raise InvariantViolationError("a model needs at least one state")
        if means.ndim != 2 or means.shape[0] != K or means.shape[1] < 1:
            raise InvariantViolationError(f"means must be {K} x D, got shape {means.shape}")
        D = means.shape[1]
        if transition.shape != (K, K):
            raise InvariantViolationError(f"transition must be {K} x {K}, got shape {transition.shape}")
        if covariances.shape != (K, D, D):
            raise InvariantViolationError(
                f"covariances must be {K} x {D} x {D}, got shape {covariances.shape}")
        for name, array in (('initial', initial), ('transition', transition),
                            ('means', means), ('covariances', covariances)):
            if not np.all(np.isfinite(array)):
                raise InvariantViolationError(f"{name} contains non-finite values")

        if np.any(initial < 0) or abs(initial.sum() - 1.0) > STOCHASTIC_TOL:
            raise InvariantViolationError(f"initial distribution must be >= 0 and sum to 1, sums to {initial.sum()!r}")
        row_sums = transition.sum(axis=1)
        for i in range(K):
            if np.any(transition[i] < 0) or abs(row_sums[i] - 1.0) > STOCHASTIC_TOL:
                raise InvariantViolationError(
                    f"transition row {i} must be >= 0 and sum to 1, sums to {row_sums[i]!r}")

        chol = np.empty_like(covariances)
        for k in range(K):
            cov = covariances[k]
            if not np.allclose(cov, cov.T, rtol=1e-9, atol=1e-12):
                raise InvariantViolationError(f"covariance of state {k} is not symmetric")
            try:
                chol[k] = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError as e:
                raise InvariantViolationError(f"covariance of state {k} is not positive definite") from e

        # Mahalanobis terms are computed as ||L^-1 (y - mu)||^2.
        chol_inv = np.stack([np.linalg.inv(chol[k]) for k in range(K)])
        log_det = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)

        phases = self.phases if self.phases is not None else PhaseSet.for_size(K)
        if phases.K != K:
            raise InvariantViolationError(f"{phases.K} phase names for a {K}-state model")

        object.__setattr__(self, 'initial', _readonly(initial))
        object.__setattr__(self, 'transition', _readonly(transition))
        object.__setattr__(self, 'means', _readonly(means))
        object.__setattr__(self, 'covariances', _readonly(covariances))
        object.__setattr__(self, 'phases', phases)
        object.__setattr__(self, 'log_initial', _readonly(_log(initial)))
        object.__setattr__(self, 'log_transition', _readonly(_log(transition)))
        object.__setattr__(self, 'cholesky', _readonly(chol))
        object.__setattr__(self, '_chol_inv', _readonly(chol_inv))
        object.__setattr__(self, '_log_norm', _readonly(D * LOG_2PI + log_det))

    @property
    def K(self) -> int:
        return self.initial.shape[0]

    @property
    def D(self) -> int:
        return self.means.shape[1]

    # ------------------------------------------------------------------
    # Emissions

    def log_emissions(self, X: np.ndarray) -> np.ndarray:
        """
        Gaussian log-densities of every frame under every state.

        Each entry depends only on its own row of X: the sums run in a fixed
        sequential order over the D coordinates, so evaluating one frame or a
        whole block gives bit-identical values.

        Args:
            X: n x D matrix of observations

        Returns:
            n x K matrix of log N(x_t; mu_k, Sigma_k)
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.D:
            raise DimensionMismatchError(f"observations have shape {X.shape}, model expects D={self.D}")
        n, D = X.shape
        out = np.empty((n, self.K))
        for start in range(0, n, EMISSION_CHUNK):
            block = X[start:start + EMISSION_CHUNK]
            diff = block[:, None, :] - self.means[None, :, :]
            z = diff[:, :, 0, None] * self._chol_inv[None, :, :, 0]
            for i in range(1, D):
                z += diff[:, :, i, None] * self._chol_inv[None, :, :, i]
            maha = z[:, :, 0] ** 2
            for j in range(1, D):
                maha += z[:, :, j] ** 2
            out[start:start + block.shape[0]] = -0.5 * (self._log_norm[None, :] + maha)
        return out

    def log_emission(self, k: int, y: Sequence[float]) -> float:
        """log N(y; mu_k, Sigma_k) for a single state and frame."""
        if not 0 <= k < self.K:
            raise OutOfRangeError(f"state {k} outside [0, {self.K})")
        y = np.asarray(y, dtype=np.float64).reshape(1, -1)
        return float(self.log_emissions(y)[0, k])

    def path_log_joint(self, states: Sequence[int], obs: ObservationSequence) -> float:
        """log P(states, observations) for a given state path."""
        states = np.asarray(states, dtype=np.int64)
        if states.shape[0] != obs.T:
            raise DimensionMismatchError(f"path has {states.shape[0]} states for {obs.T} frames")
        if obs.T == 0:
            raise EmptySequenceError("cannot score an empty sequence")
        emissions = self.log_emissions(obs.data)
        score = self.log_initial[states[0]] + emissions[0, states[0]]
        for t in range(1, obs.T):
            score += self.log_transition[states[t - 1], states[t]] + emissions[t, states[t]]
        return float(score)

    # ------------------------------------------------------------------
    # Serialization

    def to_dict(self) -> Dict:
        """Convert the model to plain lists (floats keep full precision in JSON)."""
        return {
            'phases': self.phases.to_list(),
            'K': self.K,
            'D': self.D,
            'initial': self.initial.tolist(),
            'transition': self.transition.tolist(),
            'means': self.means.tolist(),
            'covariances': self.covariances.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'HmmModel':
        """Create a model from a dictionary; enforces every model invariant."""
        model = cls(
            initial=np.array(data['initial'], dtype=np.float64),
            transition=np.array(data['transition'], dtype=np.float64),
            means=np.array(data['means'], dtype=np.float64),
            covariances=np.array(data['covariances'], dtype=np.float64),
            phases=PhaseSet(tuple(data['phases'])) if data.get('phases') else None,
        )
        if 'K' in data and data['K'] != model.K:
            raise InvariantViolationError(f"K={data['K']} but parameters describe {model.K} states")
        if 'D' in data and data['D'] != model.D:
            raise InvariantViolationError(f"D={data['D']} but means have dimension {model.D}")
        return model


# ----------------------------------------------------------------------
# Fitting by counting


def _checked_labels(label_seqs: Sequence[LabelSequence], K: int) -> List[np.ndarray]:
    arrays = []
    for seq in label_seqs:
        seq.check_phases(K)
        arrays.append(seq.labels)
    return arrays


def fit_initial(label_seqs: Sequence[LabelSequence], K: int) -> np.ndarray:
    """
    Initial distribution by counting first labels.

    Args:
        label_seqs: Training label sequences; empty ones are ignored
        K: Number of states

    Returns:
        Length-K probability vector; never-initial states get exactly 0
    """
    firsts = [labels[0] for labels in _checked_labels(label_seqs, K) if labels.shape[0] > 0]
    if not firsts:
        raise EmptyInputError("need at least one non-empty label sequence to fit initial probabilities")
    counts = np.bincount(np.asarray(firsts, dtype=np.int64), minlength=K).astype(np.float64)
    return counts / float(len(firsts))


def fit_transitions(label_seqs: Sequence[LabelSequence], K: int) -> np.ndarray:
    """
    Transition matrix by counting consecutive label pairs.

    Rows of states never seen as a source are uniform; unobserved
    transitions stay exactly zero.
    """
    counts = np.zeros((K, K))
    for labels in _checked_labels(label_seqs, K):
        if labels.shape[0] > 1:
            np.add.at(counts, (labels[:-1], labels[1:]), 1.0)

    transition = np.full((K, K), 1.0 / K)
    outgoing = counts.sum(axis=1)
    seen = outgoing > 0
    transition[seen] = counts[seen] / outgoing[seen, None]

    unseen = np.flatnonzero(~seen)
    if unseen.size:
        logger.debug(f"States never left in training data, uniform rows: {unseen.tolist()}")
    return transition


def regularize_covariance(cov: np.ndarray,
                          epsilon: float = REG_EPSILON,
                          cap: float = REG_MAX) -> np.ndarray:
    """
    Add a scaled ridge until the matrix has a Cholesky factor.

    The ridge is epsilon * (trace / D) * I (plain epsilon * I when the trace
    is zero); epsilon grows by 10x up to `cap`.

    Raises:
        DegenerateCovarianceError: if no ridge up to `cap` works
    """
    cov = 0.5 * (cov + cov.T)
    D = cov.shape[0]
    trace = float(np.trace(cov))
    scale = trace / D if trace > 0 else 1.0
    identity = np.eye(D)

    steps = int(round(math.log10(cap / epsilon))) + 1 if cap >= epsilon else 1
    for step in range(steps):
        eps = epsilon * 10.0 ** step
        candidate = cov + (eps * scale) * identity
        try:
            np.linalg.cholesky(candidate)
        except np.linalg.LinAlgError:
            logger.debug(f"Cholesky failed with ridge epsilon={eps:g}, escalating")
            continue
        if step > 0:
            logger.warning(f"Covariance needed ridge epsilon={eps:g} to become positive definite")
        return candidate
    raise DegenerateCovarianceError(f"covariance is not positive definite even with ridge epsilon={cap:g}")


def fit_emissions(obs_seqs: Sequence[ObservationSequence],
                  label_seqs: Sequence[LabelSequence],
                  K: int,
                  diag_cov: bool = False,
                  reg_epsilon: float = REG_EPSILON,
                  reg_max: float = REG_MAX) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-state Gaussian parameters from labeled observations.

    Args:
        obs_seqs: Observation sequences
        label_seqs: Matching label sequences
        K: Number of states
        diag_cov: Keep only the diagonal of each covariance
        reg_epsilon: Initial ridge factor
        reg_max: Largest ridge factor tried

    Returns:
        (means K x D, covariances K x D x D); covariances are maximum
        likelihood estimates plus the ridge
    """
    if len(obs_seqs) != len(label_seqs):
        raise DimensionMismatchError(f"{len(obs_seqs)} observation sequences for {len(label_seqs)} label sequences")
    if not obs_seqs:
        raise EmptyInputError("need at least one sequence to fit emissions")
    dims = {obs.D for obs in obs_seqs}
    if len(dims) != 1:
        raise DimensionMismatchError(f"observation sequences have different dimensions: {sorted(dims)}")
    D = dims.pop()
    for obs, labels in zip(obs_seqs, label_seqs):
        validate_pair(obs, labels)
    _checked_labels(label_seqs, K)

    X = np.concatenate([obs.data for obs in obs_seqs], axis=0)
    y = np.concatenate([labels.labels for labels in label_seqs], axis=0)

    means = np.empty((K, D))
    covariances = np.empty((K, D, D))
    for k in range(K):
        rows = X[y == k]
        if rows.shape[0] == 0:
            raise UnseenStateError(k)
        means[k] = rows.mean(axis=0)
        cov = empirical_covariance(rows, assume_centered=False) if rows.shape[0] > 1 else np.zeros((D, D))
        if diag_cov:
            cov = np.diag(np.diag(cov))
        covariances[k] = regularize_covariance(cov, reg_epsilon, reg_max)
    return means, covariances


def fit_model(obs_seqs: Sequence[ObservationSequence],
              label_seqs: Sequence[LabelSequence],
              K: int,
              phases: Optional[PhaseSet] = None,
              diag_cov: bool = False,
              reg_epsilon: float = REG_EPSILON,
              reg_max: float = REG_MAX) -> Tuple[HmmModel, FitSummary]:
    """
    Fit every HMM parameter from paired training sequences.

    Returns:
        (model, summary of per-state frame counts and transition sparsity)
    """
    initial = fit_initial(label_seqs, K)
    transition = fit_transitions(label_seqs, K)
    means, covariances = fit_emissions(obs_seqs, label_seqs, K, diag_cov, reg_epsilon, reg_max)
    model = HmmModel(initial, transition, means, covariances, phases)

    all_labels = np.concatenate([labels.labels for labels in label_seqs])
    summary = FitSummary(
        frame_counts=np.bincount(all_labels, minlength=K).tolist(),
        sequence_count=len(label_seqs),
        zero_transitions=int(np.count_nonzero(transition == 0.0)),
    )
    logger.info(f"Fitted HMM with K={model.K}, D={model.D} on {summary.sequence_count} sequences")
    logger.info(f"Frames per state: {summary.frame_counts}")
    logger.info(f"Zero transitions: {summary.zero_transitions}/{K * K} ({summary.sparsity:.1%})")
    return model, summary


# ----------------------------------------------------------------------
# Decoding


def _viterbi_step(delta: np.ndarray,
                  log_transition: np.ndarray,
                  log_emission_row: np.ndarray,
                  scratch: np.ndarray,
                  backpointer: np.ndarray,
                  columns: np.ndarray) -> np.ndarray:
    """
    One max-product step in log space.

    scratch[i, j] = delta[i] + log A[i, j]; the best predecessor of j is the
    lowest i reaching the column maximum. -inf never wins against a finite
    score.
    """
    np.add(delta[:, None], log_transition, out=scratch)
    np.argmax(scratch, axis=0, out=backpointer)
    new_delta = scratch[backpointer, columns]
    new_delta += log_emission_row
    return new_delta


def viterbi_offline(model: HmmModel, obs: ObservationSequence) -> DecodeResult:
    """
    Most likely state sequence for a complete observation sequence.

    Args:
        model: Fitted HMM
        obs: Observations with D = model.D and T >= 1

    Returns:
        DecodeResult with the best path (ties to the lowest state at every
        step) and its log joint density
    """
    if obs.D != model.D:
        raise DimensionMismatchError(f"observations have D={obs.D}, model expects D={model.D}")
    if obs.T == 0:
        raise EmptySequenceError("cannot decode an empty sequence")

    T, K = obs.T, model.K
    emissions = model.log_emissions(obs.data)
    log_transition = model.log_transition
    backpointers = np.zeros((T, K), dtype=np.intp)
    scratch = np.empty((K, K))
    columns = np.arange(K)

    delta = model.log_initial + emissions[0]
    for t in range(1, T):
        delta = _viterbi_step(delta, log_transition, emissions[t], scratch, backpointers[t], columns)

    last = int(np.argmax(delta))
    log_joint = float(delta[last])
    if log_joint == -np.inf:
        raise NoFeasiblePathError(f"every state path over {T} frames has zero probability")

    states = np.empty(T, dtype=np.int64)
    states[-1] = last
    for t in range(T - 1, 0, -1):
        states[t - 1] = backpointers[t, states[t]]
    return DecodeResult(LabelSequence(states, obs.fps), log_joint)


class OnlineDecoder:
    """
    Causal decoder: after each frame, the last state of the Viterbi path
    over all frames seen so far.

    Keeps only the best-prefix score of each state, so a step costs
    O(K^2 + K D^2) whatever the prefix length. One owner at a time; create
    one decoder per sequence.
    """

    def __init__(self, model: HmmModel):
        self.model = model
        self._scratch = np.empty((model.K, model.K))
        self._backpointer = np.empty(model.K, dtype=np.intp)
        self._columns = np.arange(model.K)
        self.reset()

    def reset(self) -> None:
        self._delta: Optional[np.ndarray] = None
        self._state: Optional[int] = None
        self.t = 0

    @property
    def current_state(self) -> int:
        if self._state is None:
            raise EmptySequenceError("no frame has been decoded yet")
        return self._state

    @property
    def scores(self) -> np.ndarray:
        """Copy of the best log score of a prefix path ending in each state."""
        if self._delta is None:
            raise EmptySequenceError("no frame has been decoded yet")
        return self._delta.copy()

    def step(self, y: Sequence[float]) -> int:
        """
        Consume one frame.

        Args:
            y: Length-D observation

        Returns:
            Last state of the best path over the frames seen so far
        """
        y = np.asarray(y, dtype=np.float64)
        if y.ndim != 1 or y.shape[0] != self.model.D:
            raise DimensionMismatchError(f"frame has shape {y.shape}, model expects D={self.model.D}")
        if not np.all(np.isfinite(y)):
            raise InvariantViolationError(f"frame {self.t} contains non-finite values")

        emission = self.model.log_emissions(y[None, :])[0]
        if self._delta is None:
            delta = self.model.log_initial + emission
        else:
            delta = _viterbi_step(self._delta, self.model.log_transition, emission,
                                  self._scratch, self._backpointer, self._columns)

        state = int(np.argmax(delta))
        if delta[state] == -np.inf:
            raise NoFeasiblePathError(f"every state path over {self.t + 1} frames has zero probability")
        self._delta = delta
        self._state = state
        self.t += 1
        return state

    def decode_stream(self, rows: Iterable[Sequence[float]]) -> Iterator[int]:
        """One state per consumed frame, in order."""
        for row in rows:
            yield self.step(row)

    def decode(self, obs: ObservationSequence) -> LabelSequence:
        """Run the decoder over a whole sequence, frame by frame."""
        if obs.D != self.model.D:
            raise DimensionMismatchError(f"observations have D={obs.D}, model expects D={self.model.D}")
        states = list(self.decode_stream(obs.data))
        return LabelSequence(np.asarray(states, dtype=np.int64), obs.fps)


def online_decoder_new(model: HmmModel) -> OnlineDecoder:
    return OnlineDecoder(model)


def online_step(decoder: OnlineDecoder, y: Sequence[float]) -> int:
    return decoder.step(y)


# ----------------------------------------------------------------------
# Sampling


def _draw(cumulative: np.ndarray, last_positive: int, u: float) -> int:
    index = int(np.searchsorted(cumulative, u, side='right'))
    # u can exceed the rounded total; fall back to the last reachable state
    return index if index < cumulative.shape[0] else last_positive


def sample(model: HmmModel, T: int, seed: int,
           fps: float = 1.0) -> Tuple[LabelSequence, ObservationSequence]:
    """
    Draw a state path and observations from the model.

    Args:
        model: HMM to sample from
        T: Number of frames (>= 1)
        seed: Seed of the random generator; equal seeds give equal draws
        fps: Frame rate stamped on both outputs

    Returns:
        (labels, observations)
    """
    if T < 1:
        raise OutOfRangeError(f"sample length must be >= 1, got {T}")
    rng = np.random.default_rng(seed)
    K, D = model.K, model.D

    cum_initial = np.cumsum(model.initial)
    cum_transition = np.cumsum(model.transition, axis=1)
    last_initial = int(np.flatnonzero(model.initial > 0)[-1])
    last_transition = [int(np.flatnonzero(model.transition[i] > 0)[-1]) for i in range(K)]

    u = rng.random(T)
    states = np.empty(T, dtype=np.int64)
    states[0] = _draw(cum_initial, last_initial, u[0])
    for t in range(1, T):
        prev = states[t - 1]
        states[t] = _draw(cum_transition[prev], last_transition[prev], u[t])

    noise = rng.standard_normal((T, D))
    data = np.empty((T, D))
    for k in range(K):
        mask = states == k
        if np.any(mask):
            data[mask] = model.means[k] + noise[mask] @ model.cholesky[k].T
    return LabelSequence(states, fps), ObservationSequence(data, fps)
