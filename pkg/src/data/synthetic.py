"""
Synthetic scenarios for Phase HMM

Forward-chain HMMs that mimic the sparse, mostly-forward progression of
surgical phases, plus the harness comparing three temporal methods on
sequences drawn from them:

    Avg Smoothing  argmax of the causally averaged scores
    HMM Online     prefix decoding of the averaged scores
    HMM Offline    Viterbi over the whole averaged sequence
"""
import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.config import ScenarioConfig, SmoothingConfig
from src.data.preprocessor import TemporalSmoother
from src.evaluation.metrics import DEFAULT_MARGIN_SECONDS, EvalReport, summarize
from src.models.hmm_model import HmmModel, OnlineDecoder, fit_model, sample, viterbi_offline
from src.models.sequences import LabelSequence, ObservationSequence, PhaseSet, argmax_labels
from src.utils.errors import DimensionMismatchError

logger = logging.getLogger(__name__)

METHODS: Tuple[str, ...] = ("Avg Smoothing", "HMM Online", "HMM Offline")

Pair = Tuple[LabelSequence, ObservationSequence]


@dataclass(frozen=True)
class MethodScore:
    """Scores of one method averaged over the test sequences of one run."""
    accuracy: float
    jaccard: float
    per_class_jaccard: List[Optional[float]]


@dataclass(frozen=True)
class ExperimentResult:
    """Comparison table of one seeded run."""
    seed: int
    scores: Dict[str, MethodScore]

    def ordered(self, metric: str) -> bool:
        """Offline >= online >= averaging on `accuracy` or `jaccard`."""
        avg, online, offline = (getattr(self.scores[m], metric) for m in METHODS)
        return offline >= online >= avg

    def to_dict(self) -> Dict:
        return {'seed': self.seed, 'scores': {m: asdict(s) for m, s in self.scores.items()}}


@dataclass(frozen=True)
class BenchReport:
    """Per-seed results and how often the expected ordering held."""
    results: List[ExperimentResult]
    accuracy_ordered: int
    jaccard_ordered: int
    required: int

    @property
    def passed(self) -> bool:
        return self.accuracy_ordered >= self.required and self.jaccard_ordered >= self.required

    def to_dict(self) -> Dict:
        return {
            'results': [r.to_dict() for r in self.results],
            'accuracy_ordered': self.accuracy_ordered,
            'jaccard_ordered': self.jaccard_ordered,
            'seeds': len(self.results),
            'required': self.required,
            'passed': self.passed,
        }


def build_scenario(config: ScenarioConfig) -> HmmModel:
    """
    Ground-truth forward-chain model.

    Each state stays with probability 1 - 1/dwell and moves to the next with
    probability 1/dwell; the last state is absorbing. Every sequence starts
    in state 0. State k emits around the unit vector e_(k mod D) with
    covariance noise_scale * I.
    """
    K, D = config.K, config.D
    stay = 1.0 - 1.0 / config.dwell

    transition = np.zeros((K, K))
    for i in range(K - 1):
        transition[i, i] = stay
        transition[i, i + 1] = 1.0 - stay
    transition[K - 1, K - 1] = 1.0

    initial = np.zeros(K)
    initial[0] = 1.0

    means = np.zeros((K, D))
    means[np.arange(K), np.arange(K) % D] = 1.0
    covariances = np.repeat((config.noise_scale * np.eye(D))[None, :, :], K, axis=0)

    return HmmModel(initial, transition, means, covariances, PhaseSet.for_size(K))


def _sequence_seeds(seed: int, count: int) -> List[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count)]


def generate(config: ScenarioConfig) -> Tuple[List[Pair], List[Pair]]:
    """
    Draw training and test sequences from the scenario model.

    Returns:
        (train pairs, test pairs) of (labels, observations)
    """
    model = build_scenario(config)
    seeds = _sequence_seeds(config.seed, config.n_train + config.n_test)
    pairs = [sample(model, config.T, s) for s in seeds]
    return pairs[:config.n_train], pairs[config.n_train:]


def _average(reports: Sequence[EvalReport], K: int) -> MethodScore:
    per_class: List[Optional[float]] = []
    for c in range(K):
        values = [r.per_class_jaccard[c] for r in reports if r.per_class_jaccard[c] is not None]
        per_class.append(float(np.mean(values)) if values else None)
    return MethodScore(
        accuracy=float(np.mean([r.accuracy for r in reports])),
        jaccard=float(np.mean([r.jaccard_mean for r in reports])),
        per_class_jaccard=per_class,
    )


def run_experiment(config: ScenarioConfig,
                   smoothing: Optional[SmoothingConfig] = None,
                   margin_seconds: float = DEFAULT_MARGIN_SECONDS) -> ExperimentResult:
    """
    Fit an HMM on sampled training data and compare the three methods on test data.

    Args:
        config: Scenario parameters (D must equal K)
        smoothing: Averaging window applied before every method
        margin_seconds: Jaccard tolerance

    Returns:
        ExperimentResult with test-averaged accuracy and mean Jaccard per method
    """
    if config.D != config.K:
        raise DimensionMismatchError(
            f"the averaging baseline takes an argmax over classes and needs D == K, got D={config.D}, K={config.K}")
    smoother = TemporalSmoother(smoothing)
    train, test = generate(config)

    train_obs = [smoother.smooth(obs) for _, obs in train]
    model, _ = fit_model(train_obs, [labels for labels, _ in train], config.K)

    reports: Dict[str, List[EvalReport]] = {m: [] for m in METHODS}
    for labels, obs in test:
        smoothed = smoother.smooth(obs)
        predictions = {
            METHODS[0]: argmax_labels(smoothed, config.K),
            METHODS[1]: OnlineDecoder(model).decode(smoothed),
            METHODS[2]: viterbi_offline(model, smoothed).states,
        }
        for method, pred in predictions.items():
            reports[method].append(summarize(pred, labels, margin_seconds, config.K))

    scores = {m: _average(reports[m], config.K) for m in METHODS}
    summary = ', '.join(f"{m} acc={s.accuracy:.2f} jac={s.jaccard:.2f}" for m, s in scores.items())
    logger.info(f"Seed {config.seed}: {summary}")
    return ExperimentResult(seed=config.seed, scores=scores)


def run_bench(config: ScenarioConfig,
              seeds: int = 10,
              smoothing: Optional[SmoothingConfig] = None,
              margin_seconds: float = DEFAULT_MARGIN_SECONDS,
              n_jobs: int = 1,
              required_fraction: float = 0.8) -> BenchReport:
    """
    Run the experiment for seeds config.seed .. config.seed + seeds - 1.

    Seeds run in parallel with joblib; results keep seed order.
    """
    configs = [config.model_copy(update={'seed': config.seed + i}) for i in range(seeds)]
    results = Parallel(n_jobs=n_jobs)(
        delayed(run_experiment)(c, smoothing, margin_seconds) for c in configs
    )
    required = int(np.ceil(required_fraction * seeds))
    return BenchReport(
        results=list(results),
        accuracy_ordered=sum(r.ordered('accuracy') for r in results),
        jaccard_ordered=sum(r.ordered('jaccard') for r in results),
        required=required,
    )


def _fmt(value: Optional[float]) -> str:
    return 'n/a' if value is None else f"{value:.2f}"


def render_bench(report: BenchReport, phases: Optional[PhaseSet] = None) -> str:
    """Per-seed rows, the across-seed comparison table and the per-class table."""
    seed_rows = []
    for r in report.results:
        row = {'Seed': r.seed}
        for m in METHODS:
            row[f"{m} acc"] = _fmt(r.scores[m].accuracy)
            row[f"{m} jac"] = _fmt(r.scores[m].jaccard)
        row['Ordered'] = 'yes' if r.ordered('accuracy') and r.ordered('jaccard') else 'no'
        seed_rows.append(row)

    summary_rows = []
    for m in METHODS:
        acc = np.array([r.scores[m].accuracy for r in report.results])
        jac = np.array([r.scores[m].jaccard for r in report.results])
        summary_rows.append({
            'Temporal Method': m,
            'Accuracy (%)': f"{acc.mean():.2f} ± {acc.std():.2f}",
            'Jaccard': f"{jac.mean():.2f} ± {jac.std():.2f}",
        })

    K = len(report.results[0].scores[METHODS[0]].per_class_jaccard) if report.results else 0
    phases = phases if phases is not None and phases.K == K else PhaseSet.for_size(K) if K else None
    class_rows = []
    for c in range(K):
        row = {'Temporal Model by classes': phases.label(c)}
        for m in METHODS:
            values = [r.scores[m].per_class_jaccard[c] for r in report.results
                      if r.scores[m].per_class_jaccard[c] is not None]
            row[m] = _fmt(float(np.mean(values)) if values else None)
        class_rows.append(row)
    if K:
        all_row = {'Temporal Model by classes': 'All classes'}
        for m in METHODS:
            all_row[m] = _fmt(float(np.mean([r.scores[m].jaccard for r in report.results])))
        class_rows.append(all_row)

    verdict = 'PASS' if report.passed else 'FAIL'
    n = len(report.results)
    lines = [
        pd.DataFrame(seed_rows).to_string(index=False),
        '',
        pd.DataFrame(summary_rows).to_string(index=False),
        '',
        pd.DataFrame(class_rows).to_string(index=False) if class_rows else '',
        '',
        f"Accuracy ordering (offline >= online >= avg): {report.accuracy_ordered}/{n}",
        f"Jaccard ordering  (offline >= online >= avg): {report.jaccard_ordered}/{n}",
        f"Verdict: {verdict} (needs {report.required}/{n} for both)",
    ]
    return '\n'.join(lines)
