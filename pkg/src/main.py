#!/usr/bin/env python
"""
Phase HMM - Command Line Interface

Entry point of the `phase-hmm` command. Every subcommand is a thin
composition of library calls:

    train     fit an HMM on paired feature/label files
    smooth    causal averaging of a feature file
    decode    offline or online HMM decoding of a feature file
    eval      accuracy and margin Jaccard of predictions
    upsample  back to the video frame rate
    gen       write a synthetic scenario to disk
    bench     compare averaging, online and offline decoding on scenarios

Exit codes: 0 success, 2 usage or validation error, 1 runtime failure.
"""
import argparse
import json
import logging
import math
import os
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config import load_config, scenario_config, smoothing_config
from src.data.data_loader import (
    collect_files,
    file_stem,
    load_model,
    pair_by_stem,
    read_labels,
    read_logprobs,
    read_manifest,
    save_model,
    write_frame_dump,
    write_labels,
    write_logprobs,
)
from src.data.postprocessor import upsample
from src.data.preprocessor import TemporalSmoother
from src.data.synthetic import build_scenario, generate, render_bench, run_bench
from src.evaluation.metrics import aggregate, dump_frames, render_aggregate, render_report, summarize
from src.models.hmm_model import OnlineDecoder, fit_model, viterbi_offline
from src.models.sequences import LabelSequence, PhaseSet, validate_pair
from src.utils.errors import DimensionMismatchError, PhaseHmmError, ValidationError
from src.utils.logger import log_exception, setup_logger

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

LABEL_SUFFIXES = ('.csv',)


def _positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return number


def _non_negative_int(value: str) -> int:
    number = int(value)
    if number < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return number


def _non_negative_float(value: str) -> float:
    number = float(value)
    if not number >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return number


def _positive_float(value: str) -> float:
    number = float(value)
    if not (number > 0 and math.isfinite(number)):
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return number


def _add_phase_arguments(parser: argparse.ArgumentParser, from_model: bool = False) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument('--phases', type=str, default=None,
                       help="Phase names, comma separated, or 'surgical' for the cholecystectomy set")
    group.add_argument('--num-phases', type=_positive_int, default=None,
                       help='Number of phases when labels are plain indices')
    if from_model:
        group.add_argument('--model', dest='phases_model', default=None,
                           help='Model JSON whose phase names are used')


def _add_scenario_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--K', type=int, default=None, help='Number of states')
    parser.add_argument('--D', type=int, default=None, help='Observation dimension')
    parser.add_argument('--T', type=int, default=None, help='Frames per sequence')
    parser.add_argument('--n-train', type=int, default=None, help='Training sequences')
    parser.add_argument('--n-test', type=int, default=None, help='Test sequences')
    parser.add_argument('--noise-scale', type=float, default=None, help='Emission variance')
    parser.add_argument('--dwell', type=float, default=None, help='Expected frames per phase')
    parser.add_argument('--seed', type=int, default=None, help='Scenario seed')


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subparser per command."""
    parser = argparse.ArgumentParser(prog='phase-hmm',
                                     description='Temporal smoothing of surgical phase predictions with HMMs')
    parser.add_argument('--config', type=str, default=None,
                        help='Path to configuration file (built-in defaults otherwise)')
    parser.add_argument('--log-level', type=str, default=None,
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'],
                        help='Set the logging level')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('train', help='Fit an HMM on paired feature/label files')
    p.add_argument('--features', nargs='+', default=None, help='Feature files or directories')
    p.add_argument('--labels', nargs='+', default=None, help='Label files or directories')
    p.add_argument('--manifest', type=str, default=None, help='CSV with columns stem,features,labels')
    p.add_argument('--out', required=True, help='Model JSON to write')
    p.add_argument('--diag-cov', action='store_true', help='Fit diagonal emission covariances')
    p.add_argument('--fps', type=_positive_float, default=None, help='Frame rate of the inputs')
    _add_phase_arguments(p)

    p = sub.add_parser('smooth', help='Causal moving average of a feature file')
    p.add_argument('--in', dest='input', required=True, help='Feature file')
    p.add_argument('--out', required=True, help='Smoothed feature file')
    p.add_argument('--window', type=_positive_int, default=None, help='Window in frames (default 15)')

    p = sub.add_parser('decode', help='Decode a feature file into phase labels')
    p.add_argument('--model', required=True, help='Model JSON')
    p.add_argument('--in', dest='input', required=True, help='Feature file')
    p.add_argument('--out', required=True, help='Label CSV to write')
    p.add_argument('--mode', choices=['offline', 'online'], default='offline')
    p.add_argument('--smooth-window', type=_positive_int, default=None,
                   help='Average the inputs over this many frames before decoding')
    p.add_argument('--names', action='store_true', help='Write phase names instead of indices')
    p.add_argument('--fps', type=_positive_float, default=None, help='Frame rate of the input')

    p = sub.add_parser('eval', help='Accuracy and margin Jaccard of predictions')
    p.add_argument('--pred', nargs='+', default=None, help='Prediction files or directories')
    p.add_argument('--gt', nargs='+', default=None, help='Ground-truth files or directories')
    p.add_argument('--manifest', type=str, default=None, help='CSV with columns stem,pred,gt')
    p.add_argument('--margin-seconds', type=_non_negative_float, default=None, help='Jaccard margin (default 10)')
    p.add_argument('--fps', type=_positive_float, default=None, help='Frame rate of both sequences')
    p.add_argument('--dump-frames', type=str, default=None,
                   help='Per-frame CSV (a directory when several videos are evaluated)')
    p.add_argument('--json', action='store_true', help='Print JSON instead of tables')
    _add_phase_arguments(p, from_model=True)

    p = sub.add_parser('upsample', help='Repeat labels back to the video frame rate')
    p.add_argument('--in', dest='input', required=True, help='Label CSV')
    p.add_argument('--out', required=True, help='Label CSV to write')
    p.add_argument('--factor', type=_positive_int, default=None, help='Repetitions per label (default 25)')
    p.add_argument('--target-frames', type=_non_negative_int, required=True, help='Frames of the original video')
    p.add_argument('--fps', type=_positive_float, default=None, help='Frame rate of the input')
    _add_phase_arguments(p, from_model=True)

    p = sub.add_parser('gen', help='Write a synthetic scenario to disk')
    p.add_argument('--out', required=True, help='Output directory')
    _add_scenario_arguments(p)

    p = sub.add_parser('bench', help='Compare the temporal methods on synthetic scenarios')
    p.add_argument('--seeds', type=_positive_int, default=None, help='Number of seeds (default 10)')
    p.add_argument('--n-jobs', type=int, default=None, help='Parallel seeds (joblib)')
    p.add_argument('--window', type=_positive_int, default=None, help='Averaging window in frames')
    p.add_argument('--margin-seconds', type=_non_negative_float, default=None, help='Jaccard margin')
    p.add_argument('--json', action='store_true', help='Print JSON instead of tables')
    _add_scenario_arguments(p)

    return parser


def _validate_arguments(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    """Flag combinations argparse cannot express; exits with status 2."""
    if args.command == 'train':
        if args.manifest and (args.features or args.labels):
            parser.error("train: --manifest cannot be combined with --features/--labels")
        if not args.manifest and not (args.features and args.labels):
            parser.error("train: needs --features and --labels, or --manifest")
    elif args.command == 'eval':
        if args.manifest and (args.pred or args.gt):
            parser.error("eval: --manifest cannot be combined with --pred/--gt")
        if not args.manifest and not (args.pred and args.gt):
            parser.error("eval: needs --pred and --gt, or --manifest")


def _phase_set(args: argparse.Namespace) -> Optional[PhaseSet]:
    """Phases from --phases, --num-phases or a model file; None leaves them to the labels."""
    if getattr(args, 'phases_model', None):
        return load_model(args.phases_model).phases
    if getattr(args, 'phases', None):
        if args.phases == 'surgical':
            return PhaseSet.surgical()
        return PhaseSet(tuple(name.strip() for name in args.phases.split(',')))
    if getattr(args, 'num_phases', None):
        return PhaseSet.for_size(args.num_phases)
    return None


def _infer_phases(phases: Optional[PhaseSet], label_seqs: Sequence[LabelSequence]) -> PhaseSet:
    if phases is not None:
        return phases
    K = max((int(labels.labels.max()) + 1 for labels in label_seqs if labels.T), default=1)
    return PhaseSet.for_size(K)


def _print_json(data: Any) -> None:
    print(json.dumps(_json_safe(data), indent=2))


def _json_safe(data: Any) -> Any:
    if isinstance(data, dict):
        return {key: _json_safe(value) for key, value in data.items()}
    if isinstance(data, (list, tuple)):
        return [_json_safe(value) for value in data]
    if isinstance(data, float) and not math.isfinite(data):
        return None
    return data


# ----------------------------------------------------------------------
# Commands


def cmd_train(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    """Fit and save an HMM; print its size, per-state frame counts and sparsity."""
    fps = args.fps if args.fps is not None else config['io']['fps']
    if args.manifest:
        pairs = read_manifest(args.manifest, ('features', 'labels'))
    else:
        pairs = pair_by_stem(collect_files(args.features, role='features'),
                             collect_files(args.labels, LABEL_SUFFIXES, role='labels'),
                             'features', 'labels')
    logger.info(f"Training on {len(pairs)} paired sequences")

    phases = _phase_set(args)
    obs_seqs, label_seqs = [], []
    for stem, features_path, labels_path in pairs:
        obs = read_logprobs(features_path, fps)
        labels = read_labels(labels_path, phases, fps)
        validate_pair(obs, labels)
        if obs_seqs and obs.D != obs_seqs[0].D:
            raise DimensionMismatchError(
                f"{stem} has D={obs.D} but {pairs[0][0]} has D={obs_seqs[0].D}")
        obs_seqs.append(obs)
        label_seqs.append(labels)

    phases = _infer_phases(phases, label_seqs)
    hmm = config['hmm']
    model, summary = fit_model(obs_seqs, label_seqs, phases.K, phases,
                               diag_cov=args.diag_cov or bool(hmm['diag_cov']),
                               reg_epsilon=float(hmm['reg_epsilon']),
                               reg_max=float(hmm['reg_max']))
    save_model(model, args.out)

    print(f"K = {model.K}")
    print(f"D = {model.D}")
    print(f"sequences = {summary.sequence_count}")
    for k, count in enumerate(summary.frame_counts):
        print(f"  {phases.label(k)}: {count} frames")
    print(f"zero transitions = {summary.zero_transitions}/{model.K * model.K} ({summary.sparsity:.1%})")
    return EXIT_OK


def cmd_smooth(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    smoother = TemporalSmoother(smoothing_config(config, window=args.window))
    obs = read_logprobs(args.input, config['io']['fps'])
    write_logprobs(smoother.smooth(obs), args.out)
    logger.info(f"Smoothed {obs.T} frames with window {smoother.window} into {args.out}")
    return EXIT_OK


def cmd_decode(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    """
    Decode a feature file.

    Online mode feeds frames one at a time through the (optional) smoother
    and the decoder, so no frame is read before all earlier ones are decoded.
    """
    model = load_model(args.model)
    fps = args.fps if args.fps is not None else config['io']['fps']
    obs = read_logprobs(args.input, fps)
    if obs.D != model.D:
        raise DimensionMismatchError(f"input {args.input} has D={obs.D}, model expects D={model.D}")

    smoother = TemporalSmoother(smoothing_config(config, window=args.smooth_window)) \
        if args.smooth_window else None

    if args.mode == 'offline':
        smoothed = smoother.smooth(obs) if smoother else obs
        result = viterbi_offline(model, smoothed)
        pred = result.states
        logger.info(f"Offline decode of {obs.T} frames, log joint {result.log_joint:.3f}")
    else:
        rows = iter(obs.data)
        if smoother:
            rows = smoother.stream(rows)
        states = list(OnlineDecoder(model).decode_stream(rows))
        pred = LabelSequence(np.asarray(states, dtype=np.int64), obs.fps)
        logger.info(f"Online decode of {obs.T} frames")

    write_labels(pred, args.out, model.phases, names=args.names)
    return EXIT_OK


def _eval_pairs(args: argparse.Namespace) -> List[Tuple[str, str, str]]:
    if args.manifest:
        return read_manifest(args.manifest, ('pred', 'gt'))
    preds = collect_files(args.pred, LABEL_SUFFIXES, role='pred')
    gts = collect_files(args.gt, LABEL_SUFFIXES, role='labels')
    if len(preds) == 1 and len(gts) == 1:
        return [(file_stem(preds[0]), preds[0], gts[0])]
    return pair_by_stem(preds, gts, 'pred', 'gt')


def cmd_eval(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    """Evaluate one prediction file or a set of videos paired by stem."""
    fps = args.fps if args.fps is not None else config['io']['fps']
    margin = args.margin_seconds if args.margin_seconds is not None \
        else config['evaluation']['margin_seconds']
    phases = _phase_set(args)

    loaded = []
    for stem, pred_path, gt_path in _eval_pairs(args):
        loaded.append((stem, read_labels(pred_path, phases, fps), read_labels(gt_path, phases, fps)))
    phases = _infer_phases(phases, [seq for _, pred, gt in loaded for seq in (pred, gt)])

    names, reports = [], []
    for stem, pred, gt in loaded:
        names.append(stem)
        reports.append(summarize(pred, gt, margin, phases.K))

    if args.dump_frames:
        if len(loaded) == 1:
            write_frame_dump(dump_frames(loaded[0][1], loaded[0][2]), args.dump_frames)
        else:
            for stem, pred, gt in loaded:
                write_frame_dump(dump_frames(pred, gt), os.path.join(args.dump_frames, f"{stem}.frames.csv"))
        logger.info(f"Wrote per-frame dump to {args.dump_frames}")

    if len(reports) == 1:
        if args.json:
            _print_json(reports[0].to_dict())
        else:
            print(render_report(reports[0], phases))
    else:
        agg = aggregate(names, reports)
        if args.json:
            _print_json(agg.to_dict())
        else:
            print(render_aggregate(agg, phases))
    return EXIT_OK


def cmd_upsample(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    fps = args.fps if args.fps is not None else config['io']['fps']
    factor = args.factor if args.factor is not None else int(config['io']['upsample_factor'])
    phases = _phase_set(args)
    pred = read_labels(args.input, phases, fps)
    write_labels(upsample(pred, factor, args.target_frames), args.out, phases)
    return EXIT_OK


def _scenario(args: argparse.Namespace, config: Dict[str, Any]):
    return scenario_config(config, K=args.K, D=args.D, T=args.T, n_train=args.n_train,
                           n_test=args.n_test, noise_scale=args.noise_scale,
                           dwell=args.dwell, seed=args.seed)


def cmd_gen(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    """Write train/ and test/ feature+label files and the ground-truth model."""
    scenario = _scenario(args, config)
    train, test = generate(scenario)
    for split, pairs in (('train', train), ('test', test)):
        for i, (labels, obs) in enumerate(pairs, start=1):
            stem = os.path.join(args.out, split, f"video{i:02d}")
            write_logprobs(obs, f"{stem}.features.csv")
            write_labels(labels, f"{stem}.labels.csv")
    save_model(build_scenario(scenario), os.path.join(args.out, 'model.json'))
    print(f"Wrote {len(train)} training and {len(test)} test sequences of {scenario.T} frames to {args.out}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    scenario = _scenario(args, config)
    bench = config['bench']
    report = run_bench(
        scenario,
        seeds=args.seeds if args.seeds is not None else int(bench['seeds']),
        smoothing=smoothing_config(config, window=args.window),
        margin_seconds=args.margin_seconds if args.margin_seconds is not None
        else config['evaluation']['margin_seconds'],
        n_jobs=args.n_jobs if args.n_jobs is not None else int(bench['n_jobs']),
    )
    if args.json:
        _print_json(report.to_dict())
    else:
        print(render_bench(report, PhaseSet.for_size(scenario.K)))
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace, Dict[str, Any]], int]] = {
    'train': cmd_train,
    'smooth': cmd_smooth,
    'decode': cmd_decode,
    'eval': cmd_eval,
    'upsample': cmd_upsample,
    'gen': cmd_gen,
    'bench': cmd_bench,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate_arguments(parser, args)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    try:
        config = load_config(args.config)
        setup_logger(level=args.log_level or config['logging']['level'],
                     log_file=config['logging'].get('file'))
        logger.debug(f"Running {args.command}")
        return COMMANDS[args.command](args, config)
    except ValidationError as e:
        log_exception(logger, e)
        return EXIT_USAGE
    except (PhaseHmmError, OSError) as e:
        log_exception(logger, e)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
