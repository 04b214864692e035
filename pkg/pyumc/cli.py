#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" Command line interface

    Exit codes: 0 success, 1 failed invariant or diagnostic, 2 usage error
"""
import os
import sys
import argparse
import logging

from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .version import __manifest__, __description__
from .config import load_configuration, read_config_file, write_config, confservice
from .logger import setup_log_handler, logfile_context
from .exceptions import CompressionError, ContractError, UsageError
from .data import TASKS, SPLITS, gen_dataset, make_calibration
from .trace import GRANULARITIES, EXPECTATIONS, record
from .importance import importance_reports, layer_scores
from .analysis import overlap, dynamics
from .surgery import plan_depth, plan_width, plan_heads, apply
from .moe import SETUPS, ConvertConfig, convert, partition_experts, setup_components
from .model import UnifiedToyModel, parameter_count
from .train import TrainConfig, evaluate, pretrain, tune
from .store import (save,
                    load_with_meta,
                    save_dataset,
                    load_dataset,
                    save_trace,
                    load_trace,
                    load_trace_with_meta,
                    load_pipeline,
                    PipelineConfig,
                    CalibrationSpec,
                    MoESpec)
from .store import artifacts
from .store.artifacts import Provenance

LOGGER = logging.getLogger('UMCLOG')

ADAPT_STAGES = {
    'expert-frozen': 'expert_frozen',
    'full': 'moe_full',
    'dense-finetune': 'dense_finetune',
}


class Workspace:
    """ Artifact store rooted at a directory
    """

    def __init__(self, root: str) -> None:
        self.root = Path(root)

    def output(self, name: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        return self.root / name

    def input(self, name: str) -> Path:
        """ Existing paths are used as is, others are looked up in the store
        """
        path = Path(name)
        if path.is_absolute() or path.exists():
            return path
        return self.root / path

    def sub(self, name: str) -> 'Workspace':
        return Workspace(str(self.root / name))


def _provenance(meta: dict) -> Provenance:
    return Provenance.from_meta(meta)


def _dataset(ws: Workspace, name: str):
    return load_dataset(ws.input(name))


def _trace_id(path: Path) -> str:
    stem = path.stem
    return stem[len('trace-'):] if stem.startswith('trace-') else stem


def _protected(text: Optional[str], component: str) -> Optional[List[Tuple[str, int]]]:
    """ Parse 'gen:0,gen:7' or '0,7' (layers of `component`)
    """
    if text is None:
        return None
    out = []
    for item in filter(None, (s.strip() for s in text.split(','))):
        comp, _, layer = item.rpartition(':')
        try:
            out.append((comp or component, int(layer)))
        except ValueError:
            raise UsageError("Invalid protected layer '%s'" % item) from None
    return out


def _loss_csv(ws: Workspace, stage: str, curve, prov: Provenance) -> Path:
    return artifacts.write_csv(ws.output('loss_%s.csv' % stage), artifacts.LOSS_COLUMNS,
                               artifacts.loss_rows(curve), prov)


#
# Steps shared by the subcommands and `run`
#

def step_calibrate(ws: Workspace, model: UnifiedToyModel, dataset, prov: Provenance, spec: CalibrationSpec,
                   workers: Optional[int] = None, expectation: Optional[str] = None,
                   weighted: bool = False) -> Tuple[object, Path]:
    batch = make_calibration(dataset, spec.task, count=spec.count, seed=spec.seed, split=spec.split,
                             steps=spec.steps)
    batch.id = spec.id or batch.id
    trace = record(model, batch, granularity=spec.granularity, expectation=expectation,
                   weighted=weighted, workers=workers)
    path = save_trace(trace, ws.output('trace-%s.umc' % batch.id), seed=spec.seed, chash=prov.config_hash)
    return trace, path


def step_score(ws: Workspace, model: UnifiedToyModel, trace, ident: str, prov: Provenance,
               component: Optional[str] = None):
    reports = importance_reports(trace, model, component)
    artifacts.write_csv(ws.output('scores-%s.csv' % ident), artifacts.IMPORTANCE_COLUMNS,
                        artifacts.importance_rows(reports), prov)
    artifacts.write_csv(ws.output('layers-%s.csv' % ident), artifacts.LAYER_COLUMNS,
                        artifacts.layer_rows(layer_scores(trace, trace.granularity, component)), prov)
    artifacts.write_csv(ws.output('heads-%s.csv' % ident), artifacts.HEAD_COLUMNS,
                        artifacts.head_rows(reports), prov)
    return reports


def step_prune(model: UnifiedToyModel, trace, kind: str, component: str, ratio: Optional[float],
               count: Optional[int], granularity: Optional[str], protected):
    if kind == 'depth':
        scores = layer_scores(trace, granularity or trace.granularity, component)
        if count is None:
            if ratio is None:
                raise UsageError("Depth pruning needs --count or --ratio")
            count = int(ratio * len(scores))
        plan = plan_depth(scores, count, protected)
    else:
        if ratio is None:
            raise UsageError("%s pruning needs --ratio" % kind.capitalize())
        if kind == 'width':
            plan = plan_width(importance_reports(trace, model, component), ratio, protected)
        else:
            plan = plan_heads(trace, model, ratio, component, protected)
    return plan, apply(model, plan)


def step_partition(model: UnifiedToyModel, trace, n_experts: int, components: Sequence[str],
                   shared: bool = True):
    partitions = []
    for component in components:
        for report in importance_reports(trace, model, component):
            partitions.append(partition_experts(report, n_experts, shared=shared))
    return partitions


def step_eval(ws: Workspace, model: UnifiedToyModel, dataset, name: str, prov: Provenance,
              split: str = 'heldout', seed: int = 0):
    result = evaluate(model, dataset, split=split, seed=seed)
    path = artifacts.write_eval(result, ws.output('eval-%s.json' % name), name,
                                Provenance(seed, prov.config_hash))
    return result, path


#
# Subcommands
#

def cmd_gen_data(args, ws: Workspace) -> str:
    cfg = load_pipeline(args.pipeline)
    dataset = gen_dataset(cfg.data)
    path = save_dataset(dataset, ws.output(args.out), chash=cfg.config_hash)
    return "%s: %d train / %d heldout samples, %d classes" % (path, len(dataset.train), len(dataset.heldout),
                                                            cfg.data.n_pattern_classes)


def cmd_pretrain(args, ws: Workspace) -> str:
    cfg = load_pipeline(args.pipeline)
    dataset = _dataset(ws, args.dataset)
    model = UnifiedToyModel.init(cfg.model)
    config = cfg.train_config('pretrain', steps=args.steps)
    result = pretrain(model, dataset, config)
    path = save(model, ws.output(args.out), chash=cfg.config_hash)
    _loss_csv(ws, 'pretrain', result.curve, Provenance(config.seed, cfg.config_hash))
    final = result.curve[-1].loss_total if result.curve else float('nan')
    return "%s: %d steps, final loss %.5f" % (path, len(result.curve), final)


def cmd_calibrate(args, ws: Workspace) -> str:
    model, meta = load_with_meta(ws.input(args.model))
    dataset = _dataset(ws, args.dataset)
    spec = CalibrationSpec(id=args.id or '', task=args.task, count=args.count, seed=args.seed,
                           split=args.split, granularity=args.granularity, steps=args.steps)
    trace, path = step_calibrate(ws, model, dataset, _provenance(meta), spec, workers=args.workers,
                                 expectation=args.expectation, weighted=args.weighted)
    return "%s: %s trace, %d layers, granularity %s" % (path, trace.task, len(trace.layers), trace.granularity)


def cmd_score(args, ws: Workspace) -> str:
    model = load_with_meta(ws.input(args.model))[0]
    path = ws.input(args.trace)
    trace, meta = load_trace_with_meta(path)
    ident = _trace_id(path)
    reports = step_score(ws, model, trace, ident, _provenance(meta), args.component)
    return "scores-%s.csv: %d layers scored (task %s)" % (ident, len(reports), trace.task)


def cmd_analyze_overlap(args, ws: Workspace) -> str:
    model, meta = load_with_meta(ws.input(args.model))
    t_und = load_trace(ws.input(args.trace_und))
    t_gen = load_trace(ws.input(args.trace_gen))
    report = overlap(importance_reports(t_und, model, args.component),
                     importance_reports(t_gen, model, args.component), p=args.p)
    path = artifacts.write_csv(ws.output(args.out), artifacts.OVERLAP_COLUMNS, artifacts.overlap_rows(report),
                               _provenance(meta))
    shared = sum(l.shared for l in report.layers) / max(1, len(report.layers))
    return "%s: %d layers, mean shared fraction %.4f" % (path, len(report.layers), shared)


def cmd_analyze_dynamics(args, ws: Workspace) -> str:
    trace, meta = load_trace_with_meta(ws.input(args.trace))
    report = dynamics(trace, args.component)
    path = artifacts.write_csv(ws.output(args.out), artifacts.DYNAMICS_COLUMNS, artifacts.dynamics_rows(report),
                               _provenance(meta))
    n = max(1, len(report.layers))
    return "%s: %d layers, mean sample dependent fraction %.4f" % (
           path, len(report.layers), sum(l.sample_dependent for l in report.layers) / n)


def cmd_prune(args, ws: Workspace) -> str:
    model, meta = load_with_meta(ws.input(args.model))
    trace = load_trace(ws.input(args.trace))
    if args.task and args.task != trace.task:
        raise ContractError("Trace was recorded on '%s' data, '%s' requested" % (trace.task, args.task))
    plan, pruned = step_prune(model, trace, args.kind, args.component, args.ratio, args.count, args.granularity,
                              _protected(args.protect, args.component))
    out = ws.output(args.out or 'pruned-%s.umc' % args.kind)
    save(pruned, out, chash=meta['config_hash'])
    artifacts.write_plan(plan, ws.output('plan-%s.jsonl' % args.kind), _provenance(meta))
    return "%s: %d %s removals, %d parameters" % (out, len(plan), args.kind, parameter_count(pruned))


def cmd_partition_experts(args, ws: Workspace) -> str:
    model, meta = load_with_meta(ws.input(args.model))
    trace = load_trace(ws.input(args.trace))
    components = ('und', 'gen') if args.component == 'all' else (args.component,)
    partitions = step_partition(model, trace, args.experts, components, shared=not args.no_shared)
    path = artifacts.write_partitions(partitions, ws.output(args.out), _provenance(meta))
    return "%s: %d layers, E=%d" % (path, len(partitions), args.experts)


def cmd_convert(args, ws: Workspace) -> str:
    model, meta = load_with_meta(ws.input(args.model))
    source = ws.input(args.partitions)
    artifacts.check_provenance([(args.model, _provenance(meta)), (args.partitions, artifacts.read_provenance(source))])
    partitions = artifacts.read_partitions(source)
    if not partitions:
        raise ContractError("No partitions in %s" % args.partitions)
    n_experts = args.experts or partitions[0].n_experts
    moe = convert(model, partitions, ConvertConfig(n_experts=n_experts, k=args.k, ratio=args.ratio,
                                                   setup=args.setup, dense_equivalent=args.dense_equivalent))
    path = save(moe, ws.output(args.out), chash=meta['config_hash'])
    return "%s: setup %s, E=%d, modes %s" % (path, args.setup, n_experts,
                                              ','.join('%s=%s' % kv for kv in sorted(moe.moe_modes.items())))


def cmd_adapt(args, ws: Workspace) -> str:
    stage = ADAPT_STAGES[args.stage]
    model, meta = load_with_meta(ws.input(args.model))
    dataset = _dataset(ws, args.dataset)
    overrides = { 'steps': args.steps, 'force': True if args.force else None, 'w_aux': args.w_aux,
                  'seed': args.seed }
    if args.pipeline:
        config = load_pipeline(args.pipeline).train_config(stage, **overrides)
    else:
        config = TrainConfig.from_dict(dict({ k: v for k, v in overrides.items() if v is not None }, stage=stage))
    result = tune(model, dataset, config)
    path = save(model, ws.output(args.out or '%s.umc' % stage), chash=meta['config_hash'])
    _loss_csv(ws, stage, result.curve, Provenance(config.seed, meta['config_hash']))
    final = result.curve[-1].loss_total if result.curve else float('nan')
    return "%s: %s %d steps, final loss %.5f" % (path, stage, len(result.curve), final)


def cmd_eval(args, ws: Workspace) -> str:
    path = ws.input(args.model)
    model, meta = load_with_meta(path)
    dataset = _dataset(ws, args.dataset)
    name = args.name or path.stem
    result, out = step_eval(ws, model, dataset, name, _provenance(meta), split=args.split, seed=args.seed)
    return "%s: %s" % (name, result.summary())


def cmd_report(args, ws: Workspace) -> str:
    """ Evaluation records (.json) become rows, every other input is only checked for its provenance
    """
    records, others = [], []
    for name in args.inputs:
        path = ws.input(name)
        if path.suffix.lower() == '.json':
            records.append(artifacts.read_eval(path))
        else:
            others.append((name, artifacts.read_provenance(path)))
    if not records:
        raise UsageError("report needs at least one evaluation record")
    rows = artifacts.join_report(records, others)
    path = artifacts.write_csv(ws.output(args.out), artifacts.REPORT_COLUMNS, rows,
                               Provenance.from_meta(records[0]))
    return "%s: %d entries" % (path, len(rows))


def cmd_run(args, ws: Workspace) -> str:
    cfg = load_pipeline(args.pipeline)
    return run_pipeline(cfg, ws.sub(cfg.output))


def run_pipeline(cfg: PipelineConfig, ws: Workspace) -> str:
    """ gen-data, pretrain, calibrate, score, [prune], partition, convert, adapt, eval, report
    """
    chash = cfg.config_hash
    prov = Provenance(cfg.seed, chash)
    evals = []

    def evaluate_as(model, name):
        evals.append(artifacts.read_eval(step_eval(ws, model, dataset, name, prov, seed=cfg.seed)[1]))

    def tune_as(model, stage):
        config = cfg.train_config(stage)
        result = tune(model, dataset, config)
        _loss_csv(ws, stage, result.curve, Provenance(config.seed, chash))
        save(model, ws.output('%s.umc' % stage), chash=chash)
        evaluate_as(model, stage)

    dataset = gen_dataset(cfg.data)
    save_dataset(dataset, ws.output('dataset.umc'), chash=chash)

    dense = UnifiedToyModel.init(cfg.model)
    config = cfg.train_config('pretrain')
    result = pretrain(dense, dataset, config)
    save(dense, ws.output('dense.umc'), chash=chash)
    _loss_csv(ws, 'pretrain', result.curve, Provenance(config.seed, chash))
    evaluate_as(dense, 'dense')

    specs = cfg.calibration or [CalibrationSpec(id='und', task='understanding', seed=cfg.seed),
                                CalibrationSpec(id='gen', task='generation', seed=cfg.seed)]
    traces = {}
    for spec in specs:
        traces[spec.id] = step_calibrate(ws, dense, dataset, prov, spec)[0]
        step_score(ws, dense, traces[spec.id], spec.id, prov)

    def trace_for(task, ident):
        ref = (cfg.calibration_for(task, ident) if cfg.calibration
               else next(s for s in specs if s.task == task))
        if ref is None:
            raise ContractError("No '%s' calibration declared" % task, locator='calibration')
        return traces[ref.id]

    if cfg.pruning is not None:
        p = cfg.pruning
        trace = trace_for('generation', p.calibration)
        plan, pruned = step_prune(dense, trace, p.kind, p.component, p.ratio, p.count, p.granularity,
                                  p.protected)
        save(pruned, ws.output('pruned-%s.umc' % p.kind), chash=chash)
        artifacts.write_plan(plan, ws.output('plan-%s.jsonl' % p.kind), prov)
        evaluate_as(pruned, 'pruned-%s' % p.kind)
        if 'dense_finetune' in cfg.training:
            tune_as(pruned, 'dense_finetune')

    m = cfg.moe or MoESpec()
    trace = trace_for('generation', m.calibration)
    partitions = step_partition(dense, trace, m.experts, setup_components(m.setup), shared=m.shared)
    artifacts.write_partitions(partitions, ws.output('partitions.jsonl'), prov)
    moe = convert(dense, partitions, ConvertConfig(n_experts=m.experts, k=m.k, ratio=m.ratio, setup=m.setup))
    save(moe, ws.output('moe.umc'), chash=chash)
    evaluate_as(moe, 'zeroshot')

    for stage in ('expert_frozen', 'moe_full'):
        tune_as(moe, stage)

    path = artifacts.write_csv(ws.output('report.csv'), artifacts.REPORT_COLUMNS, artifacts.join_report(evals),
                               prov)
    return "%s: %s" % (path, ' '.join('%s=%.3f' % (e['name'], e['result']['gen_fidelity']) for e in evals))


#
# Parser
#

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='umc', description=__description__,
                                     epilog=artifacts.CSV_HELP,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument('-d', '--debug', action='store_true', default=False, help="Set debug mode")
    parser.add_argument('-c', '--config', metavar='PATH', dest='config', default=None,
                        help="Configuration file")
    parser.add_argument('--store', metavar='DIR', default=None, help="Artifact store root directory")
    parser.add_argument('--version', action='store_true', default=False, help="Print version and exit")
    parser.add_argument('--dump-config', action='store_true', help="Dump the configuration and exit")

    sub = parser.add_subparsers(dest='command', metavar='COMMAND')

    def command(name, func, help):
        p = sub.add_parser(name, help=help, epilog=artifacts.CSV_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.set_defaults(func=func)
        return p

    def model_arg(p):
        p.add_argument('--model', required=True, metavar='PATH', help="Model checkpoint")

    def dataset_arg(p):
        p.add_argument('--dataset', default='dataset.umc', metavar='PATH', help="Dataset artifact")

    p = command('gen-data', cmd_gen_data, "Generate the synthetic dataset")
    p.add_argument('--pipeline', required=True, metavar='YAML')
    p.add_argument('--out', default='dataset.umc')

    p = command('pretrain', cmd_pretrain, "Train the dense baseline")
    p.add_argument('--pipeline', required=True, metavar='YAML')
    p.add_argument('--steps', type=int, default=None)
    p.add_argument('--out', default='dense.umc')
    dataset_arg(p)

    p = command('calibrate', cmd_calibrate, "Record activation statistics")
    model_arg(p)
    dataset_arg(p)
    p.add_argument('--task', required=True, choices=TASKS)
    p.add_argument('--count', type=int, default=32)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--split', choices=SPLITS, default='train')
    p.add_argument('--granularity', choices=GRANULARITIES, default='block')
    p.add_argument('--steps', type=int, default=None, help="Sampling steps for generation")
    p.add_argument('--id', default=None, help="Calibration id")
    p.add_argument('--workers', type=int, default=None)
    p.add_argument('--expectation', choices=EXPECTATIONS, default=None)
    p.add_argument('--weighted', action='store_true', help="Weight membership by down projection norms")

    p = command('score', cmd_score, "Layer, neuron and head importance")
    model_arg(p)
    p.add_argument('--trace', required=True)
    p.add_argument('--component', choices=('und', 'gen'), default=None)

    p = command('analyze-overlap', cmd_analyze_overlap, "Neuron overlap between tasks")
    model_arg(p)
    p.add_argument('--trace-und', required=True)
    p.add_argument('--trace-gen', required=True)
    p.add_argument('--component', choices=('und', 'gen'), default='und')
    p.add_argument('-p', type=float, default=0.5)
    p.add_argument('--out', default='overlap.csv')

    p = command('analyze-dynamics', cmd_analyze_dynamics, "Activation dynamics")
    p.add_argument('--trace', required=True)
    p.add_argument('--component', choices=('und', 'gen'), default='gen')
    p.add_argument('--out', default='dynamics.csv')

    p = command('prune', cmd_prune, "Depth, width or head pruning")
    p.add_argument('kind', choices=('depth', 'width', 'heads'))
    model_arg(p)
    p.add_argument('--trace', required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument('--ratio', type=float, default=None)
    group.add_argument('--count', type=int, default=None)
    p.add_argument('--component', choices=('und', 'gen'), default='und')
    p.add_argument('--granularity', choices=GRANULARITIES, default=None)
    p.add_argument('--protect', default=None, metavar='LAYERS', help="e.g. gen:0,gen:7")
    p.add_argument('--task', choices=TASKS, default=None, help="Require a trace of this task")
    p.add_argument('--out', default=None)

    p = command('partition-experts', cmd_partition_experts, "Snake partition of MLP neurons")
    model_arg(p)
    p.add_argument('--trace', required=True)
    p.add_argument('--experts', type=int, default=16)
    p.add_argument('--component', choices=('und', 'gen', 'all'), default='gen')
    p.add_argument('--no-shared', action='store_true', help="Route every expert")
    p.add_argument('--out', default='partitions.jsonl')

    p = command('convert', cmd_convert, "Convert dense MLPs to MoE layers")
    model_arg(p)
    p.add_argument('--partitions', required=True)
    p.add_argument('--experts', type=int, default=None)
    p.add_argument('--k', type=int, default=None)
    p.add_argument('--ratio', type=float, default=0.5, help="Activation ratio")
    p.add_argument('--config', dest='setup', choices=SETUPS, default='gen')
    p.add_argument('--dense-equivalent', action='store_true', help="Serve every expert")
    p.add_argument('--out', default='moe.umc')

    p = command('adapt', cmd_adapt, "Expert-frozen, full or dense tuning")
    p.add_argument('stage', choices=sorted(ADAPT_STAGES))
    model_arg(p)
    dataset_arg(p)
    p.add_argument('--pipeline', default=None, metavar='YAML')
    p.add_argument('--steps', type=int, default=None)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--w-aux', type=float, default=None, help="Load balancing weight")
    p.add_argument('--force', action='store_true', help="Skip the stage order check")
    p.add_argument('--out', default=None)

    p = command('eval', cmd_eval, "Evaluate a model")
    model_arg(p)
    dataset_arg(p)
    p.add_argument('--name', default=None)
    p.add_argument('--split', choices=SPLITS, default='heldout')
    p.add_argument('--seed', type=int, default=0)

    p = command('report', cmd_report, "Join evaluation records")
    p.add_argument('--inputs', nargs='+', required=True)
    p.add_argument('--out', default='report.csv')

    p = command('run', cmd_run, "Run a full pipeline")
    p.add_argument('--pipeline', required=True, metavar='YAML')

    return parser


def print_version() -> None:
    program = os.path.basename(sys.argv[0])
    print("{program} {version} (build {buildid},commit {commitid})".format(program=program, **__manifest__),
          file=sys.stderr)


def read_configuration(parser: argparse.ArgumentParser, argv: Optional[Sequence[str]] = None):
    """ Parse command line and read configuration file
    """
    args = parser.parse_args(argv)

    load_configuration()

    if args.config:
        read_config_file(args.config)

    if args.store:
        confservice.set('store', 'root', args.store)

    if args.debug:
        # Force debug mode
        confservice.set('logging', 'level', 'DEBUG')

    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    """ Run a subcommand, return the exit code
    """
    parser = build_parser()
    try:
        args = read_configuration(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except CompressionError as exc:
        print("umc: error: %s" % exc.description, file=sys.stderr)
        return exc.exit_code

    if args.version:
        print_version()
        return 0

    if args.dump_config:
        write_config(sys.stdout)
        return 0

    if not LOGGER.handlers:
        setup_log_handler()

    if args.command is None:
        parser.print_usage(sys.stderr)
        print("umc: error: a subcommand is required", file=sys.stderr)
        return UsageError.exit_code

    ws = Workspace(confservice.get('store', 'root'))
    ws.root.mkdir(parents=True, exist_ok=True)
    try:
        if confservice.getboolean('store', 'command_logs', fallback=True):
            with logfile_context(str(ws.root), args.command):
                summary = args.func(args, ws)
        else:
            summary = args.func(args, ws)
    except CompressionError as exc:
        LOGGER.error("%s: %s", exc.name, exc.description)
        print("umc: error: %s" % exc.description, file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        LOGGER.error("%s", exc)
        print("umc: error: %s" % exc, file=sys.stderr)
        return 1

    print(summary)
    return 0
