#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" CSV and JSON-lines reports
"""
import csv
import json
import logging

from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

from ..analysis import DynamicsReport, OverlapReport
from ..exceptions import ContractError, FormatError, IntegrityError, InputError
from ..importance import ImportanceReport, LayerScore
from ..moe import ExpertPartition
from ..surgery import PruningPlan
from ..train import EvalResult, LossPoint
from .container import PathLike, read_meta

LOGGER = logging.getLogger('UMCLOG')

IMPORTANCE_COLUMNS = ('component', 'layer', 'index', 'score', 'provenance')
LAYER_COLUMNS = ('component', 'layer', 'granularity', 'score')
HEAD_COLUMNS = ('component', 'layer', 'head', 'score', 'provenance')
OVERLAP_COLUMNS = ('layer', 'und_only', 'gen_only', 'shared')
DYNAMICS_COLUMNS = ('layer', 'always_active', 'inactive', 'sample_dependent')
LOSS_COLUMNS = ('step', 'loss_total', 'loss_und', 'loss_gen')
REPORT_COLUMNS = ('name', 'und_accuracy', 'und_perplexity', 'gen_mse', 'gen_fidelity',
                  'activated_params', 'total_params')
# Appended to every CSV row
PROVENANCE_COLUMNS = ('seed', 'config_hash')

CSV_HELP = """CSV column orders:
  importance  {}
  layers      {}
  heads       {}
  overlap     {}
  dynamics    {}
  loss        {}
  report      {}
  every file ends with {}""".format(*(','.join(c) for c in (IMPORTANCE_COLUMNS, LAYER_COLUMNS, HEAD_COLUMNS,
                                                            OVERLAP_COLUMNS, DYNAMICS_COLUMNS, LOSS_COLUMNS,
                                                            REPORT_COLUMNS, PROVENANCE_COLUMNS)))


class Provenance(NamedTuple):
    """ Seed and configuration hash carried by every artifact
    """
    seed: int
    config_hash: str

    @classmethod
    def from_meta(cls, meta: dict) -> 'Provenance':
        return cls(int(meta['seed']), meta['config_hash'])


def check_provenance(items: Sequence[Tuple[str, Provenance]]) -> str:
    """ Return the common configuration hash or raise IntegrityError
    """
    hashes = sorted({ p.config_hash for _, p in items })
    if len(hashes) > 1:
        detail = ', '.join('%s=%s' % (name, p.config_hash[:12]) for name, p in items)
        raise IntegrityError("Artifacts come from different configurations: %s" % detail)
    return hashes[0] if hashes else None


def write_csv(path: PathLike, columns: Sequence[str], rows: Iterable[Sequence], provenance: Provenance) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tail = (int(provenance.seed), provenance.config_hash)
    with path.open('w', newline='') as fh:
        writer = csv.writer(fh)
        writer.writerow(tuple(columns) + PROVENANCE_COLUMNS)
        for row in rows:
            writer.writerow(tuple(row) + tail)
    LOGGER.debug("Wrote %s", path)
    return path


def read_csv(path: PathLike) -> List[dict]:
    with Path(path).open(newline='') as fh:
        return list(csv.DictReader(fh))


def importance_rows(reports: Sequence[ImportanceReport]):
    for r in reports:
        for i, s in enumerate(r.scores):
            yield (r.component, r.layer, i, repr(float(s)), r.provenance_id)


def head_rows(reports: Sequence[ImportanceReport]):
    for r in reports:
        if r.head_scores is None:
            continue
        for h, s in enumerate(r.head_scores):
            yield (r.component, r.layer, h, repr(float(s)), r.provenance_id)


def layer_rows(scores: Sequence[LayerScore]):
    for s in scores:
        yield (s.component, s.layer, s.granularity, repr(s.score))


def overlap_rows(report: OverlapReport):
    for l in report.layers:
        yield ('%s:%d' % (l.component, l.layer), repr(l.und_only), repr(l.gen_only), repr(l.shared))


def dynamics_rows(report: DynamicsReport):
    for l in report.layers:
        yield ('%s:%d' % (l.component, l.layer), repr(l.always_active), repr(l.inactive),
               repr(l.sample_dependent))


def loss_rows(curve: Sequence[LossPoint]):
    for p in curve:
        yield (p.step, repr(p.loss_total), repr(p.loss_und), repr(p.loss_gen))


#
# JSON lines
#
# The first record of a JSON lines artifact is a header naming the artifact
# with its provenance.

def _header(artifact: str, provenance: Provenance, **extra) -> str:
    rec = dict(extra, artifact=artifact, seed=int(provenance.seed), config_hash=provenance.config_hash)
    return json.dumps(rec, sort_keys=True) + '\n'


def _read_jsonl(path: PathLike, artifact: Optional[str]) -> Tuple[dict, List[str]]:
    lines = [line for line in Path(path).read_text().splitlines() if line.strip()]
    try:
        header = json.loads(lines[0]) if lines else {}
    except json.JSONDecodeError as exc:
        raise FormatError("Invalid header in %s: %s" % (path, exc)) from None
    if header.get('artifact') is None or (artifact is not None and header['artifact'] != artifact):
        raise FormatError("%s is not a %s file (artifact '%s')" % (path, artifact, header.get('artifact')))
    if not isinstance(header.get('seed'), int) or not isinstance(header.get('config_hash'), str):
        raise FormatError("%s header lacks seed or config hash" % path)
    return header, lines[1:]


def write_plan(plan: PruningPlan, path: PathLike, provenance: Provenance) -> Path:
    path = Path(path)
    path.write_text(_header('plan', provenance, plan=plan.kind) + plan.to_jsonl())
    return path


def read_plan(path: PathLike, kind: str = None) -> PruningPlan:
    header, lines = _read_jsonl(path, 'plan')
    if kind is not None and header['plan'] != kind:
        raise ContractError("%s holds a '%s' plan, '%s' expected" % (path, header['plan'], kind))
    return PruningPlan.from_jsonl('\n'.join(lines), kind=header['plan'])


def write_partitions(partitions: Sequence[ExpertPartition], path: PathLike, provenance: Provenance) -> Path:
    path = Path(path)
    path.write_text(_header('partitions', provenance)
                    + ''.join(json.dumps(p.to_dict(), sort_keys=True) + '\n' for p in partitions))
    return path


def read_partitions(path: PathLike) -> List[ExpertPartition]:
    _, lines = _read_jsonl(path, 'partitions')
    return [ExpertPartition.from_dict(json.loads(line)).validate() for line in lines]


#
# Evaluation records
#

def write_eval(result: EvalResult, path: PathLike, name: str, provenance: Provenance) -> Path:
    path = Path(path)
    record = { 'name': name, 'seed': int(provenance.seed), 'config_hash': provenance.config_hash,
               'result': result.to_dict() }
    path.write_text(json.dumps(record, sort_keys=True, indent=2))
    return path


def read_eval(path: PathLike) -> dict:
    try:
        record = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError("Invalid evaluation record %s: %s" % (path, exc)) from None
    for key in ('name', 'seed', 'config_hash', 'result'):
        if key not in record:
            raise InputError("Evaluation record %s lacks '%s'" % (path, key))
    return record


def read_provenance(path: PathLike) -> Provenance:
    """ Provenance of any artifact, from its container header, JSON lines header,
        evaluation record or CSV columns
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == '.jsonl':
        header, _ = _read_jsonl(path, None)
        return Provenance.from_meta(header)
    if suffix == '.json':
        return Provenance.from_meta(read_eval(path))
    if suffix == '.csv':
        rows = read_csv(path)
        if not rows or any(c not in rows[0] for c in PROVENANCE_COLUMNS):
            raise InputError("%s carries no provenance columns" % path)
        return Provenance.from_meta(rows[0])
    return Provenance.from_meta(read_meta(path))


def join_report(records: Sequence[dict], others: Sequence[Tuple[str, Provenance]] = ()) -> List[tuple]:
    """ Rows of the comparison report

        Records and any further artifacts must come from the same configuration.
    """
    check_provenance([(r['name'], Provenance.from_meta(r)) for r in records] + list(others))
    rows = []
    for r in records:
        res = r['result']
        rows.append((r['name'],) + tuple(res[c] for c in REPORT_COLUMNS[1:]))
    return rows
