import json
import pytest
import yaml

from pyumc.cli import main
from pyumc.config import load_configuration
from pyumc.store import load, load_dataset, load_trace, read_meta
from pyumc.store.artifacts import (PROVENANCE_COLUMNS,
                                   REPORT_COLUMNS,
                                   Provenance,
                                   read_csv,
                                   read_eval,
                                   read_partitions,
                                   read_plan,
                                   read_provenance,
                                   write_partitions,
                                   write_plan)

from test_common import SMALL_DATA, SMALL_MODEL


@pytest.fixture(autouse=True)
def reset_config():
    yield
    load_configuration()


@pytest.fixture
def pipeline(tmp_path):
    doc = {
        'seed': 1,
        'output': 'small',
        'model': dict(SMALL_MODEL),
        'data': dict(SMALL_DATA),
        'calibration': [{ 'id': 'und', 'task': 'understanding', 'count': 8 },
                        { 'id': 'gen', 'task': 'generation', 'count': 8 }],
        'pruning': { 'kind': 'width', 'component': 'und', 'ratio': 0.25, 'calibration': 'gen' },
        'moe': { 'experts': 4, 'calibration': 'gen' },
        'training': { 'pretrain': { 'steps': 2, 'batch_size': 4 },
                      'expert_frozen': { 'steps': 2, 'batch_size': 4 },
                      'moe_full': { 'steps': 2, 'batch_size': 4 } },
    }
    path = tmp_path / 'pipeline.yml'
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def umc(store, *args):
    return main(['--store', str(store)] + [str(a) for a in args])


def test_help_and_version():
    assert main(['--help']) == 0
    assert main(['--version']) == 0


def test_usage_errors(tmp_path):
    assert umc(tmp_path) == 2
    assert umc(tmp_path, 'compress') == 2
    assert umc(tmp_path, 'prune', 'width', '--model', 'dense.umc') == 2


def test_missing_input(tmp_path):
    assert umc(tmp_path, 'eval', '--model', 'missing.umc') == 1


def test_bad_checkpoint(tmp_path):
    (tmp_path / 'dense.umc').write_bytes(b'GGUF' + bytes(64))
    assert umc(tmp_path, 'eval', '--model', 'dense.umc') == 1


def test_command_flow(tmp_path, pipeline, capsys):
    store = tmp_path / 'store'
    assert umc(store, 'gen-data', '--pipeline', pipeline) == 0
    assert len(load_dataset(store / 'dataset.umc').train) == SMALL_DATA['n_train']

    assert umc(store, 'pretrain', '--pipeline', pipeline) == 0
    assert [r['step'] for r in read_csv(store / 'loss_pretrain.csv')] == ['1', '2']
    chash = read_meta(store / 'dense.umc')['config_hash']
    assert read_meta(store / 'dataset.umc')['config_hash'] == chash

    assert umc(store, 'calibrate', '--model', 'dense.umc', '--task', 'understanding', '--count', 8,
               '--id', 'und') == 0
    assert umc(store, 'calibrate', '--model', 'dense.umc', '--task', 'generation', '--count', 8,
               '--id', 'gen', '--workers', 2) == 0
    trace = load_trace(store / 'trace-gen.umc')
    assert trace.task == 'generation'
    assert read_meta(store / 'trace-gen.umc')['config_hash'] == chash

    assert umc(store, 'score', '--model', 'dense.umc', '--trace', 'trace-gen.umc') == 0
    for name in ('scores-gen.csv', 'layers-gen.csv', 'heads-gen.csv'):
        assert (store / name).exists()

    assert umc(store, 'analyze-overlap', '--model', 'dense.umc', '--trace-und', 'trace-und.umc',
               '--trace-gen', 'trace-gen.umc') == 0
    assert len(read_csv(store / 'overlap.csv')) == SMALL_MODEL['n_layers_und']
    assert umc(store, 'analyze-dynamics', '--trace', 'trace-gen.umc') == 0
    assert len(read_csv(store / 'dynamics.csv')) == SMALL_MODEL['n_layers_gen']

    # The understanding trace does not match the requested task
    assert umc(store, 'prune', 'width', '--model', 'dense.umc', '--trace', 'trace-und.umc', '--ratio', 0.25,
               '--task', 'generation') == 1
    assert umc(store, 'prune', 'width', '--model', 'dense.umc', '--trace', 'trace-gen.umc', '--ratio', 0.25,
               '--task', 'generation') == 0
    pruned = load(store / 'pruned-width.umc')
    assert [b.mlp.width for b in pruned.blocks('und')] == [12, 12, 12]
    assert read_plan(store / 'plan-width.jsonl').kind == 'width'

    assert umc(store, 'partition-experts', '--model', 'dense.umc', '--trace', 'trace-gen.umc',
               '--experts', 4) == 0
    partitions = read_partitions(store / 'partitions.jsonl')
    assert [(p.component, p.layer) for p in partitions] == [('gen', 0), ('gen', 1), ('gen', 2)]

    assert umc(store, 'convert', '--model', 'dense.umc', '--partitions', 'partitions.jsonl') == 0
    moe = load(store / 'moe.umc')
    assert [b.mlp.kind for b in moe.blocks('gen')] == ['dense', 'moe', 'dense']

    # Full tuning needs the expert frozen stage first
    assert umc(store, 'adapt', 'full', '--model', 'moe.umc', '--steps', 1) == 1
    assert umc(store, 'adapt', 'expert-frozen', '--model', 'moe.umc', '--pipeline', pipeline) == 0
    assert umc(store, 'adapt', 'full', '--model', 'expert_frozen.umc', '--steps', 1, '--w-aux', 0.01) == 0
    assert load(store / 'moe_full.umc').stage_history[-2:] == ['expert_frozen', 'moe_full']
    assert len(read_csv(store / 'loss_moe_full.csv')) == 1

    for name in ('dense', 'moe_full'):
        assert umc(store, 'eval', '--model', '%s.umc' % name) == 0
    record = read_eval(store / 'eval-dense.json')
    assert record['config_hash'] == chash

    assert umc(store, 'report', '--inputs', 'eval-dense.json', 'eval-moe_full.json') == 0
    rows = read_csv(store / 'report.csv')
    assert [r['name'] for r in rows] == ['dense', 'moe_full']
    assert set(rows[0]) == set(REPORT_COLUMNS + PROVENANCE_COLUMNS)
    assert { r['config_hash'] for r in rows } == { chash }
    assert read_provenance(store / 'plan-width.jsonl').config_hash == chash

    # Artifacts of another configuration are rejected
    other = Provenance(1, 'cd' * 32)
    write_plan(read_plan(store / 'plan-width.jsonl'), store / 'plan-other.jsonl', other)
    assert umc(store, 'report', '--inputs', 'eval-dense.json', 'plan-width.jsonl') == 0
    assert umc(store, 'report', '--inputs', 'eval-dense.json', 'plan-other.jsonl') == 1
    write_partitions(partitions, store / 'partitions-other.jsonl', other)
    assert umc(store, 'convert', '--model', 'dense.umc', '--partitions', 'partitions-other.jsonl') == 1

    assert (store / 'pretrain.log').exists()
    assert 'moe_full' in capsys.readouterr().out


def test_report_rejects_mixed_runs(tmp_path):
    for name, chash in (('a', 'ab' * 32), ('b', 'cd' * 32)):
        (tmp_path / ('eval-%s.json' % name)).write_text(json.dumps({
            'name': name, 'seed': 0, 'config_hash': chash,
            'result': { 'und_accuracy': 0.5, 'und_perplexity': 2.0, 'gen_fidelity': 0.5,
                        'total_params': 10, 'activated_params': 10, 'moe_activated_fraction': None },
        }))
    assert umc(tmp_path, 'report', '--inputs', 'eval-a.json', 'eval-b.json') == 1


def test_run_pipeline(tmp_path, pipeline):
    store = tmp_path / 'store'
    assert umc(store, 'run', '--pipeline', pipeline) == 0
    out = store / 'small'
    names = [r['name'] for r in read_csv(out / 'report.csv')]
    assert names == ['dense', 'pruned-width', 'zeroshot', 'expert_frozen', 'moe_full']
    for name in ('dataset.umc', 'dense.umc', 'trace-und.umc', 'trace-gen.umc', 'scores-gen.csv',
                 'plan-width.jsonl', 'partitions.jsonl', 'moe.umc', 'moe_full.umc', 'loss_expert_frozen.csv'):
        assert (out / name).exists(), name
    assert load(out / 'moe_full.umc').stage_history[-2:] == ['expert_frozen', 'moe_full']
