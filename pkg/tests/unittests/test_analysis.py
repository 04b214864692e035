import pytest

import numpy as np

from pyumc.analysis import dynamics, monte_carlo_overlap, overlap
from pyumc.data import CalibrationBatch, make_calibration
from pyumc.exceptions import ContractError, InputError
from pyumc.importance import ImportanceReport, importance_reports
from pyumc.trace import merge, record


def reports(component, *scores):
    return [ImportanceReport(component, i, np.asarray(s, dtype=float)) for i, s in enumerate(scores)]


def test_identical_reports():
    scores = np.random.default_rng(0).random(16)
    result = overlap(reports('und', scores), reports('und', scores))
    [layer] = result.layers
    assert (layer.und_only, layer.gen_only, layer.shared) == (0.0, 0.0, 1.0)


def test_reversed_reports():
    scores = np.arange(16.)
    [layer] = overlap(reports('und', scores), reports('und', scores[::-1])).layers
    assert layer.shared == 0
    assert layer.und_only == pytest.approx(0.5)
    assert layer.gen_only == pytest.approx(0.5)


def test_fractions_sum_to_one():
    rng = np.random.default_rng(4)
    result = overlap(reports('gen', rng.random(12), rng.random(12)),
                     reports('gen', rng.random(12), rng.random(12)), p=0.25)
    for layer in result.layers:
        assert layer.und_only + layer.gen_only + layer.shared == pytest.approx(1.0)


def test_overlap_is_symmetric():
    rng = np.random.default_rng(7)
    a = reports('und', rng.random(16), rng.random(16))
    b = reports('und', rng.random(16), rng.random(16))
    for p in (0.25, 0.5, 0.75):
        for ab, ba in zip(overlap(a, b, p).layers, overlap(b, a, p).layers):
            assert ab.shared == ba.shared
            assert (ab.und_only, ab.gen_only) == (ba.gen_only, ba.und_only)


def test_random_overlap_is_one_third():
    assert monte_carlo_overlap(128, 0.5, 20) == pytest.approx(1 / 3, abs=0.05)


def test_overlap_errors():
    with pytest.raises(ContractError):
        overlap(reports('und', np.arange(8.)), reports('und', np.arange(6.)))
    with pytest.raises(ContractError):
        overlap(reports('und', np.arange(8.), np.arange(8.)), reports('und', np.arange(8.)))
    with pytest.raises(InputError):
        overlap(reports('und', np.arange(8.)), reports('und', np.arange(8.)), p=1.0)


def test_overlap_on_model(small_model, und_batch, gen_batch, float64):
    und = importance_reports(record(small_model, und_batch), small_model, component='gen')
    gen = importance_reports(record(small_model, gen_batch), small_model, component='gen')
    # The understanding batch never reaches the generation stack
    assert all(not r.scores.any() for r in und)
    result = overlap(importance_reports(record(small_model, und_batch), small_model, component='und'),
                     importance_reports(record(small_model, gen_batch), small_model, component='und'))
    assert len(result.layers) == 3
    assert len(gen) == 3


def single_prompt(gen_batch):
    return CalibrationBatch(task='generation', samples=gen_batch.samples[:1], classes=gen_batch.classes[:1],
                            seed=0, steps=1, id='single')


def test_single_observation(small_model, gen_batch, float64):
    trace = record(small_model, single_prompt(gen_batch))
    for layer in dynamics(trace, 'gen').layers:
        assert layer.observations == 1
        assert layer.always_active == pytest.approx(0.5)
        assert layer.inactive == pytest.approx(0.5)
        assert layer.sample_dependent == 0


def test_duplicated_observation(small_model, gen_batch, float64):
    trace = record(small_model, single_prompt(gen_batch))
    single = dynamics(trace, 'gen')
    doubled = dynamics(merge(trace, trace), 'gen')
    for a, b in zip(single.layers, doubled.layers):
        assert (a.always_active, a.inactive, a.sample_dependent) == (b.always_active, b.inactive,
                                                                     b.sample_dependent)


def test_generation_has_sample_dependent_neurons(small_model, small_dataset, float64):
    batch = make_calibration(small_dataset, 'generation', count=16, seed=1, steps=8)
    report = dynamics(record(small_model, batch), 'gen')
    assert all(layer.observations == 16 * 8 for layer in report.layers)
    assert sum(layer.sample_dependent for layer in report.layers) > 0
    for layer in report.layers:
        assert layer.always_active + layer.inactive + layer.sample_dependent == pytest.approx(1.0)


def test_dynamics_empty_trace(small_model, und_batch, float64):
    trace = record(small_model, und_batch)
    with pytest.raises(InputError):
        dynamics(trace, 'gen')
    with pytest.raises(InputError):
        dynamics(trace.empty_like())


def test_weighted_dynamics_monotone_in_observations(small_model, gen_batch, float64):
    trace = None
    history = []
    for i in range(len(gen_batch.samples)):
        batch = CalibrationBatch(task='generation', samples=gen_batch.samples[i:i + 1],
                                 classes=gen_batch.classes[i:i + 1], seed=i, steps=2, id='s%d' % i)
        part = record(small_model, batch, weighted=True)
        trace = part if trace is None else merge(trace, part)
        report = dynamics(trace, 'gen')
        assert report.weighted
        history.append(report.layers)
    # More observations only move neurons out of the always active and inactive sets
    for before, after in zip(history, history[1:]):
        for a, b in zip(before, after):
            assert b.observations == a.observations + 2
            assert b.always_active <= a.always_active
            assert b.inactive <= a.inactive
            assert b.sample_dependent >= a.sample_dependent
