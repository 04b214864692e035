import pytest

import numpy as np

from pyumc import numerics as nx
from pyumc.data import CalibrationBatch, make_calibration
from pyumc.exceptions import ContractError
from pyumc.importance import head_scores, importance_reports, layer_scores, neuron_scores, rank
from pyumc.model import ForwardProbe, ModelConfig, UnifiedToyModel, forward_und
from pyumc.trace import ActivationTrace, LayerStats, TraceProbe, model_topology, record


class Capture(ForwardProbe):

    def __init__(self):
        self.hidden = {}
        self.blocks = {}

    def mlp_hidden(self, component, layer, h):
        self.hidden.setdefault((component, layer), []).append(h.copy())

    def block(self, component, layer, x, y):
        self.blocks.setdefault((component, layer), []).append((x.copy(), y.copy()))


@pytest.fixture
def narrow_model():
    """ d=4, dm=8 model for the ablation oracle
    """
    config = ModelConfig(vocab_size=16, d_model=4, mlp_expansion=2, n_layers_und=2, n_layers_gen=2, n_heads=2,
                         gen_output_dim=4, gen_steps=2, gen_length=2, max_len=12, timestep_features=4, seed=3)
    with nx.precision('float64'):
        return UnifiedToyModel.init(config)


def empty_trace(model):
    trace = ActivationTrace(task='understanding', granularity='block', top_p=0.5, expectation='token',
                            weighted=False)
    trace.layers = { k: LayerStats.empty(w, h) for k, (w, h) in model_topology(model).items() }
    return trace


def test_neuron_scores_match_ablation(narrow_model, small_dataset, float64):
    batch = make_calibration(small_dataset, 'understanding', count=16, seed=2)
    trace = record(narrow_model, batch, expectation='token')
    probe = Capture()
    forward_und(narrow_model, batch.samples, probe=probe)
    for b in narrow_model.blocks('und'):
        assert b.mlp.width == 8
        h = np.concatenate([x.reshape(-1, 8) for x in probe.hidden[('und', b.index)]])
        wd = b.mlp.wd.data
        full = h @ wd.T
        brute = np.empty(8)
        for i in range(8):
            ablated = h.copy()
            ablated[:, i] = 0
            brute[i] = np.linalg.norm(full - ablated @ wd.T, axis=-1).mean()
        scores = neuron_scores(trace, narrow_model, 'und', b.index)
        assert np.allclose(scores, brute, atol=1e-6)
        assert rank(scores).tolist() == rank(brute).tolist()


def test_neuron_score_arithmetic(small_model):
    trace = empty_trace(small_model)
    stats = trace.stats('und', 0)
    # |h_0| takes the values 1 and 3, neuron 1 is dead
    stats.abs_sum[0] = 1 + 3
    stats.tokens = 2
    mlp = small_model.block('und', 0).mlp
    mlp.wd.data[:, 0] = 0
    mlp.wd.data[0, 0] = 2.0
    scores = neuron_scores(trace, small_model, 'und', 0)
    assert scores[0] == pytest.approx(4.0)
    assert scores[1] == 0


def test_neuron_ranking_survives_down_projection_rescaling(small_model, und_batch, float64):
    trace = record(small_model, und_batch)
    mlp = small_model.block('und', 1).mlp
    before = neuron_scores(trace, small_model, 'und', 1)
    mlp.wd.data *= 4.0
    after = neuron_scores(trace, small_model, 'und', 1)
    assert rank(after).tolist() == rank(before).tolist()
    # Per column factors scale each score by its own factor
    factors = np.random.default_rng(2).uniform(0.5, 2.0, mlp.width)
    mlp.wd.data *= factors
    assert np.allclose(neuron_scores(trace, small_model, 'und', 1), after * factors, rtol=1e-12)


def test_stale_trace_width(small_model, und_batch, float64):
    trace = record(small_model, und_batch)
    block = small_model.block('und', 2)
    block.mlp = block.mlp.remove_neurons([3])
    with pytest.raises(ContractError):
        neuron_scores(trace, small_model, 'und', 2)
    with pytest.raises(ContractError):
        importance_reports(trace, small_model, component='und')


def test_identity_block_scores_one(small_model, und_batch, float64):
    block = small_model.block('und', 1)
    block.attn.wo.data[:] = 0
    block.mlp.wd.data[:] = 0
    trace = record(small_model, und_batch, granularity='block')
    scores = { (s.component, s.layer): s.score for s in layer_scores(trace, 'block', 'und') }
    assert scores[('und', 1)] == pytest.approx(1.0, abs=1e-12)


def test_negated_block_scores_minus_one(small_model):
    trace = empty_trace(small_model)
    probe = TraceProbe(trace, small_model)
    x = np.random.default_rng(0).standard_normal((2, 5, 8))
    # Residual branch output -2x gives y = -x
    probe.block('und', 0, x, x - 2 * x)
    [score] = [s for s in layer_scores(trace, 'block', 'und') if s.layer == 0]
    assert score.score == pytest.approx(-1.0)


def test_layer_scores_match_recomputation(small_model, und_batch, float64):
    trace = record(small_model, und_batch, granularity='block')
    probe = Capture()
    forward_und(small_model, und_batch.samples, probe=probe)
    scores = { (s.component, s.layer): s.score for s in layer_scores(trace, 'block') }
    for key, pairs in probe.blocks.items():
        cos = [nx.cosine_similarity(xt, yt) for x, y in pairs for xt, yt in zip(x.reshape(-1, 8), y.reshape(-1, 8))]
        assert scores[key] == pytest.approx(np.mean(cos), abs=1e-6)
    # Generation layers are not exercised by an understanding batch
    assert not any(c == 'gen' for c, _ in scores)


def test_layer_scores_ignore_sample_order(small_model, und_batch, float64):
    order = np.random.default_rng(6).permutation(len(und_batch.samples))
    shuffled = CalibrationBatch(task=und_batch.task, samples=und_batch.samples[order],
                                classes=und_batch.classes[order], seed=und_batch.seed, id='shuffled')
    a = layer_scores(record(small_model, und_batch, granularity='block'), 'block')
    b = layer_scores(record(small_model, shuffled, granularity='block'), 'block')
    assert [(s.component, s.layer) for s in a] == [(s.component, s.layer) for s in b]
    for x, y in zip(a, b):
        assert x.score == pytest.approx(y.score, abs=1e-12)


def test_layer_scores_granularity_mismatch(small_model, und_batch, float64):
    trace = record(small_model, und_batch, granularity='mlp')
    assert all(s.granularity == 'mlp' for s in layer_scores(trace, 'mlp'))
    with pytest.raises(ContractError):
        layer_scores(trace, 'block')


def test_head_scores_zero_value(small_model, gen_batch, float64):
    attn = small_model.block('gen', 1).attn
    hd = attn.head_dim
    attn.wv.data[:hd] = 0
    trace = record(small_model, gen_batch)
    scores = head_scores(trace, small_model, 'gen', 1)
    assert scores[0] == 0
    assert scores[1] > 0


def test_head_scores_duplicated(small_model, gen_batch, float64):
    attn = small_model.block('gen', 1).attn
    hd = attn.head_dim
    for w in (attn.wq, attn.wk, attn.wv):
        w.data[hd:2 * hd] = w.data[:hd]
    attn.wo.data[:, hd:2 * hd] = attn.wo.data[:, :hd]
    trace = record(small_model, gen_batch)
    scores = head_scores(trace, small_model, 'gen', 1)
    assert scores[0] == pytest.approx(scores[1], rel=1e-12)


def test_reports_provenance(small_model, und_batch, float64):
    trace = record(small_model, und_batch)
    reports = importance_reports(trace, small_model)
    assert [(r.component, r.layer) for r in reports] == [('und', 0), ('und', 1), ('und', 2),
                                                         ('gen', 0), ('gen', 1), ('gen', 2)]
    assert reports[0].provenance_id == 'understanding:' + und_batch.id
    assert reports[0].head_scores.shape == (2,)


def test_rank_ties():
    assert rank(np.array([1., 3., 3., 0.])).tolist() == [1, 2, 0, 3]
