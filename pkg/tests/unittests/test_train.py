import pytest

import numpy as np

from pyumc import numerics as nx
from pyumc.data import SyntheticSpec, gen_dataset, make_calibration
from pyumc.exceptions import ConfigError, DivergenceError
from pyumc.importance import importance_reports
from pyumc.model import ModelConfig, UnifiedToyModel
from pyumc.moe import ConvertConfig, convert, partition_experts
from pyumc.numerics.gradcheck import gradient_errors
from pyumc.surgery import apply, plan_width
from pyumc.trace import record
from pyumc.train import (TrainConfig,
                         evaluate,
                         frozen_parameters,
                         is_expert_parameter,
                         joint_loss,
                         pretrain,
                         tune)
from pyumc.train.optim import frozen

from test_common import SMALL_DATA, slow_test


def snapshot(model):
    return { name: t.data.copy() for name, t in model.parameters() }


@pytest.fixture
def converted(small_model, gen_batch, float64):
    trace = record(small_model, gen_batch)
    partitions = [partition_experts(r, 4) for r in importance_reports(trace, small_model, component='gen')]
    return convert(small_model, partitions, ConvertConfig(n_experts=4))


def quick(stage, **kwargs):
    return TrainConfig(**dict(dict(stage=stage, steps=3, batch_size=4), **kwargs))


def test_zero_steps_leaves_model_unchanged(small_config, small_dataset, float64):
    model = UnifiedToyModel.init(small_config)
    before = snapshot(model)
    result = pretrain(model, small_dataset, TrainConfig(stage='pretrain', steps=0))
    assert result.curve == []
    for name, t in model.parameters():
        assert np.array_equal(before[name], t.data)


def test_training_is_deterministic(small_config, small_dataset, float64):
    a = pretrain(UnifiedToyModel.init(small_config), small_dataset, quick('pretrain', seed=4))
    b = pretrain(UnifiedToyModel.init(small_config), small_dataset, quick('pretrain', seed=4))
    assert a.curve == b.curve
    assert [p.step for p in a.curve] == [1, 2, 3]
    assert a.model.stage_history == ['pretrain']


def test_expert_frozen_keeps_experts(converted, small_dataset, float64):
    before = snapshot(converted)
    result = tune(converted, small_dataset, quick('expert_frozen'))
    experts = [n for n in before if is_expert_parameter(n)]
    assert experts
    for name, t in result.model.parameters():
        if name in experts:
            assert np.array_equal(before[name], t.data), name
    assert not np.array_equal(before['gen.blocks.1.moe.router.w'],
                              dict(result.model.parameters())['gen.blocks.1.moe.router.w'].data)
    assert not np.array_equal(before['und.head'], result.model.head.data)


def test_moe_full_trains_experts(converted, small_dataset, float64):
    tune(converted, small_dataset, quick('expert_frozen'))
    before = snapshot(converted)
    tune(converted, small_dataset, quick('moe_full'))
    assert not np.array_equal(before['gen.blocks.1.moe.routed.wd'],
                              dict(converted.parameters())['gen.blocks.1.moe.routed.wd'].data)
    assert converted.stage_history == ['expert_frozen', 'moe_full']


def test_stage_checks(small_model, converted, small_dataset):
    with pytest.raises(ConfigError):
        tune(small_model, small_dataset, quick('expert_frozen'))
    with pytest.raises(ConfigError):
        tune(converted, small_dataset, quick('dense_finetune'))
    with pytest.raises(ConfigError):
        tune(converted, small_dataset, quick('moe_full'))
    with pytest.raises(ConfigError):
        pretrain(converted, small_dataset, quick('pretrain'))
    with pytest.raises(ConfigError):
        tune(small_model, small_dataset, quick('pretrain'))
    with pytest.raises(ConfigError):
        pretrain(small_model, small_dataset, quick('dense_finetune'))


def test_moe_full_force(converted, small_dataset, float64):
    result = tune(converted, small_dataset, quick('moe_full', force=True))
    assert len(result.curve) == 3


def test_frozen_parameter_policy(small_model, converted):
    assert frozen_parameters(small_model, 'pretrain') == set()
    names = frozen_parameters(converted, 'expert_frozen')
    assert names == { 'gen.blocks.1.moe.shared.wg', 'gen.blocks.1.moe.shared.wu', 'gen.blocks.1.moe.shared.wd',
                      'gen.blocks.1.moe.routed.wg', 'gen.blocks.1.moe.routed.wu', 'gen.blocks.1.moe.routed.wd' }
    assert frozen_parameters(converted, 'moe_full') == set()
    converted.moe_setup = 'und_gen'
    assert frozen_parameters(converted, 'moe_full', freeze_und_experts=False) == set()
    with pytest.raises(ConfigError):
        frozen_parameters(converted, 'warmup')


def test_frozen_gradients(converted, small_dataset, float64):
    """ Trainable gradients match finite differences, frozen ones are not computed
    """
    layer = converted.block('gen', 1).mlp
    layer.router_w.data[:] = np.random.default_rng(2).standard_normal(layer.router_w.shape)
    params = list(converted.parameters())
    names = frozen_parameters(converted, 'expert_frozen')
    config = quick('expert_frozen')
    index = np.arange(4)

    def loss():
        return joint_loss(converted, small_dataset, index, np.random.default_rng(0), config)[0]

    with frozen(params, names):
        assert max(gradient_errors(loss, [converted.w_out, layer.router_b])) < 1e-5
        with nx.GradientTape() as tape:
            total = loss()
        tape.backward(total)
        assert layer.wd_r.grad is None
        assert layer.router_w.grad is not None


def test_divergence(small_config, small_dataset, float64):
    model = UnifiedToyModel.init(small_config)
    model.head.data[:] = np.nan
    with pytest.raises(DivergenceError):
        pretrain(model, small_dataset, quick('pretrain'))


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(stage='warmup').validate()
    with pytest.raises(ConfigError):
        TrainConfig(steps=-1).validate()
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({ 'stage': 'pretrain', 'epochs': 3 })
    assert TrainConfig(stage='moe_full').n_steps == 300
    assert TrainConfig.from_dict({ 'stage': 'pretrain', 'lr': 0.01 }).lr == 0.01


#
# Evaluation
#

def test_dense_eval_counts(small_model, small_dataset, float64):
    result = evaluate(small_model, small_dataset)
    assert result.activated_params == result.total_params
    assert result.moe_activated_fraction is None
    assert 0 <= result.und_accuracy <= 1
    assert result.und_perplexity > 1


def test_eval_is_deterministic(small_model, small_dataset, float64):
    assert evaluate(small_model, small_dataset, seed=3) == evaluate(small_model, small_dataset, seed=3)


def test_random_model_fidelity_is_chance(small_config, float64):
    dataset = gen_dataset(SyntheticSpec(**dict(SMALL_DATA, n_heldout=160)))
    model = UnifiedToyModel.init(small_config)
    result = evaluate(model, dataset)
    assert result.gen_fidelity == pytest.approx(1 / 4, abs=0.1)


def test_converted_eval(converted, small_dataset, float64):
    result = evaluate(converted, small_dataset)
    assert result.activated_params < result.total_params
    assert 'params=' in result.summary()


#
# Training runs
#

@slow_test
@pytest.mark.parametrize('seed', [0, 1, 2])
def test_pretrain_loss_decreases(small_config, small_dataset, seed):
    result = pretrain(UnifiedToyModel.init(small_config), small_dataset,
                      TrainConfig(stage='pretrain', steps=50, batch_size=16, seed=seed))
    losses = np.array([p.loss_total for p in result.curve])
    assert losses[-10:].mean() < losses[:10].mean()


@slow_test
@pytest.mark.parametrize('seed', [0, 1, 2])
def test_expert_frozen_loss_decreases(small_dataset, seed, converted):
    result = tune(converted, small_dataset, TrainConfig(stage='expert_frozen', steps=30, batch_size=16, seed=seed))
    losses = np.array([p.loss_total for p in result.curve])
    assert losses[-5:].mean() < losses[:5].mean()


@slow_test
def test_pretrained_baseline():
    dataset = gen_dataset(SyntheticSpec())
    model = UnifiedToyModel.init(ModelConfig())
    pretrain(model, dataset)
    result = evaluate(model, dataset)
    assert result.und_accuracy > 0.95
    assert result.gen_fidelity >= 0.9


@slow_test
def test_expert_frozen_keeps_experts_over_long_run(converted, small_dataset, float64):
    before = snapshot(converted)
    tune(converted, small_dataset, TrainConfig(stage='expert_frozen', steps=300, batch_size=16))
    params = dict(converted.parameters())
    experts = [n for n in before if is_expert_parameter(n)]
    assert experts
    for name in experts:
        assert np.array_equal(before[name], params[name].data), name


#
# Compression trends on the default model
#

SEEDS = (0, 1, 2)


@pytest.fixture(scope='module')
def pretrained():
    """ Default model and dataset, pretrained once per seed
    """
    cache = {}

    def get(seed):
        if seed not in cache:
            dataset = gen_dataset(SyntheticSpec(seed=seed))
            model = UnifiedToyModel.init(ModelConfig(seed=seed))
            pretrain(model, dataset, TrainConfig(stage='pretrain', steps=2000, seed=seed))
            cache[seed] = (model, dataset)
        return cache[seed]

    return get


def moe_from(dense, dataset, n_experts, seed):
    batch = make_calibration(dataset, 'generation', count=32, seed=seed)
    reports = importance_reports(record(dense, batch), dense, component='gen')
    return convert(dense, [partition_experts(r, n_experts) for r in reports],
                   ConvertConfig(n_experts=n_experts, ratio=0.5))


@slow_test
def test_adaptation_recovers_fidelity(pretrained):
    fidelity = { name: [] for name in ('dense', 'zeroshot', 'expert_frozen', 'moe_full') }
    for seed in SEEDS:
        dense, dataset = pretrained(seed)
        fidelity['dense'].append(evaluate(dense, dataset).gen_fidelity)
        moe = moe_from(dense, dataset, 16, seed)
        result = evaluate(moe, dataset)
        assert result.moe_activated_fraction == 0.5
        fidelity['zeroshot'].append(result.gen_fidelity)
        for stage in ('expert_frozen', 'moe_full'):
            tune(moe, dataset, TrainConfig(stage=stage, steps=300, seed=seed))
            fidelity[stage].append(evaluate(moe, dataset).gen_fidelity)
    mean = { name: np.mean(values) for name, values in fidelity.items() }
    assert mean['zeroshot'] <= mean['expert_frozen'] <= mean['moe_full']
    assert mean['moe_full'] >= 0.9 * mean['dense']


@slow_test
def test_more_experts_lower_frozen_loss(pretrained):
    final = {}
    for n_experts in (16, 32, 64):
        losses = []
        for seed in SEEDS:
            dense, dataset = pretrained(seed)
            moe = moe_from(dense, dataset, n_experts, seed)
            result = tune(moe, dataset, TrainConfig(stage='expert_frozen', steps=300, seed=seed))
            losses.append(np.mean([p.loss_total for p in result.curve[-20:]]))
        final[n_experts] = np.mean(losses)
    assert final[64] < final[32] < final[16]


@slow_test
def test_generation_calibration_suits_generation(pretrained):
    fidelity = { 'generation': [], 'understanding': [] }
    for seed in SEEDS:
        dense, dataset = pretrained(seed)
        for task in fidelity:
            batch = make_calibration(dataset, task, count=32, seed=seed)
            reports = importance_reports(record(dense, batch), dense, component='und')
            pruned = apply(dense, plan_width(reports, 0.5))
            fidelity[task].append(evaluate(pruned, dataset).gen_fidelity)
    assert np.mean(fidelity['generation']) >= np.mean(fidelity['understanding'])
