import pytest

import numpy as np

from pyumc.data import (SyntheticSpec,
                        gen_dataset,
                        make_calibration,
                        next_token_mask,
                        sample_hash)
from pyumc.exceptions import ConfigError, InputError


def test_same_seed_same_dataset(small_spec):
    a = gen_dataset(small_spec)
    b = gen_dataset(small_spec)
    assert np.array_equal(a.train.tokens, b.train.tokens)
    assert np.array_equal(a.heldout.classes, b.heldout.classes)
    assert np.array_equal(a.patterns, b.patterns)


def test_splits_are_disjoint(small_dataset):
    train = { sample_hash(s) for s in small_dataset.train.tokens }
    heldout = { sample_hash(s) for s in small_dataset.heldout.tokens }
    assert not train & heldout
    assert len(train) == len(small_dataset.train)


def test_single_class_targets(small_spec):
    spec = SyntheticSpec(**dict(small_spec.to_dict(), n_pattern_classes=1, n_train=16, n_heldout=4))
    ds = gen_dataset(spec)
    targets = ds.targets('train')
    assert np.array_equal(targets, np.broadcast_to(targets[0], targets.shape))


def test_optimal_predictor_is_exact(small_dataset):
    """ Copying the token one motif length back predicts every masked position
    """
    spec = small_dataset.spec
    mask = next_token_mask(spec)
    for split in ('train', 'heldout'):
        tokens = small_dataset.split(split).tokens
        predicted = np.roll(tokens, spec.motif_length, axis=1)[:, 1:]
        assert np.all((predicted == tokens[:, 1:])[:, mask])


def test_class_is_encoded_in_prompt(small_dataset):
    spec = small_dataset.spec
    prompts = small_dataset.prompts('train')
    assert np.all(prompts // spec.band_size == small_dataset.train.classes[:, None])


def test_patterns_are_separated(small_dataset):
    flat = small_dataset.patterns.reshape(len(small_dataset.patterns), -1)
    dist = np.linalg.norm(flat[:, None] - flat[None], axis=-1)
    assert dist[~np.eye(len(flat), dtype=bool)].min() > 1.0


def test_degenerate_specs():
    with pytest.raises(ConfigError):
        SyntheticSpec(n_pattern_classes=100, vocab_size=64).validate()
    with pytest.raises(ConfigError):
        SyntheticSpec(n_pattern_classes=2, vocab_size=4, motif_length=1, n_train=10, n_heldout=10).validate()
    with pytest.raises(ConfigError):
        SyntheticSpec.from_dict({ 'colors': 3 })


def test_calibration_full_pool(small_dataset):
    batch = make_calibration(small_dataset, 'understanding', count=len(small_dataset.train), seed=3)
    assert np.array_equal(batch.samples, small_dataset.train.tokens)


def test_calibration_tasks(small_dataset):
    und = make_calibration(small_dataset, 'understanding', count=4, seed=1)
    gen = make_calibration(small_dataset, 'generation', count=4, seed=1)
    assert und.samples.shape == (4, small_dataset.spec.seq_length)
    assert gen.samples.shape == (4, small_dataset.spec.prompt_length)
    assert np.array_equal(und.classes, gen.classes)
    assert und.id == 'understanding-train-1-4'
    assert gen.timestep_grid(4) == (0.0, 0.25, 0.5, 0.75)
    assert und.timestep_grid(4) == ()


def test_calibration_from_heldout(small_dataset):
    batch = make_calibration(small_dataset, 'generation', count=8, seed=0, split='heldout')
    assert np.array_equal(batch.samples, small_dataset.prompts('heldout'))


def test_calibration_errors(small_dataset):
    with pytest.raises(InputError):
        make_calibration(small_dataset, 'understanding', count=len(small_dataset.train) + 1)
    with pytest.raises(InputError):
        make_calibration(small_dataset, 'captioning', count=2)
    with pytest.raises(InputError):
        make_calibration(small_dataset, 'understanding', count=0)
    with pytest.raises(InputError):
        make_calibration(small_dataset, 'understanding', count=2, split='validation')
