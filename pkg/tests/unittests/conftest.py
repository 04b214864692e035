import logging
import pytest

import numpy as np

from pathlib import Path

from pyumc import numerics as nx
from pyumc.config import load_configuration
from pyumc.data import SyntheticSpec, gen_dataset, make_calibration
from pyumc.model import ModelConfig, UnifiedToyModel

from test_common import SMALL_DATA, SMALL_MODEL

LOGGER = logging.getLogger('UMCLOG')

def _workdir( request ):
    workdir=Path(request.config.rootdir.strpath).parent/'__workdir__'
    workdir.mkdir(exist_ok=True)
    return workdir

def _outputdir(request):
    outdir=Path(request.config.rootdir.strpath)/'__outputdir__'
    outdir.mkdir(exist_ok=True)
    return outdir

def pytest_configure(config):
    load_configuration()

@pytest.fixture(scope='session')
def outputdir(request):
    return _outputdir(request)

@pytest.fixture(scope='session')
def workdir(request):
    return _workdir(request)

@pytest.fixture(scope='session')
def rootdir(request):
    return Path(request.config.rootdir.strpath)


@pytest.fixture
def float64():
    with nx.precision('float64') as dtype:
        yield dtype


@pytest.fixture(scope='session')
def small_config():
    return ModelConfig(**SMALL_MODEL)


@pytest.fixture(scope='session')
def small_spec():
    return SyntheticSpec(**SMALL_DATA)


@pytest.fixture(scope='session')
def small_dataset(small_spec):
    return gen_dataset(small_spec)


@pytest.fixture
def small_model(small_config):
    """ Random model with a non zero output projection
    """
    with nx.precision('float64'):
        model = UnifiedToyModel.init(small_config)
    model.w_out.data = np.random.default_rng(1).standard_normal(model.w_out.shape) * 0.5
    return model


@pytest.fixture
def und_batch(small_dataset):
    return make_calibration(small_dataset, 'understanding', count=8, seed=0)


@pytest.fixture
def gen_batch(small_dataset):
    return make_calibration(small_dataset, 'generation', count=8, seed=0)
