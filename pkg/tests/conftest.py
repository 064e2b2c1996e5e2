import numpy as np
import pytest
from hypothesis import settings

from porovisc.config import TimeFunction, benchmark_config, build_grid, build_laws, equilibrium_config
from porovisc.simulation import run_simulation

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def benchmark_run():
    return run_simulation(benchmark_config())


@pytest.fixture(scope="session")
def closed_run():
    return run_simulation(benchmark_config(kappa_right=0.0))


@pytest.fixture(scope="session")
def compressive_run():
    return run_simulation(benchmark_config(load_g=TimeFunction("ramp", slope=-5.0)))


@pytest.fixture(scope="session")
def equilibrium_run():
    return run_simulation(equilibrium_config())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=["biot", "neo-hookean-entropy"])
def laws(request):
    return build_laws(benchmark_config(material=request.param, material_params={}))


@pytest.fixture
def grid():
    return build_grid(benchmark_config(n_cells=32))
