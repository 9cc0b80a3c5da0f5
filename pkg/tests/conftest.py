import numpy as np
import pytest

from brepsynth.config import Preset
from brepsynth.corpus import make_cuboid, make_lbracket, make_prism, unit_cube


@pytest.fixture(scope="session")
def cube():
    return unit_cube()


@pytest.fixture(scope="session")
def prism3():
    return make_prism(3, radius=0.6, height=0.9)


@pytest.fixture(scope="session")
def lbracket():
    return make_lbracket()


@pytest.fixture(scope="session")
def tiny_preset():
    """Throwaway network sizes for fast model-level tests."""
    return Preset(
        name="desk",
        topo_layers=1,
        topo_dim=32,
        topo_heads=2,
        diff_layers=1,
        diff_dim=32,
        diff_heads=2,
        d_cond_topo=32,
        d_cond_diff=32,
        d_z=16,
        n_f_max=12,
        n_e_max=32,
        timesteps=20,
        dropout=0.0,
        validity_tol=5e-2,
        postprocess_threshold=5e-2,
    )


def rand_cuboid(rng):
    return make_cuboid(center=rng.uniform(-0.05, 0.05, 3), extents=rng.uniform(0.3, 1.8, 3))
