import numpy as np
import pytest
from hypothesis import settings

from qvd.flowgen import DatasetSpec, NoiseConfig, ParamRanges, make_field
from qvd.qstate import RegisterLayout

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")


SMALL_LAYOUT = RegisterLayout(n_f=12, n_w=8, n_c=4, n_lfps=3)   # 64x64 grids, W=16
FULL_LAYOUT = RegisterLayout(n_f=16, n_w=10, n_c=5, n_lfps=3)   # 200x200 grids, W=32


def small_dataset_spec(n_fields, count_range, seed, noise_amplitude=0.1):
    return DatasetSpec(
        n_fields=n_fields,
        grid=(64, 64),
        vortex_count_range=count_range,
        param_ranges=ParamRanges(delta=(0.8, 1.6), v_max=(0.8, 1.2),
                                 core_radius=(4.0, 7.0)),
        min_separation=20.0,
        noise=NoiseConfig(amplitude=noise_amplitude, kernel_sigma=3.0),
        seed=seed,
    )


@pytest.fixture(scope="session")
def small_layout():
    return SMALL_LAYOUT


@pytest.fixture(scope="session")
def full_layout():
    return FULL_LAYOUT


@pytest.fixture(scope="session")
def small_fields():
    spec = small_dataset_spec(12, (1, 3), seed=42)
    return [make_field(spec, i) for i in range(12)]


def random_state_vector(n_qubits, rng):
    amps = rng.standard_normal(1 << n_qubits) + 1j * rng.standard_normal(1 << n_qubits)
    return amps / np.linalg.norm(amps)
