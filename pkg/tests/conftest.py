import numpy as np
import pytest

from cardiodx.core import CirMatrix, RadarConfig


def small_config(num_bins: int, processing_rate: float = 200.0) -> RadarConfig:
    return RadarConfig(samples_per_chirp=num_bins,
                       processing_rate=processing_rate)


def make_cir(data, processing_rate: float = 200.0) -> CirMatrix:
    data = np.asarray(data)
    if not np.iscomplexobj(data):
        data = data.astype(np.complex128)
    return CirMatrix(data=data,
                     config=small_config(data.shape[0], processing_rate))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
