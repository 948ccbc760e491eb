import logging

import numpy as np
import pytest

from cmar._design import Design
from cmar.core import CmarModel, Dims, MatrixSeries
from cmar.simulate import SimConfig, gen_model, simulate_series


@pytest.fixture(autouse=True)
def _quiet_logs():
    logging.getLogger("cmar").setLevel(logging.ERROR)
    yield


def random_instance(seed, dims=Dims(3, 2, 1, 1, 1), T=300, const=False, setting="II"):
    rng = np.random.default_rng(seed)
    model = gen_model(SimConfig(dims, T, setting, const), rng)
    return model, simulate_series(model, T, rng)


def noiseless_design(model: CmarModel, series: MatrixSeries, const: bool) -> Design:
    """Design whose responses are the exact conditional means given noisy regressors.

    A single noise-free path is rank deficient, so the oracle keeps the
    regressors from a noisy path and removes the noise from the responses.
    """
    d = Design.from_series(series, model.dims.k, const)
    resp = model.A1 @ d.level @ model.A2.T
    for g, (B1, B2) in zip(d.diffs, model.B):
        resp = resp + B1 @ g @ B2.T
    if const:
        resp = resp + model.D
    return Design(resp, d.level, d.diffs, const)
