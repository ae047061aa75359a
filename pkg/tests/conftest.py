import shutil
import tempfile
from pathlib import Path

import numpy as np
import pytest

from speckit.core.spectral_model import SpreadFunctionModel, cached_operator
from speckit.core.training_lab import (
    SOURCE_GRID,
    TARGET_GRID,
    TrainingSpec,
    scale_lines,
    NINE_LINES,
)


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test artifacts."""
    temp_dir = tempfile.mkdtemp()
    yield Path(temp_dir)
    shutil.rmtree(temp_dir)


@pytest.fixture(scope="session")
def default_model():
    return SpreadFunctionModel(q=0.015)


@pytest.fixture(scope="session")
def default_operator(default_model):
    """201 x 181 operator on the [450, 650] / [460, 640] nm grids."""
    return cached_operator(TARGET_GRID, SOURCE_GRID, default_model)


@pytest.fixture
def small_spec():
    """Nine-line set, two noise levels, two zetas, one seed over 13 alphas."""
    return TrainingSpec(
        line_sets=(scale_lines(NINE_LINES),),
        line_set_names=("nine",),
        noise_sds=(0.01, 0.04),
        zeta_values=(0.0, 0.04),
        alpha_grid=np.logspace(-6, 0, 13),
        seeds=(3,),
    )
