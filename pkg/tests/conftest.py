import numpy as np
import pytest

from amnet.engine import set_default_dtype
from amnet.engine.tensor import default_dtype


@pytest.fixture(autouse=True)
def f64_default():
    """Tests run in oracle precision unless they opt into f32 themselves."""
    prev = default_dtype()
    set_default_dtype(np.float64)
    yield
    set_default_dtype(prev)
