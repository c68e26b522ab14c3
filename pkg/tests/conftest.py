import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hyperfree.material import NeoHookeanParams
from hyperfree.operators import Material


@pytest.fixture(scope="session")
def unit_material():
    base = NeoHookeanParams.from_shear_and_poisson(1.0, 0.3)
    return Material(matrix=base, inclusion=base.scaled(100.0))
