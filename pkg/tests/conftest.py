import math

import pytest

from rabidamp import EnsembleConfig, FieldMap


@pytest.fixture
def warm_cloud() -> EnsembleConfig:
    # 43 uK Rb-87 cloud, 1.1 mm initial width
    return EnsembleConfig(temperature=43e-6, cloud_width=1.1e-3,
                          n_atoms=200_000, seed=12345)


@pytest.fixture
def khz_drive() -> FieldMap:
    return FieldMap.linear(omega_drive_at_origin=2.0 * math.pi * 1e3,
                           grad_omega_drive=1.74e6)
