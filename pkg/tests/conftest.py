import numpy as np
import pytest

from tot.domain import ClassTaxonomy


def make_taxonomy(n_super: int, fines_per_super: int) -> ClassTaxonomy:
    fine_names = []
    fine_to_super = []
    for s in range(n_super):
        for f in range(fines_per_super):
            fine_names.append(f"fine_{s}_{f}")
            fine_to_super.append(s)
    return ClassTaxonomy(
        fine_names=tuple(fine_names),
        super_names=tuple(f"super_{s}" for s in range(n_super)),
        fine_to_super=tuple(fine_to_super),
    )


@pytest.fixture
def taxonomy4() -> ClassTaxonomy:
    """2 supers x 2 fines."""
    return make_taxonomy(2, 2)


@pytest.fixture
def taxonomy6() -> ClassTaxonomy:
    """3 supers x 2 fines."""
    return make_taxonomy(3, 2)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)
