from pathlib import Path

import hypothesis
import pytest

from svcorch.catalog_io import load_catalog, load_scenario

hypothesis.settings.register_profile("seeded", derandomize=True, deadline=None)
hypothesis.settings.load_profile("seeded")

DATA = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture
def ref_catalog():
    return load_catalog(DATA / "reference.catalog")


@pytest.fixture
def scenario1_catalog(ref_catalog):
    return [s for s in ref_catalog if s.id != "MPC"]


@pytest.fixture
def scenario(request):
    return lambda name: load_scenario(DATA / f"{name}.scenario")
