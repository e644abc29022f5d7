import numpy as np
import pytest

from brdfremap.brdf import BrdfModelId, make_spec
from brdfremap.remap import RemapScheme
from brdfremap.render import LightConfig, SceneConfig
from brdfremap.transform import build_database, fit_transform

# one line per acceptance criterion, printed as a checklist after the run
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fast_scene():
    return SceneConfig(image_size=(64, 64))


@pytest.fixture(scope="session")
def fit_scene():
    return SceneConfig(image_size=(96, 96))


# conductor databases shared between transform / svbrdf / acceptance tests;
# built once per session (each is ~30 rendered fits)
DB_ROUGHNESS = [0.08, 0.14, 0.2, 0.27, 0.34, 0.42]
DB_SPECULAR = [0.15, 0.35, 0.55, 0.75, 0.95]


def _db(source, target, scene, light=None, diffuse=None):
    if light is not None:
        scene = scene.with_light(light)
    return build_database(source, target, DB_ROUGHNESS, DB_SPECULAR,
                          scheme=RemapScheme.TWO_STAGE, scene=scene,
                          diffuse=diffuse)


@pytest.fixture(scope="session")
def db_warda_to_ggx(fit_scene):
    return _db(BrdfModelId.WARD_A, BrdfModelId.GGX, fit_scene)


@pytest.fixture(scope="session")
def transform_warda_to_ggx(db_warda_to_ggx):
    return fit_transform(db_warda_to_ggx)


@pytest.fixture(scope="session")
def db_warda_to_wardb(fit_scene):
    return _db(BrdfModelId.WARD_A, BrdfModelId.WARD_B, fit_scene)


@pytest.fixture(scope="session")
def transform_warda_to_wardb(db_warda_to_wardb):
    return fit_transform(db_warda_to_wardb)


@pytest.fixture(scope="session")
def db_wardb_to_beckmann(fit_scene):
    return _db(BrdfModelId.WARD_B, BrdfModelId.BECKMANN, fit_scene)


@pytest.fixture(scope="session")
def db_beckmann_to_ggx(fit_scene):
    return _db(BrdfModelId.BECKMANN, BrdfModelId.GGX, fit_scene)


@pytest.fixture(scope="session")
def db_warda_to_ggx_oblique(fit_scene):
    return _db(BrdfModelId.WARD_A, BrdfModelId.GGX, fit_scene,
               light=LightConfig.oblique(45.0))
