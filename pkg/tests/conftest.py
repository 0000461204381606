import pytest

from amodalforge.datagen import load_manifest

from .synthdata import build_manifest_tree


@pytest.fixture(scope="session")
def manifest_path(tmp_path_factory):
    root = tmp_path_factory.mktemp("synthetic_dataset")
    return build_manifest_tree(root)


@pytest.fixture(scope="session")
def manifest(manifest_path):
    return load_manifest(manifest_path)
