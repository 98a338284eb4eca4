import numpy as np
import pytest

from asset_fixtures import make_source_asset, write_asset_files


@pytest.fixture(scope="module")
def asset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("asset")
    asset = make_source_asset(np.random.default_rng(17))
    write_asset_files(asset, root)
    return root, asset
