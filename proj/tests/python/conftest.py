import os
import shutil

import pytest


@pytest.fixture
def cli():
    path = os.environ.get("LANEFUSION_CLI") or shutil.which("lanefusion")
    if not path:
        pytest.skip("lanefusion executable not available")
    return path
