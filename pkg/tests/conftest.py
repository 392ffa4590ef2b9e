import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from scribbleseg.backbone import BackboneSpec
from scribbleseg.decoder import DecoderConfig
from scribbleseg.fusion import FusionConfig
from scribbleseg.images import ImagePlane
from scribbleseg.model import init_model


@pytest.fixture
def tiny_spec():
    return BackboneSpec(patch_size=8, hidden_dim=16, num_blocks=12, tap_layers=(3, 6, 9, 12))


@pytest.fixture
def tiny_model(tiny_spec):
    return init_model(
        tiny_spec,
        FusionConfig(proj_dim=8, init_seed=0),
        DecoderConfig(num_classes=3, hidden_sizes=(16,)),
        seed=7,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_plane(arr, spacing=1.0, normalized=False):
    return ImagePlane(data=np.asarray(arr, dtype=np.float32), spacing_um=spacing, normalized=normalized)
