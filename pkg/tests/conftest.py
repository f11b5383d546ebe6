import numpy as np
import pytest

import upaq


@pytest.fixture(scope="session")
def toy_cnn():
    return upaq.gen_fixture("toy-cnn", 42)


@pytest.fixture(scope="session")
def toy_residual():
    return upaq.gen_fixture("toy-residual", 42)


@pytest.fixture(scope="session")
def toy_1x1():
    return upaq.gen_fixture("toy-1x1", 42)


@pytest.fixture(scope="session")
def toy_cnn_hck(toy_cnn):
    model, _ = toy_cnn
    return upaq.compress_model(model, upaq.hck_profile(seed=42))


@pytest.fixture(scope="session")
def toy_cnn_lck(toy_cnn):
    model, _ = toy_cnn
    return upaq.compress_model(model, upaq.lck_profile(seed=42))


def single_conv_model(seed=42, out_ch=4, in_ch=4, k=3, hw=8):
    """One conv2d layer, both source and sink; used by the oracle-equivalence tests."""
    rng = np.random.default_rng(seed)
    layer = upaq.LayerSpec(
        id="conv",
        kind="conv2d",
        inputs=(),
        weights=upaq.Tensor4(rng.uniform(-1, 1, (out_ch, in_ch, k, k)).astype(np.float32)),
        bias=rng.uniform(-1, 1, out_ch).astype(np.float32),
        stride=1,
        padding=1,
    )
    model = upaq.ModelGraph(name="single-conv", input_shape=(in_ch, hw, hw), layers=[layer])
    model.validate()
    return model
