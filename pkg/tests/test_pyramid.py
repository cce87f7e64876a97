import numpy as np
import pytest

from evofuse.pyramid import downsample, laplacian_decompose, laplacian_reconstruct, upsample


@pytest.mark.parametrize("seed", range(5))
def test_roundtrip_identity_even_dims(seed):
    rng = np.random.default_rng(seed)
    a = rng.random((64, 64))
    details, base = laplacian_decompose(a, 4)
    assert len(details) == 4
    back = laplacian_reconstruct(details, base)
    assert np.max(np.abs(back - a)) < 1e-6


def test_roundtrip_identity_odd_dims():
    rng = np.random.default_rng(7)
    a = rng.random((37, 51))
    details, base = laplacian_decompose(a, 3)
    back = laplacian_reconstruct(details, base)
    assert np.max(np.abs(back - a)) < 1e-6
    assert back.shape == a.shape


def test_downsample_halves():
    a = np.zeros((10, 8))
    assert downsample(a).shape == (5, 4)
    assert downsample(np.zeros((9, 7))).shape == (5, 4)  # padded to even first


def test_upsample_constant_preserved():
    a = np.full((4, 4), 0.3)
    up = upsample(a, (8, 8))
    np.testing.assert_allclose(up, 0.3, atol=1e-12)


def test_constant_image_detail_bands_vanish():
    details, base = laplacian_decompose(np.full((32, 32), 0.6), 4)
    for d in details:
        assert np.max(np.abs(d)) < 1e-12
    np.testing.assert_allclose(base, 0.6, atol=1e-12)
