import numpy as np
import pytest

from midisynth.dsp import StftConfig


@pytest.fixture
def stft_cfg():
    return StftConfig(sample_rate=24000, frame_length=1200, frame_shift=288,
                      fft_size=2048)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
