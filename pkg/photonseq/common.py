"""Code shared between all photonseq modules."""
import logging
import time
from collections import namedtuple

import numpy as np

_LOGGER = logging.getLogger(__name__)

# Order in which the root seed is split into independent streams.
STREAM_NAMES = ("weights", "graphs", "explore", "replay")

RandomStreams = namedtuple("RandomStreams", STREAM_NAMES)


def spawn_streams(seed):
    """Split one root seed into the named random generators."""
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    return RandomStreams(*(np.random.default_rng(child) for child in children))


def make_rng(seed):
    """Return a generator for a seed, passing generators through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class Stopwatch:
    """Measure elapsed wall time in milliseconds."""

    def __init__(self):
        """Start the stopwatch."""
        self._start = time.perf_counter()

    @property
    def elapsed_ms(self):
        """Return milliseconds since start."""
        return (time.perf_counter() - self._start) * 1000.0


class PhotonSeqError(Exception):
    """Base class for every error raised by photonseq."""
