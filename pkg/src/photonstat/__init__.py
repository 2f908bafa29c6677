"""Photon statistics of single quantum emitters.

Timestamp streams, HBT correlation and g2(0), lifetime fitting, blinking
statistics, FLID maps, emission spectra, and a Monte Carlo emitter model.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    FormatError,
    IntensityTrace,
    PhotonStatError,
    PhotonStream,
    UnsupportedModeError,
    ValidationError,
    bin_intensity,
    micro_times,
    read_stream,
    write_stream,
)
