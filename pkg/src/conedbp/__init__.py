"""Cone-beam CT simulation and reconstruction toolkit.

Forward projection and FDK for circular trajectories, differentiated
backprojection over selectable arcs, factorized per-plane Hilbert
deconvolution, coronal/sagittal spectral blending, a TV-penalized
iterative comparator, and the fidelity metrics tying them together.
"""

from .containers import ProjectionSet, SliceImage, Volume3D, extract_slice
from .errors import ConedbpError, ConfigError, NumericalError
from .geometry import ArcSpec, PlaneOfInterest, ScanGeometry, geometry_preset
from .phantoms import DiskPhantomSpec, Primitive

__version__ = "0.1.0"

__all__ = [
    "Volume3D",
    "ProjectionSet",
    "SliceImage",
    "extract_slice",
    "ScanGeometry",
    "ArcSpec",
    "PlaneOfInterest",
    "geometry_preset",
    "DiskPhantomSpec",
    "Primitive",
    "ConedbpError",
    "ConfigError",
    "NumericalError",
    "set_workers",
    "__version__",
]


def set_workers(n: int) -> int:
    """Set the number of compute threads; returns the effective count.

    Requests are clamped to what the runtime allows.  Results are
    bit-identical for any worker count by construction.
    """
    import numba

    n = max(1, int(n))
    effective = min(n, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(effective)
    return effective
