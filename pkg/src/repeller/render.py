"""Log-polar raster images as binary PPM (P6).

Pixel rows run over log-radius, lowest first; within a row pixels run over
angle starting at ``theta_lo`` (``-pi`` by default).  Each pixel shows a
three-valued code through a fixed palette, so identical inputs give
identical bytes.
"""

from __future__ import annotations

import numpy as np

from .construction import KIND_A, KIND_B, KIND_BEYOND, Params, Scales, regions_batch
from .dynamics import BOUNDED, ESCAPED, UNDECIDED, DEFAULT_MAX_ITER, LogPolarWindow, classify_grid
from .errors import XDomainError
from .xnum import XCArray

ORBIT_PALETTE = {
    BOUNDED: (250, 200, 60),
    ESCAPED: (20, 30, 70),
    UNDECIDED: (200, 60, 60),
}
REGION_PALETTE = {
    KIND_A: (235, 235, 235),
    KIND_B: (60, 95, 165),
    KIND_BEYOND: (25, 25, 25),
}
MODES = ("orbits", "regions")


def region_grid(sc: Scales, window: LogPolarWindow, resolution: tuple[int, int]) -> np.ndarray:
    """Region kind (A, B or beyond the tracked scales) at each grid centre, shape ``(nr, ntheta)``."""
    nr, nt = resolution
    if nr < 1 or nt < 1:
        raise XDomainError("resolution must be positive")
    rho, theta = window.centers(nr, nt)
    R, T = np.meshgrid(rho, theta, indexing="ij")
    kind, _ = regions_batch(sc, sc.top, XCArray.from_polar(R.ravel(), T.ravel()))
    return kind.reshape(nr, nt)


def to_ppm(codes: np.ndarray, palette: dict) -> bytes:
    """Encode an ``(height, width)`` array of codes as an 8-bit P6 image."""
    codes = np.asarray(codes)
    if codes.ndim != 2:
        raise XDomainError("code grid must be two-dimensional")
    lut = np.zeros((max(palette) + 1, 3), dtype=np.uint8)
    for code, rgb in palette.items():
        lut[code] = rgb
    h, w = codes.shape
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + lut[codes.astype(np.intp)].tobytes()


def parse_ppm(data: bytes) -> np.ndarray:
    """Decode a P6 image written by ``to_ppm`` into an ``(h, w, 3)`` uint8 array."""
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6" or len(parts) < 4:
        raise ValueError("not a binary PPM")
    w, h = (int(v) for v in parts[1].split())
    if int(parts[2]) != 255:
        raise ValueError("only 8-bit PPM is supported")
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


def render(p: Params, sc: Scales, window: LogPolarWindow, resolution: tuple[int, int],
           mode: str = "orbits", max_iter: int = DEFAULT_MAX_ITER) -> bytes:
    if mode == "orbits":
        return to_ppm(classify_grid(p, sc, window, resolution, max_iter), ORBIT_PALETTE)
    if mode == "regions":
        return to_ppm(region_grid(sc, window, resolution), REGION_PALETTE)
    raise XDomainError(f"unknown render mode {mode!r}; choose from {MODES}")
