"""Constants shared by the numba and numpy kernel backends.

Both backends implement the same function set with identical argument
conventions; see ``rigcal.kernels`` for dispatch.

Intrinsics are passed as a 6-vector ``[fx, fy, cx, cy, width, height]``.
Depth maps are float64 ``(height, width)`` arrays; a value is valid iff
finite and > 0. Validity never raises inside kernels: invalid samples
come back with zero residual, zero Jacobian, and ``valid=False``.
"""

# positive-intersection threshold for ray casting
EPS_T = 1e-12

# minimum z for a point to count as in front of a camera
MIN_Z = 1e-9
