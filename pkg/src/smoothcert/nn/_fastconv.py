"""JIT-compiled convolution for the inference path.

Certification evaluates millions of forward passes; this fused kernel
avoids the im2col materialization that dominates the numpy path. The
numpy implementation remains the reference (and the training path,
which needs the column cache for gradients); if numba is unavailable
the package silently falls back to it everywhere.

The loop order is fixed, so results are deterministic run to run.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False


if HAVE_NUMBA:

    # Single-threaded on purpose: certification parallelizes across inputs
    # in a worker pool, and nogil lets those workers overlap. Numba's own
    # threading layers are not safe under concurrent kernel launches.
    @njit(nogil=True, fastmath=False, cache=True)
    def _conv_same_nhwc(x, w, bias, out):
        b, h, width, c_in = x.shape
        k = w.shape[0]
        c_out = w.shape[3]
        p = k // 2
        for bi in range(b):
            for y in range(h):
                for xx in range(width):
                    acc = bias.copy()
                    for dy in range(k):
                        sy = y + dy - p
                        if sy < 0 or sy >= h:
                            continue
                        for dx in range(k):
                            sx = xx + dx - p
                            if sx < 0 or sx >= width:
                                continue
                            for ci in range(c_in):
                                v = x[bi, sy, sx, ci]
                                for co in range(c_out):
                                    acc[co] += v * w[dy, dx, ci, co]
                    for co in range(c_out):
                        out[bi, y, xx, co] = acc[co]

    def conv_same_nhwc(x: np.ndarray, w_khwc: np.ndarray, bias: np.ndarray) -> np.ndarray:
        """x (B,H,W,Cin) float64 contiguous; w (k,k,Cin,Cout); returns (B,H,W,Cout)."""
        out = np.empty(x.shape[:3] + (w_khwc.shape[3],))
        _conv_same_nhwc(np.ascontiguousarray(x), w_khwc, bias, out)
        return out

else:
    conv_same_nhwc = None
