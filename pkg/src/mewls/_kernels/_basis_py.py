"""Pure-NumPy basis kernel, the fallback when the compiled extension is absent.

Both backends implement the same contract: given a knot vector, a degree d
and evaluation points inside the basis validity interval, return the span
index of each point and the d+1 basis values that are possibly nonzero
there.  The algorithm is the standard triangular scheme; here it is
vectorised over the points, so the Python-level loops run only over the
degree.
"""

import numpy as np


def find_spans(knots, degree, t):
    """Span index j per point, with knots[j] <= t < knots[j+1] (half-open).

    Points at the right end of the validity interval are clamped onto the
    last span that carries basis support, which matches the convention that
    the final step function covers the right endpoint.
    """
    n = knots.size - degree - 1
    spans = np.searchsorted(knots, t, side="right").astype(np.intp) - 1
    np.clip(spans, degree, n - 1, out=spans)
    return spans


def basis_span_values(knots, degree, t):
    """Spans plus the (len(t), degree+1) table of nonzero basis values."""
    knots = np.ascontiguousarray(knots, dtype=np.float64)
    t = np.ascontiguousarray(t, dtype=np.float64)
    spans = find_spans(knots, degree, t)
    m = t.size
    values = np.zeros((m, degree + 1), dtype=np.float64)
    values[:, 0] = 1.0
    left = np.empty((m, degree + 1), dtype=np.float64)
    right = np.empty((m, degree + 1), dtype=np.float64)
    for j in range(1, degree + 1):
        left[:, j] = t - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - t
        saved = np.zeros(m, dtype=np.float64)
        for r in range(j):
            den = right[:, r + 1] + left[:, j - r]
            # zero-width supports contribute nothing (0/0 convention)
            safe = np.where(den != 0.0, den, 1.0)
            temp = np.where(den != 0.0, values[:, r] / safe, 0.0)
            values[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        values[:, j] = saved
    return spans, values
