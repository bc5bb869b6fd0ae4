"""Uniform grids and sampled real fields.

Everything in the laboratory lives on a uniform grid with a power-of-two
node count.  Time evolution treats the grid as periodic and differentiates
through the FFT; the profile solvers reuse the same nodes as a truncated
line with explicit boundary closures.  This module owns the geometry,
spectral derivatives, quadrature, and trigonometric resampling; it knows
nothing about the equation.
"""

import numpy as np

from .errors import GridMismatch, RangeError

__all__ = ["Grid", "Field"]


class Grid:
    """Uniform periodic grid on [-L/2, L/2) with n = 2^k nodes.

    Attributes
    ----------
    length : float
        Window length L.
    n : int
        Node count, a power of two (>= 16 so spectral stencils make sense).
    dx : float
        Spacing L/n.
    x : ndarray
        Nodes x_j = -L/2 + j dx, ascending.
    k : ndarray
        rfft wavenumbers 2*pi*j/L, j = 0..n/2.
    """

    __slots__ = ("length", "n", "dx", "x", "k", "_nyq")

    def __init__(self, length, n):
        length = float(length)
        if not np.isfinite(length) or length <= 0:
            raise RangeError("grid length must be positive and finite", length=length)
        n = int(n)
        if n < 16 or (n & (n - 1)) != 0:
            raise RangeError("grid n must be a power of two >= 16", n=n)
        self.length = length
        self.n = n
        self.dx = length / n
        self.x = -0.5 * length + self.dx * np.arange(n)
        self.k = 2.0 * np.pi * np.fft.rfftfreq(n, d=self.dx)
        self._nyq = n // 2  # index of the Nyquist mode in rfft layout
        self.x.flags.writeable = False
        self.k.flags.writeable = False

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and other.n == self.n
            and other.length == self.length
        )

    def __hash__(self):
        return hash((self.length, self.n))

    def __repr__(self):
        return "Grid(length=%r, n=%d)" % (self.length, self.n)

    # -- quadrature ------------------------------------------------------

    def integrate(self, values):
        """Periodic rectangle rule dx * sum, spectrally accurate for smooth
        periodic data and exponentially accurate for decaying profiles."""
        return self.dx * float(np.sum(values))

    def inner(self, f, g):
        return self.dx * float(np.dot(f, g))

    def norm2(self, values):
        """L2 norm."""
        return float(np.sqrt(self.dx * np.dot(values, values)))

    # -- spectral calculus ----------------------------------------------

    def deriv(self, values, order=1):
        """Spectral derivative of periodic samples.

        The Nyquist mode is zeroed for odd orders: its derivative is not
        representable on the grid and keeping it injects a spurious
        sawtooth.
        """
        vh = np.fft.rfft(values)
        vh *= (1j * self.k) ** order
        if order % 2 == 1:
            vh[self._nyq] = 0.0
        return np.fft.irfft(vh, n=self.n)

    def resample(self, values, points):
        """Evaluate the trigonometric interpolant of periodic samples at
        arbitrary points (vectorized, chunked to bound memory)."""
        points = np.asarray(points, dtype=float)
        coef = np.fft.rfft(values) / self.n
        # weight 2 for the doubled modes, 1 for DC and Nyquist
        w = np.full(coef.shape, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        cw = coef * w
        theta = points - self.x[0]
        out = np.empty(points.shape, dtype=float)
        flat_theta = theta.ravel()
        flat_out = out.ravel()
        chunk = max(1, 8_000_000 // (len(coef) * 16))
        for i in range(0, flat_theta.size, chunk):
            block = flat_theta[i : i + chunk, None] * self.k[None, :]
            flat_out[i : i + chunk] = (np.exp(1j * block) @ cw).real
        return out

    def reflect(self, values):
        """Samples of y -> f(-y) on the same grid (periodic convention)."""
        out = np.empty_like(values)
        out[0] = values[0]
        out[1:] = values[:0:-1]
        return out


class Field:
    """A real-valued sample vector bound to its grid."""

    __slots__ = ("grid", "values")

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.n,):
            raise GridMismatch(
                "field shape %s does not match grid n=%d" % (values.shape, grid.n)
            )
        if not np.all(np.isfinite(values)):
            raise RangeError("field contains non-finite values")
        self.grid = grid
        self.values = values

    def same_grid(self, other):
        if self.grid != other.grid:
            raise GridMismatch(
                "grids differ: %r vs %r" % (self.grid, other.grid)
            )

    def norm2(self):
        return self.grid.norm2(self.values)

    def __repr__(self):
        return "Field(%r, max=%.6g)" % (self.grid, float(np.max(np.abs(self.values))))
