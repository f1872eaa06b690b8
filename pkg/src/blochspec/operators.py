"""Periodic matrix differential expressions and their mean-coefficient data.

The operator acts on m-vector functions as

    l(y) = y^(n) + P_2(x) y^(n-2) + P_3(x) y^(n-3) + ... + P_n(x) y,

with 1-periodic matrix coefficients stored as finite Fourier series
P_nu(x) = sum_q Chat_q exp(2i pi q x).  The mean C of P_2 (its q = 0 mode)
must have simple eigenvalues; its eigensystem drives the closed-form
spectrum of the constant-coefficient fiber operator and all asymptotic
checks downstream.

Quasimomentum convention: the fiber parameter t is a plain (possibly
complex) scalar; t and t + 2*pi label the same fiber.  Real parts are kept
in the fundamental window (-h, 2*pi - h] by :func:`wrap_quasimomentum`.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMeanMatrix, MalformedSpec

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FourierMatrixSeries:
    """Band-limited 1-periodic m x m matrix function.

    ``modes[q + bandwidth]`` is the coefficient of exp(2i pi q x) for
    q = -bandwidth .. bandwidth.
    """

    bandwidth: int
    modes: np.ndarray  # (2*bandwidth+1, m, m) complex

    def __post_init__(self):
        modes = np.ascontiguousarray(self.modes, dtype=np.complex128)
        object.__setattr__(self, "modes", modes)
        if modes.ndim != 3 or modes.shape[0] != 2 * self.bandwidth + 1:
            raise MalformedSpec(
                f"mode array shape {modes.shape} inconsistent with bandwidth {self.bandwidth}"
            )
        if modes.shape[1] != modes.shape[2]:
            raise MalformedSpec("coefficient matrices must be square")

    @property
    def dim(self):
        return self.modes.shape[1]

    def mode(self, q):
        """Coefficient matrix of exp(2i pi q x); zero outside the band."""
        if abs(q) > self.bandwidth:
            return np.zeros((self.dim, self.dim), dtype=np.complex128)
        return self.modes[q + self.bandwidth]

    def __call__(self, x):
        qs = np.arange(-self.bandwidth, self.bandwidth + 1)
        phases = np.exp(2j * np.pi * np.multiply.outer(np.asarray(x), qs))
        return np.tensordot(phases, self.modes, axes=(-1, 0))

    @staticmethod
    def constant(matrix):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=np.complex128))
        return FourierMatrixSeries(0, matrix[None, :, :])

    @staticmethod
    def from_modes(mode_map, m):
        """Build from a {q: matrix} mapping."""
        if not mode_map:
            return FourierMatrixSeries(0, np.zeros((1, m, m), dtype=np.complex128))
        bw = max(abs(int(q)) for q in mode_map)
        modes = np.zeros((2 * bw + 1, m, m), dtype=np.complex128)
        for q, mat in mode_map.items():
            mat = np.asarray(mat, dtype=np.complex128)
            if mat.shape != (m, m):
                raise MalformedSpec(f"mode {q} has shape {mat.shape}, expected {(m, m)}")
            modes[int(q) + bw] += mat
        return FourierMatrixSeries(bw, modes)


@dataclass(frozen=True)
class OperatorSpec:
    """Order-n, dimension-m expression with band-limited periodic coefficients.

    ``coeffs`` maps nu in {2, .., n} to the series for P_nu; absent entries
    are zero.
    """

    n: int
    m: int
    coeffs: dict  # {nu: FourierMatrixSeries}

    def __post_init__(self):
        if self.n < 2:
            raise MalformedSpec(f"order n must be >= 2, got {self.n}")
        if self.m < 1:
            raise MalformedSpec(f"dimension m must be >= 1, got {self.m}")
        for nu, series in self.coeffs.items():
            if not 2 <= nu <= self.n:
                raise MalformedSpec(f"coefficient index nu={nu} outside 2..{self.n}")
            if series.dim != self.m:
                raise MalformedSpec(
                    f"P_{nu} is {series.dim}x{series.dim}, operator dimension is {self.m}"
                )

    @property
    def max_bandwidth(self):
        return max((s.bandwidth for s in self.coeffs.values()), default=0)

    def coefficient(self, nu):
        series = self.coeffs.get(nu)
        if series is None:
            return FourierMatrixSeries(
                0, np.zeros((1, self.m, self.m), dtype=np.complex128)
            )
        return series

    def packed_modes(self):
        """All coefficients on a common bandwidth grid, shape (n-1, 2Q+1, m, m)."""
        q = self.max_bandwidth
        out = np.zeros((self.n - 1, 2 * q + 1, self.m, self.m), dtype=np.complex128)
        for nu, series in self.coeffs.items():
            lo = q - series.bandwidth
            out[nu - 2, lo : lo + 2 * series.bandwidth + 1] = series.modes
        return out

    def mean_matrix(self):
        """C = mean of P_2 over one period (its q = 0 Fourier mode)."""
        return np.array(self.coefficient(2).mode(0))


@dataclass(frozen=True)
class MeanEigensystem:
    """Simple eigensystem of the mean matrix C.

    Right eigenvectors ``v[:, j]`` are unit norm; left eigenvectors
    ``u[:, j]`` (eigenvectors of C* for the conjugate eigenvalues) are scaled
    so that <u_j, v_j> = 1, where <a, b> = sum_i a_i * conj(b_i).
    """

    C: np.ndarray
    mu: np.ndarray  # (m,) complex, sorted by (Re, Im)
    v: np.ndarray  # (m, m) right eigenvectors as columns
    u: np.ndarray  # (m, m) left eigenvectors as columns

    @property
    def m(self):
        return self.mu.shape[0]

    def min_gap(self):
        if self.m == 1:
            return np.inf
        diff = np.abs(self.mu[:, None] - self.mu[None, :])
        return diff[~np.eye(self.m, dtype=bool)].min()


def validate_spec(raw, gap_tol=1e-8):
    """Check structural consistency and return the eigensystem of C.

    Raises DegenerateMeanMatrix when the smallest eigenvalue gap of C falls
    below ``gap_tol * (1 + ||C||)``: the downstream asymptotics all assume
    simple mean eigenvalues.
    """
    if not isinstance(raw, OperatorSpec):
        raise MalformedSpec(f"expected OperatorSpec, got {type(raw).__name__}")
    c = raw.mean_matrix()
    mu, vr = np.linalg.eig(c)
    order = np.lexsort((mu.imag, mu.real))
    mu = mu[order]
    vr = vr[:, order]
    scale = 1.0 + np.linalg.norm(c, 2)
    if raw.m > 1:
        diff = np.abs(mu[:, None] - mu[None, :])
        gap = diff[~np.eye(raw.m, dtype=bool)].min()
        if gap <= gap_tol * scale:
            raise DegenerateMeanMatrix(
                f"mean-matrix eigenvalue gap {gap:.3e} below {gap_tol:.1e} * {scale:.3e}"
            )
    vr = vr / np.linalg.norm(vr, axis=0, keepdims=True)
    # Left eigenvectors: columns of inv(vr)^H satisfy C^H u_j = conj(mu_j) u_j
    # and <u_j, v_j> = 1 by construction.
    u = np.linalg.inv(vr).conj().T
    return MeanEigensystem(C=c, mu=mu, v=vr, u=u)


def quasiperiodic_norm_factor(t):
    """(integral_0^1 |exp(i t x)|^2 dx)^(-1/2); equals 1 for real t."""
    tau = np.imag(t)
    if abs(tau) < 1e-12:
        # removable limit; second-order correction keeps it smooth in tau
        return 1.0 / np.sqrt(1.0 - tau + tau * tau * (2.0 / 3.0))
    integral = (1.0 - np.exp(-2.0 * tau)) / (2.0 * tau)
    return 1.0 / np.sqrt(integral)


def unperturbed_eigenvalue(sys, n, k, j, t):
    """Closed-form fiber eigenvalue of the constant-coefficient operator:
    (i(2 pi k + t))^n + mu_j (i(2 pi k + t))^(n-2)."""
    if not 1 <= j <= sys.m:
        raise IndexError(f"band index j={j} outside 1..{sys.m}")
    z = 1j * (TWO_PI * k + t)
    return z**n + sys.mu[j - 1] * z ** (n - 2)


def unperturbed_eigenpair(sys, n, k, j, t, K):
    """Eigenvalue and single-mode unit-cell profile of the constant-coefficient
    fiber operator, as ((2K+1, m) coefficient array over modes -K..K)."""
    lam = unperturbed_eigenvalue(sys, n, k, j, t)
    profile = np.zeros((2 * K + 1, sys.m), dtype=np.complex128)
    if abs(k) > K:
        raise IndexError(f"mode index k={k} outside truncation -{K}..{K}")
    profile[k + K] = quasiperiodic_norm_factor(t) * sys.v[:, j - 1]
    return lam, profile


def wrap_quasimomentum(t, h=0.0):
    """Shift Re t by multiples of 2*pi into the window (-h, 2*pi - h]."""
    re = np.real(t)
    shifted = np.mod(re + h, TWO_PI) - h
    if np.isclose(shifted, -h):
        shifted += TWO_PI
    return shifted + 1j * np.imag(t) if np.iscomplexobj(np.asarray(t)) else shifted


# ---------------------------------------------------------------------------
# Operator file format (JSON; complex entries as [re, im] pairs).
# ---------------------------------------------------------------------------

def _matrix_to_json(mat):
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(mat)]


def _matrix_from_json(data, m, context):
    try:
        arr = np.array(
            [[complex(entry[0], entry[1]) for entry in row] for row in data],
            dtype=np.complex128,
        )
    except (TypeError, IndexError) as exc:
        raise MalformedSpec(f"{context}: entries must be [re, im] pairs") from exc
    if arr.shape != (m, m):
        raise MalformedSpec(f"{context}: matrix shape {arr.shape}, expected {(m, m)}")
    return arr


def operator_to_dict(spec):
    return {
        "n": spec.n,
        "m": spec.m,
        "coefficients": [
            {
                "nu": nu,
                "modes": [
                    {"q": q - series.bandwidth, "matrix": _matrix_to_json(series.modes[q])}
                    for q in range(2 * series.bandwidth + 1)
                    if np.any(series.modes[q] != 0)
                ],
            }
            for nu, series in sorted(spec.coeffs.items())
        ],
    }


def operator_from_dict(data):
    try:
        n = int(data["n"])
        m = int(data["m"])
        entries = data.get("coefficients", [])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedSpec(f"operator document missing n/m: {exc}") from exc
    coeffs = {}
    for entry in entries:
        try:
            nu = int(entry["nu"])
            raw_modes = entry["modes"]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedSpec(f"bad coefficient entry: {exc}") from exc
        mode_map = {}
        for item in raw_modes:
            q = int(item["q"])
            mat = _matrix_from_json(item["matrix"], m, f"P_{nu} mode q={q}")
            mode_map[q] = mode_map.get(q, 0) + mat
        coeffs[nu] = FourierMatrixSeries.from_modes(mode_map, m)
    return OperatorSpec(n=n, m=m, coeffs=coeffs)


def save_operator(spec, path):
    with open(path, "w") as fh:
        json.dump(operator_to_dict(spec), fh, indent=1)
        fh.write("\n")


def load_operator(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MalformedSpec(f"{path}: not valid JSON ({exc})") from exc
    return operator_from_dict(data)
