"""Independent reference solutions used by the test-suite.

Nothing here imports the propagators under test: the Crank-Nicolson solver
works on a plain finite-difference matrix and the Gaussian solution comes
from solving the Riccati equation for a quadratic phase by hand.
"""
from __future__ import annotations

import numpy as np
from scipy import integrate, sparse
from scipy.sparse.linalg import splu


def laplacian_4th(m: int, h: float) -> sparse.csc_matrix:
    """Fourth-order central second difference with zero Dirichlet ghosts."""
    main = np.full(m, -30.0)
    one = np.full(m - 1, 16.0)
    two = np.full(m - 2, -1.0)
    D = sparse.diags([two, one, main, one, two], [-2, -1, 0, 1, 2], format="csc")
    return D / (12.0 * h * h)


def crank_nicolson(x: np.ndarray, psi0: np.ndarray, t: float, steps: int = 400,
                   potential=None) -> np.ndarray:
    """``exp(-i t (p^2 - x^2 + V)) psi0`` on the uniform 1D mesh ``x``.

    The state must vanish well before the ends of ``x``.  The scheme is
    second order in the step and fourth order in the mesh width.
    """
    h = float(x[1] - x[0])
    w = -x ** 2 if potential is None else potential(x) - x ** 2
    H = -laplacian_4th(len(x), h) + sparse.diags(w, format="csc")
    dt = t / steps
    eye = sparse.identity(len(x), dtype=complex, format="csc")
    lhs = splu((eye + 0.5j * dt * H).tocsc())
    rhs = (eye - 0.5j * dt * H).tocsr()
    psi = np.asarray(psi0, dtype=complex).copy()
    for _ in range(steps):
        psi = lhs.solve(rhs @ psi)
    return psi


def gaussian_exact(x: np.ndarray, t: float) -> np.ndarray:
    """Free evolution of ``pi^{-1/4} exp(-x^2/2)`` in one dimension.

    With ``psi = exp(i (alpha x^2 + gamma))`` the equation reduces to
    ``alpha' = 1 - 4 alpha^2`` and ``gamma' = 2 i alpha`` with ``alpha(0) = i/2``.
    Hence ``alpha = tanh(2t + i pi/4) / 2``; the amplitude is the square root
    of ``cos(pi/4) / cosh(2t + i pi/4)``, whose real part stays positive so the
    principal branch is continuous in ``t``.
    """
    z = 2.0 * t + 0.25j * np.pi
    amp = np.sqrt(np.cos(np.pi / 4) / np.cosh(z))
    return np.pi ** -0.25 * amp * np.exp(0.5j * np.tanh(z) * x ** 2)


def classical_orbit(x0, p0, t):
    """Hamilton flow of ``p^2 - x^2`` with ``dx/dt = 2p``."""
    return np.cosh(2 * t) * np.asarray(x0) + np.sinh(2 * t) * np.asarray(p0)


def line_integral(f, theta: float, s: float, reach: float) -> float:
    """``int f(s n + t d) dt`` by adaptive quadrature, ``d = (cos, sin)``."""
    d = np.array([np.cos(theta), np.sin(theta)])
    n = np.array([-np.sin(theta), np.cos(theta)])
    return integrate.quad(lambda u: float(f(s * n + u * d)), -reach, reach,
                          epsabs=1e-12, epsrel=1e-10, limit=200)[0]


def l2_distance(a: np.ndarray, b: np.ndarray, cell: float) -> float:
    return float(np.sqrt(np.sum(np.abs(a - b) ** 2) * cell))
